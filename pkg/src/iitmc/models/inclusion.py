"""Targets on inclusion vectors ``{0,1}^p`` stored as integer bitmasks.

Bit ``i`` of the mask is variable ``i + 1``. Enumeration order ``0..2^p - 1``
is therefore lexicographic in ``(x_p, ..., x_1)``.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import ContractError, DiscreteTarget

ADD, DELETE, SWAP = 0, 1, 2


def members(x: int) -> list[int]:
    """Indices (0-based) of the variables included in ``x``."""
    out = []
    i = 0
    while x:
        if x & 1:
            out.append(i)
        x >>= 1
        i += 1
    return out


class InclusionTarget(DiscreteTarget):
    """Base class providing single-flip neighborhoods and the add/delete/swap partition.

    Args:
        p: Number of variables.
        swaps: Also treat swap moves (one variable out, one in) as neighbors.
        size_cap: Optional maximum model size; additions beyond it are not moves.
    """

    def __init__(self, p: int, swaps: bool = False, size_cap: int | None = None):
        if p < 1:
            raise ValueError("p must be >= 1")
        self.p = int(p)
        self.dimension_p = float(max(p, 2))
        self.swaps = bool(swaps)
        self.size_cap = size_cap
        self._full = (1 << self.p) - 1

    def _can_add(self, x: int) -> bool:
        return self.size_cap is None or x.bit_count() < self.size_cap

    def flip_neighbors(self, x: int) -> list[int]:
        can_add = self._can_add(x)
        return [x ^ (1 << i) for i in range(self.p) if (x >> i) & 1 or can_add]

    def neighbor_count(self, x: int) -> int:
        k = x.bit_count()
        n = self.p if self._can_add(x) else k
        return n + (k * (self.p - k) if self.swaps else 0)

    def swap_neighbors(self, x: int) -> list[int]:
        ins = members(x)
        outs = [j for j in range(self.p) if not (x >> j) & 1]
        return [x ^ (1 << i) ^ (1 << j) for i in ins for j in outs]

    def neighbors(self, x: int) -> list[int]:
        nb = self.flip_neighbors(x)
        if self.swaps:
            nb += self.swap_neighbors(x)
        return nb

    def move_partition(self, x: int) -> tuple[list, list, list]:
        """Additions, deletions and swaps reachable from ``x`` (swaps always included)."""
        can_add = self._can_add(x)
        adds = [x | (1 << j) for j in range(self.p) if not (x >> j) & 1] if can_add else []
        dels = [x & ~(1 << i) for i in range(self.p) if (x >> i) & 1]
        return adds, dels, self.swap_neighbors(x)

    def move_counts(self, x: int) -> tuple[int, int, int]:
        k = x.bit_count()
        n_add = self.p - k if self._can_add(x) else 0
        return n_add, k, k * (self.p - k)

    def random_move(self, x: int, kind: int, rng: np.random.Generator) -> int:
        k = x.bit_count()
        if kind == ADD:
            outs = [j for j in range(self.p) if not (x >> j) & 1]
            return x | (1 << outs[int(rng.integers(len(outs)))])
        ins = members(x)
        if kind == DELETE:
            return x & ~(1 << ins[int(rng.integers(k))])
        if kind == SWAP:
            outs = [j for j in range(self.p) if not (x >> j) & 1]
            i = ins[int(rng.integers(len(ins)))]
            j = outs[int(rng.integers(len(outs)))]
            return x ^ (1 << i) ^ (1 << j)
        raise ContractError(f"unknown move kind {kind}")

    def states(self) -> list[int]:
        if self.size_cap is None:
            return list(range(1 << self.p))
        return [x for x in range(1 << self.p) if x.bit_count() <= self.size_cap]

    def state_count(self) -> int:
        if self.size_cap is None:
            return 1 << self.p
        return sum(math.comb(self.p, k) for k in range(min(self.size_cap, self.p) + 1))

    @property
    def enumerable(self) -> bool:
        return True

    def encode(self, x: int) -> str:
        """Bit string ``x_1 x_2 ... x_p``."""
        return "".join("1" if (x >> i) & 1 else "0" for i in range(self.p))

    def decode(self, s: str) -> int:
        s = s.strip()
        if len(s) != self.p or set(s) - {"0", "1"}:
            raise ValueError(f"expected a {self.p}-character 0/1 string, got {s!r}")
        return sum(1 << i for i, c in enumerate(s) if c == "1")

    def from_members(self, variables) -> int:
        """Mask from 1-based variable indices."""
        return sum(1 << (int(v) - 1) for v in variables)


class TwoModeHypercube(InclusionTarget):
    """``pi(x) ∝ r^{-(x_2 + ... + x_p)}``: the empty model and ``{1}`` tie for the mode."""

    def __init__(self, p: int, r: float, swaps: bool = False):
        if p < 2:
            raise ValueError("p must be >= 2")
        if r < 1:
            raise ValueError("r must be >= 1")
        super().__init__(p, swaps=swaps)
        self.r = float(r)
        self._log_r = math.log(r)

    def log_mass(self, x: int) -> float:
        return -(x >> 1).bit_count() * self._log_r

    def neighbor_log_masses(self, x: int):
        nb = self.neighbors(x)
        return nb, np.fromiter(((-(y >> 1).bit_count()) * self._log_r for y in nb), float, len(nb))


def two_mode_hypercube(p: int, r: float, swaps: bool = False) -> TwoModeHypercube:
    return TwoModeHypercube(p, r, swaps)
