"""Finite target distributions with a symmetric neighborhood structure.

A target supplies an unnormalized log-mass and a deterministic neighbor
ordering. Everything downstream works with log-mass *differences*, so the
normalizing constant never has to be known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Hashable, Sequence

import numpy as np
from scipy.special import logsumexp


class IITError(Exception):
    """Base class for errors raised by this package."""


class StructuralError(IITError):
    """The target violates the neighborhood contract (empty or asymmetric neighborhoods)."""


class ContractError(IITError):
    """An operation was called with inputs outside its documented contract."""


class ResourceError(IITError):
    """A dense computation was requested on a state space above the size cap."""


class IrreducibilityError(IITError):
    """The neighborhood graph is not connected."""


def make_rng(seed: int | None) -> np.random.Generator:
    """PCG64 generator seeded through ``SeedSequence``.

    Replicate ``i`` of an experiment with base seed ``s`` uses ``make_rng(s + i)``.
    ``SeedSequence`` hashes its entropy, so neighboring integer seeds give
    statistically independent streams.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


class DiscreteTarget:
    """Unnormalized distribution on a finite space with neighborhoods.

    Subclasses implement :meth:`log_mass` and :meth:`neighbors`. Enumerable
    targets also implement :meth:`states`, returning every state in a fixed
    total order. ``dimension_p`` is the problem-size parameter used as the
    base of all ``p^nu`` style exponents.
    """

    dimension_p: float = 2.0
    enumerable: bool = False

    def log_mass(self, x) -> float:
        raise NotImplementedError

    def neighbors(self, x) -> list:
        raise NotImplementedError

    def states(self) -> list:
        raise ContractError(f"{type(self).__name__} is not enumerable")

    def state_count(self) -> int | None:
        return len(self.states()) if self.enumerable else None

    def neighbor_count(self, x) -> int:
        return len(self.neighbors(x))

    def neighbor_at(self, x, i: int):
        """The ``i``-th neighbor of ``x`` in neighbor order."""
        return self.neighbors(x)[i]

    def neighbor_log_masses(self, x) -> tuple[list, np.ndarray]:
        """Neighbors of ``x`` and their log-masses, in neighbor order."""
        nbrs = self.neighbors(x)
        return nbrs, np.fromiter((self.log_mass(y) for y in nbrs), float, len(nbrs))

    def encode(self, x) -> str:
        """String form of a state for CSV output."""
        return str(x)

    def evaluator(self) -> "Evaluator":
        """Fresh per-chain evaluator. Never share one between chains."""
        return Evaluator(self)


class Evaluator:
    """Per-chain access to a target that counts posterior evaluations.

    Targets with incremental update schemes override :meth:`DiscreteTarget.evaluator`
    to return a subclass that keeps mutable scratch; the base class is stateless
    apart from the counter.
    """

    def __init__(self, target: DiscreteTarget):
        self.target = target
        self.evals = 0

    def log_mass(self, x) -> float:
        self.evals += 1
        return self.target.log_mass(x)

    def neighborhood(self, x) -> tuple[list, np.ndarray]:
        nbrs, lm = self.target.neighbor_log_masses(x)
        self.evals += len(nbrs)
        return nbrs, lm


class GraphTarget(DiscreteTarget):
    """Target on states ``0..n-1`` with explicit adjacency lists.

    Neighbor lists are sorted ascending, which fixes the neighbor order and
    makes "lowest index" tie-breaking well defined.
    """

    enumerable = True

    def __init__(self, adjacency: Sequence[Sequence[int]], log_masses, dimension_p: float = 2.0):
        self.adjacency = [sorted(int(j) for j in nb) for nb in adjacency]
        self.log_masses = np.asarray(log_masses, dtype=float)
        if self.log_masses.shape != (len(self.adjacency),):
            raise ValueError("need one log-mass per state")
        if not np.all(np.isfinite(self.log_masses)):
            raise ValueError("log-masses must be finite")
        if dimension_p <= 1:
            raise ValueError("dimension_p must exceed 1")
        self.dimension_p = float(dimension_p)
        self._nbr_arrays = [np.asarray(nb, dtype=np.intp) for nb in self.adjacency]

    def log_mass(self, x) -> float:
        return float(self.log_masses[x])

    def neighbors(self, x) -> list:
        return self.adjacency[x]

    def neighbor_count(self, x) -> int:
        return len(self.adjacency[x])

    def neighbor_log_masses(self, x):
        return self.adjacency[x], self.log_masses[self._nbr_arrays[x]]

    def states(self) -> list:
        return list(range(len(self.adjacency)))

    def state_count(self) -> int:
        return len(self.adjacency)


@dataclass
class LocalProfile:
    center: Hashable
    log_mass_center: float
    neighbors: list
    neighbor_log_masses: np.ndarray
    log_ratios: np.ndarray
    log_h_terms: np.ndarray
    log_Zh: float


def _profile(center, lm_center: float, nbrs: list, lm_nbrs: np.ndarray, log_h) -> LocalProfile:
    if len(nbrs) == 0:
        raise StructuralError(f"state {center!r} has an empty neighborhood")
    log_ratios = lm_nbrs - lm_center
    terms = log_h(log_ratios)
    m = terms.max()
    # scipy's logsumexp carries heavy per-call overhead at this size
    log_Z = float(m + np.log(np.exp(terms - m).sum())) if np.isfinite(m) else float(logsumexp(terms))
    return LocalProfile(center, lm_center, nbrs, lm_nbrs, log_ratios, terms, log_Z)


def local_profile(target: DiscreteTarget, rule, x, evaluator: Evaluator | None = None) -> LocalProfile:
    """Log ratios, log h-terms and ``log Z_h(x)`` for the neighborhood of ``x``.

    Uses one log-mass evaluation for ``x`` and one per neighbor.
    """
    ev = evaluator if evaluator is not None else target.evaluator()
    lm_x = ev.log_mass(x)
    nbrs, lm = ev.neighborhood(x)
    return _profile(x, lm_x, nbrs, lm, rule.log_eval)


def check_symmetry(target: DiscreteTarget, states: Sequence[Any] | None = None) -> None:
    """Raise :class:`StructuralError` unless ``y in N(x) <=> x in N(y)`` and ``x not in N(x)``.

    Exhaustive over ``target.states()`` when ``states`` is omitted.
    """
    if states is None:
        states = target.states()
    for x in states:
        nbrs = target.neighbors(x)
        if x in nbrs:
            raise StructuralError(f"state {x!r} is its own neighbor")
        if len(set(nbrs)) != len(nbrs):
            raise StructuralError(f"duplicate neighbors at {x!r}")
        for y in nbrs:
            if x not in target.neighbors(y):
                raise StructuralError(f"{y!r} in N({x!r}) but not conversely")


def is_connected(adjacency: Sequence[Sequence[int]]) -> bool:
    n = len(adjacency)
    if n == 0:
        return False
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adjacency[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return bool(seen.all())


def log_base(value: float, p: float) -> float:
    return value / math.log(p)
