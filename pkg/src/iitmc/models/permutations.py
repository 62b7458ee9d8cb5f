"""Weighted permutations with transposition neighborhoods."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..core import DiscreteTarget, make_rng

SCENARIOS = {
    "I": (0.1, 0.5),
    "II": (0.5, 0.1),
}


@dataclass
class PermutationWeights:
    """``log W[k, j] = -eta phi_k |j - mu_k| log p`` (item ``k``, position ``j``; 1-based in the formula)."""

    p: int
    eta: float
    mu: np.ndarray
    phi: np.ndarray
    scenario: str
    seed: int | None
    log_W: np.ndarray

    @classmethod
    def simulate(cls, p: int, eta: float, scenario: str = "I", seed: int | None = 0) -> "PermutationWeights":
        if scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {sorted(SCENARIOS)}")
        spread, phi_lo = SCENARIOS[scenario]
        rng = make_rng(seed)
        k = np.arange(1, p + 1, dtype=float)
        mu = rng.uniform(k - spread, k + spread)
        phi = rng.uniform(phi_lo, 1.0, p)
        return cls.from_parameters(p, eta, mu, phi, scenario, seed)

    @classmethod
    def from_parameters(cls, p, eta, mu, phi, scenario="custom", seed=None) -> "PermutationWeights":
        mu = np.asarray(mu, dtype=float)
        phi = np.asarray(phi, dtype=float)
        j = np.arange(1, p + 1, dtype=float)
        log_W = -eta * phi[:, None] * np.abs(j[None, :] - mu[:, None]) * math.log(p)
        return cls(int(p), float(eta), mu, phi, scenario, seed, log_W)


class PermutationTarget(DiscreteTarget):
    """``pi(tau) ∝ prod_k W(k, tau^{-1}(k))``.

    A state is a tuple ``tau`` with ``tau[i]`` the (0-based) item at position
    ``i``. Neighbors are all transpositions of two positions, ordered by
    ``(i, j)`` with ``i < j``.
    """

    enumerable = True

    def __init__(self, weights: PermutationWeights):
        if weights.p < 3:
            raise ValueError("p must be >= 3")
        self.weights = weights
        self.p = weights.p
        self.dimension_p = float(weights.p)
        self._log_W = weights.log_W
        self._iu, self._ju = np.triu_indices(self.p, 1)
        self._positions = np.arange(self.p)

    def log_mass(self, tau) -> float:
        return float(self._log_W[tau, self._positions].sum())

    def neighbors(self, tau) -> list:
        out = []
        for i, j in zip(self._iu, self._ju):
            t = list(tau)
            t[i], t[j] = t[j], t[i]
            out.append(tuple(t))
        return out

    def neighbor_at(self, tau, k: int) -> tuple:
        i, j = self._iu[k], self._ju[k]
        t = list(tau)
        t[i], t[j] = t[j], t[i]
        return tuple(t)

    def neighbor_count(self, tau) -> int:
        return self.p * (self.p - 1) // 2

    def transposition_deltas(self, tau) -> np.ndarray:
        """Log-mass change of every transposition, in neighbor order."""
        D = self._log_W[np.asarray(tau)]  # D[i, j] = log W(item at i, position j)
        i, j = self._iu, self._ju
        return D[i, j] + D[j, i] - D[i, i] - D[j, j]

    def neighbor_log_masses(self, tau):
        return self.neighbors(tau), self.log_mass(tau) + self.transposition_deltas(tau)

    def states(self) -> list:
        return list(itertools.permutations(range(self.p)))

    def state_count(self) -> int:
        return math.factorial(self.p)

    def encode(self, tau) -> str:
        return "-".join(str(v + 1) for v in tau)

    def decode(self, s: str) -> tuple:
        tau = tuple(int(v) - 1 for v in s.split("-"))
        if sorted(tau) != list(range(self.p)):
            raise ValueError(f"not a permutation of 1..{self.p}: {s!r}")
        return tau

    @staticmethod
    def position_of(tau, item: int) -> int:
        """1-based position of 1-based ``item``."""
        return tau.index(item - 1) + 1


def weighted_permutations(p: int, eta: float, scenario: str = "I", seed: int | None = 0) -> PermutationTarget:
    return PermutationTarget(PermutationWeights.simulate(p, eta, scenario, seed))
