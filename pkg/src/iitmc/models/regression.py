"""Bayesian variable selection under a g-prior.

``log pi(x) = -c0 |x| log p - (|x|/2) log(1+g) - (n/2) log(1 + g (1 - R_x^2))``

with ``R_x^2`` the centered R-squared of regressing ``Y`` on the selected
columns. Everything is computed from the Gram matrix ``G = L'L``, so one
evaluation costs ``O(|x|^2)`` once a factor of ``G[S, S]`` is available.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..core import DiscreteTarget, Evaluator, make_rng
from .inclusion import InclusionTarget, members

ONE_MINUS_R2_FLOOR = 1e-12
REFACTOR_EVERY = 256
AR_RHO = math.exp(-1.0)


@dataclass
class RegressionData:
    L: np.ndarray
    Y: np.ndarray
    beta: np.ndarray
    snr: float
    seed: int | None
    s_star: int

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def p(self) -> int:
        return self.L.shape[1]

    def to_csv(self, path) -> None:
        """Write ``y,x1..xp`` rows preceded by ``# key=value`` metadata lines.

        Floats use ``repr`` so a round trip is exact.
        """
        with open(path, "w", newline="") as fh:
            fh.write(f"# n={self.n}\n# p={self.p}\n# s_star={self.s_star}\n")
            fh.write(f"# snr={self.snr!r}\n# seed={self.seed}\n")
            fh.write("# beta=" + ",".join(repr(float(b)) for b in self.beta) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y", *(f"x{j + 1}" for j in range(self.p))])
            for yi, row in zip(self.Y, self.L):
                w.writerow([repr(float(yi)), *(repr(float(v)) for v in row)])

    @classmethod
    def from_csv(cls, path) -> "RegressionData":
        meta = {}
        rows = []
        with open(path, newline="") as fh:
            lines = iter(fh)
            for line in lines:
                if line.startswith("#"):
                    key, _, val = line[1:].strip().partition("=")
                    meta[key.strip()] = val.strip()
                    continue
                break  # header
            for row in csv.reader(lines):
                if row:
                    rows.append([float(v) for v in row])
        arr = np.array(rows, dtype=float)
        beta = np.array([float(b) for b in meta["beta"].split(",")]) if meta.get("beta") else np.zeros(arr.shape[1] - 1)
        seed = None if meta.get("seed", "None") == "None" else int(meta["seed"])
        return cls(arr[:, 1:], arr[:, 0], beta, float(meta.get("snr", "nan")), seed, int(meta.get("s_star", 0)))


def simulate_regression(n: int, p: int, s_star: int, snr: float, seed: int | None = 0) -> RegressionData:
    """AR(1) design with ``corr(L_i, L_j) = e^{-|i-j|}``, causal effects on the first ``s_star`` columns.

    ``beta_j = snr * sqrt(log p / n) * U`` with ``|U| ~ Unif(2, 3)`` and a random sign.
    """
    if not 0 <= s_star <= p:
        raise ValueError("need 0 <= s_star <= p")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    Z = rng.standard_normal((n, p))
    L = np.empty((n, p))
    L[:, 0] = Z[:, 0]
    scale = math.sqrt(1.0 - AR_RHO**2)
    for j in range(1, p):
        L[:, j] = AR_RHO * L[:, j - 1] + scale * Z[:, j]
    mag = rng.uniform(2.0, 3.0, s_star)
    sign = np.where(rng.random(s_star) < 0.5, -1.0, 1.0)
    beta = np.zeros(p)
    beta[:s_star] = snr * math.sqrt(math.log(p) / n) * mag * sign
    Y = L @ beta + rng.standard_normal(n)
    return RegressionData(L, Y, beta, float(snr), seed, int(s_star))


def cholesky_rank_one_update(R: np.ndarray, v: np.ndarray) -> None:
    """In place: lower-triangular ``R`` becomes the factor of ``R R' + v v'``."""
    v = v.copy()
    k = R.shape[0]
    for i in range(k):
        r = math.hypot(R[i, i], v[i])
        c = r / R[i, i]
        s = v[i] / R[i, i]
        R[i, i] = r
        if i + 1 < k:
            R[i + 1:, i] = (R[i + 1:, i] + s * v[i + 1:]) / c
            v[i + 1:] = c * v[i + 1:] - s * R[i + 1:, i]


class IncrementalCholesky:
    """Lower factor of ``G[S, S]`` maintained under single additions and deletions.

    ``S`` is kept in insertion order, so an addition appends one row and a
    deletion is a rank-one update of the trailing block. After
    ``REFACTOR_EVERY`` updates the factor is rebuilt from ``G`` to stop drift.
    """

    def __init__(self, G: np.ndarray, S=()):
        self.G = G
        self.refactor(S)

    def refactor(self, S) -> None:
        self.S = list(S)
        self.updates = 0
        if self.S:
            self.R = linalg.cholesky(self.G[np.ix_(self.S, self.S)], lower=True)
        else:
            self.R = np.zeros((0, 0))

    def add(self, j: int) -> None:
        k = len(self.S)
        if k:
            l = linalg.solve_triangular(self.R, self.G[self.S, j], lower=True)
        else:
            l = np.zeros(0)
        d2 = self.G[j, j] - l @ l
        if not d2 > 1e-12 * self.G[j, j]:
            raise linalg.LinAlgError("column is collinear with the current model")
        R = np.zeros((k + 1, k + 1))
        R[:k, :k] = self.R
        R[k, :k] = l
        R[k, k] = math.sqrt(d2)
        self.R = R
        self.S.append(j)
        self._tick()

    def remove(self, j: int) -> None:
        q = self.S.index(j)
        R = self.R
        tail = R[q + 1:, q + 1:].copy()
        cholesky_rank_one_update(tail, R[q + 1:, q].copy())
        keep = [i for i in range(len(self.S)) if i != q]
        newR = R[np.ix_(keep, keep)].copy()
        newR[q:, q:] = tail
        self.R = newR
        self.S.pop(q)
        self._tick()

    def _tick(self) -> None:
        self.updates += 1
        if self.updates >= REFACTOR_EVERY:
            self.refactor(self.S)

    def move_to(self, S) -> None:
        """Reach the set ``S`` by one update if possible, else refactor."""
        cur = set(self.S)
        new = set(S)
        if cur == new:
            return
        added, removed = new - cur, cur - new
        try:
            if len(added) == 1 and not removed:
                self.add(added.pop())
                return
            if len(removed) == 1 and not added:
                self.remove(removed.pop())
                return
        except linalg.LinAlgError:
            pass
        self.refactor(sorted(new))


class VariableSelectionTarget(InclusionTarget):
    """g-prior posterior over inclusion vectors (bitmask states).

    Args:
        data: Design and response; both are centered internally.
        g: Prior scale; defaults to ``p^3 - 1`` so that ``1 + g = p^3``.
        c0: Model-size penalty exponent.
        swaps: Include swap moves in the neighborhood.
        size_cap: Optional hard cap on model size.
    """

    def __init__(self, data: RegressionData, g: float | None = None, c0: float = 2.0,
                 swaps: bool = False, size_cap: int | None = None):
        super().__init__(data.p, swaps=swaps, size_cap=size_cap)
        self.data = data
        p = data.p
        self.g = float(p**3 - 1) if g is None else float(g)
        if not self.g > 0:
            raise ValueError("g must be positive")
        self.c0 = float(c0)
        self.n = data.n
        Lc = data.L - data.L.mean(axis=0)
        Yc = data.Y - data.Y.mean()
        self.G = Lc.T @ Lc
        self.b = Lc.T @ Yc
        self.yy = float(Yc @ Yc)
        self.log1p_g = math.log1p(self.g)
        self._size_pen = self.c0 * math.log(p) + 0.5 * self.log1p_g
        self._diagG = np.diag(self.G).copy()

    def _from_rss(self, k, rss):
        if self.yy > 0:
            one_minus = np.maximum(np.asarray(rss, dtype=float) / self.yy, ONE_MINUS_R2_FLOOR)
        else:
            one_minus = np.ones_like(np.asarray(rss, dtype=float))
        return -self._size_pen * np.asarray(k) - 0.5 * self.n * np.log1p(self.g * one_minus)

    def rss(self, x: int) -> float:
        """Residual sum of squares of the centered least-squares fit on ``x``."""
        S = members(x)
        if not S:
            return self.yy
        GS = self.G[np.ix_(S, S)]
        bS = self.b[S]
        try:
            coef = linalg.cho_solve(linalg.cho_factor(GS, lower=True), bS)
        except linalg.LinAlgError:
            coef = linalg.lstsq(GS, bS)[0]
        return max(self.yy - float(bS @ coef), 0.0)

    def r_squared(self, x: int) -> float:
        return 0.0 if self.yy == 0 else 1.0 - self.rss(x) / self.yy

    def log_mass(self, x: int) -> float:
        return float(self._from_rss(x.bit_count(), self.rss(x)))

    def _flip_log_masses(self, x: int, R: np.ndarray, S: list) -> np.ndarray:
        """Log-masses of all ``p`` single flips of ``x`` given the factor ``R`` of ``G[S, S]``."""
        p = self.p
        k = len(S)
        if k:
            V = linalg.solve_triangular(R, self.G[S, :], lower=True)
            w = linalg.solve_triangular(R, self.b[S], lower=True)
            rss = max(self.yy - float(w @ w), 0.0)
            d = self._diagG - np.einsum("ij,ij->j", V, V)
            num = self.b - V.T @ w
        else:
            rss = self.yy
            d = self._diagG.copy()
            num = self.b.copy()
        safe = d > 1e-12 * np.maximum(self._diagG, 1e-300)
        new_rss = np.where(safe, rss - num**2 / np.where(safe, d, 1.0), rss)
        sizes = np.full(p, k + 1)
        if k:
            Rinv = linalg.solve_triangular(R, np.eye(k), lower=True)
            Ginv_diag = np.einsum("ij,ij->j", Rinv, Rinv)
            coef = Rinv.T @ w
            new_rss[S] = rss + coef**2 / Ginv_diag
            sizes[S] = k - 1
        return self._from_rss(sizes, np.maximum(new_rss, 0.0))

    def neighbor_log_masses(self, x: int):
        S = members(x)
        try:
            R = linalg.cholesky(self.G[np.ix_(S, S)], lower=True) if S else np.zeros((0, 0))
        except linalg.LinAlgError:
            return super().neighbor_log_masses(x)
        return self._assemble(x, self._flip_log_masses(x, R, S))

    def _assemble(self, x: int, flips: np.ndarray):
        nb = self.flip_neighbors(x)
        if self.size_cap is not None and not self._can_add(x):
            keep = np.array([(x >> i) & 1 for i in range(self.p)], dtype=bool)
            flips = flips[keep]
        if self.swaps:
            sw = self.swap_neighbors(x)
            nb = nb + sw
            flips = np.concatenate([flips, [self.log_mass(y) for y in sw]])
        return nb, np.asarray(flips, dtype=float)

    def evaluator(self) -> "VariableSelectionEvaluator":
        return VariableSelectionEvaluator(self)


class VariableSelectionEvaluator(Evaluator):
    """Per-chain scratch: a factor of ``G[S, S]`` that follows the chain one flip at a time."""

    def __init__(self, target: VariableSelectionTarget):
        super().__init__(target)
        self.chol = IncrementalCholesky(target.G)

    def neighborhood(self, x: int):
        t = self.target
        S = members(x)
        try:
            self.chol.move_to(S)
        except linalg.LinAlgError:
            nbrs, lm = DiscreteTarget.neighbor_log_masses(t, x)
            self.evals += len(nbrs)
            return nbrs, lm
        nbrs, lm = t._assemble(x, t._flip_log_masses(x, self.chol.R, self.chol.S))
        self.evals += len(nbrs)
        return nbrs, lm


def variable_selection(data: RegressionData, g: float | None = None, c0: float = 2.0,
                       swaps: bool = False, size_cap: int | None = None) -> VariableSelectionTarget:
    return VariableSelectionTarget(data, g, c0, swaps, size_cap)
