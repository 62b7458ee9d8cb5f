"""Dense kernels, rate matrices and spectra for enumerable targets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from ..balancing import BalancingRule, power
from ..core import (
    ContractError,
    DiscreteTarget,
    IITError,
    IrreducibilityError,
    ResourceError,
    StructuralError,
    is_connected,
)

DEFAULT_CAP = 4096


class NumericalError(IITError):
    """A linear solve that should be well posed was singular."""


@dataclass
class ExactChain:
    """Everything about ``K_h`` that fits in dense matrices.

    ``pi``/``pi_h`` are normalized; ``omega = pi / pi_h`` so that
    ``E_{pi_h}[omega] = 1``. ``log_*`` companions keep the full dynamic range.
    """

    target: DiscreteTarget
    rule: BalancingRule
    states: list
    index: dict
    adjacency: list
    log_pi: np.ndarray
    pi: np.ndarray
    log_Zh: np.ndarray
    Zh: np.ndarray
    K: np.ndarray
    log_pi_h: np.ndarray
    pi_h: np.ndarray
    log_omega: np.ndarray
    omega: np.ndarray
    Q: np.ndarray
    expected_Zh: float

    @property
    def p(self) -> float:
        return self.target.dimension_p

    @property
    def n(self) -> int:
        return len(self.states)

    def indices(self, subset) -> np.ndarray:
        return np.array(sorted(self.index[s] for s in subset), dtype=np.intp)


def _enumerate(target: DiscreteTarget, cap: int):
    if not target.enumerable:
        raise ContractError(f"{type(target).__name__} is not enumerable")
    count = target.state_count()
    if count is not None and count > cap:
        raise ResourceError(f"|X| = {count} exceeds the dense cap {cap} (raise it with --cap)")
    states = target.states()
    if len(states) > cap:
        raise ResourceError(f"|X| = {len(states)} exceeds the dense cap {cap} (raise it with --cap)")
    index = {s: i for i, s in enumerate(states)}
    adjacency = []
    log_mass = np.empty(len(states))
    for i, s in enumerate(states):
        nbrs = target.neighbors(s)
        if not nbrs:
            raise StructuralError(f"state {s!r} has an empty neighborhood")
        adjacency.append(np.array(sorted(index[y] for y in nbrs), dtype=np.intp))
        log_mass[i] = target.log_mass(s)
    for i, nb in enumerate(adjacency):
        for j in nb:
            if i not in adjacency[j]:
                raise StructuralError(f"asymmetric neighborhoods at {states[i]!r}, {states[j]!r}")
    if not is_connected(adjacency):
        raise IrreducibilityError("neighborhood graph is disconnected")
    return states, index, adjacency, log_mass - logsumexp(log_mass)


def _edges(adjacency):
    src = np.repeat(np.arange(len(adjacency)), [len(a) for a in adjacency])
    dst = np.concatenate(adjacency)
    starts = np.concatenate([[0], np.cumsum([len(a) for a in adjacency])[:-1]])
    return src, dst, starts


def _group_logsumexp(values, starts):
    m = np.maximum.reduceat(values, starts)
    counts = np.diff(np.append(starts, len(values)))
    return m + np.log(np.add.reduceat(np.exp(values - np.repeat(m, counts)), starts))


def build_exact(target: DiscreteTarget, rule: BalancingRule | float, cap: int = DEFAULT_CAP) -> ExactChain:
    """Dense ``K_h``, ``pi_h``, ``Z_h``, ``omega`` and ``Q_h`` for an enumerable target.

    ``rule`` is a balancing rule (``pi_h ∝ pi Z_h``) or a power rule /
    exponent ``a`` (``pi_h ∝ pi^{2a} Z_h``).
    """
    if not isinstance(rule, BalancingRule):
        rule = power(float(rule))
    states, index, adjacency, log_pi = _enumerate(target, cap)
    n = len(states)
    src, dst, starts = _edges(adjacency)
    log_h = rule.log_eval(log_pi[dst] - log_pi[src])
    log_Zh = _group_logsumexp(log_h, starts)
    K = np.zeros((n, n))
    K[src, dst] = np.exp(log_h - log_Zh[src])

    if rule.is_balancing:
        log_pi_h = log_pi + log_Zh
    elif rule.exponent is not None:
        log_pi_h = 2.0 * rule.exponent * log_pi + log_Zh
    else:
        raise ContractError(f"no closed-form stationary law for rule {rule.name}")
    log_pi_h = log_pi_h - logsumexp(log_pi_h)
    log_omega = log_pi - log_pi_h

    Q = np.zeros((n, n))
    Q[src, dst] = np.exp(log_h - log_Zh[src] - log_omega[src])
    Q[np.arange(n), np.arange(n)] = -Q.sum(axis=1)

    return ExactChain(
        target=target, rule=rule, states=states, index=index, adjacency=adjacency,
        log_pi=log_pi, pi=np.exp(log_pi), log_Zh=log_Zh, Zh=np.exp(log_Zh), K=K,
        log_pi_h=log_pi_h, pi_h=np.exp(log_pi_h), log_omega=log_omega, omega=np.exp(log_omega),
        Q=Q, expected_Zh=float(np.exp(logsumexp(log_pi + log_Zh))),
    )


@dataclass
class ExactKernel:
    """A dense transition matrix with its stationary law."""

    states: list
    index: dict
    P: np.ndarray
    pi: np.ndarray


def rwmh_kernel(target: DiscreteTarget, cap: int = DEFAULT_CAP) -> ExactKernel:
    """Exact random-walk Metropolis-Hastings kernel."""
    states, index, adjacency, log_pi = _enumerate(target, cap)
    n = len(states)
    deg = np.array([len(a) for a in adjacency], dtype=float)
    P = np.zeros((n, n))
    for i, nb in enumerate(adjacency):
        log_acc = log_pi[nb] - log_pi[i] + np.log(deg[i]) - np.log(deg[nb])
        P[i, nb] = np.exp(np.minimum(0.0, log_acc)) / deg[i]
        P[i, i] = 1.0 - P[i, nb].sum()
    return ExactKernel(states, index, P, np.exp(log_pi))


def ads_kernel(target: DiscreteTarget, cap: int = DEFAULT_CAP) -> ExactKernel:
    """Exact add-delete-swap Metropolis-Hastings kernel (see :func:`iitmc.samplers.ads_run`)."""
    from ..samplers import ads_mixture, _REVERSE

    if not hasattr(target, "move_partition"):
        raise ContractError(f"{type(target).__name__} has no add/delete/swap partition")
    states, index, _, log_pi = _enumerate(target, cap)
    n = len(states)
    P = np.zeros((n, n))
    for i, x in enumerate(states):
        parts = target.move_partition(x)
        mix = ads_mixture([len(m) for m in parts])
        for kind, moves in enumerate(parts):
            for y in moves:
                j = index[y]
                back = target.move_partition(y)
                rk = _REVERSE[kind]
                q_fwd = mix[kind] / len(moves)
                q_bwd = ads_mixture([len(m) for m in back])[rk] / len(back[rk])
                acc = min(1.0, math.exp(log_pi[j] - log_pi[i]) * q_bwd / q_fwd)
                P[i, j] += q_fwd * acc
        P[i, i] = 1.0 - P[i].sum() + P[i, i]
    return ExactKernel(states, index, P, np.exp(log_pi))


def _is_rate(M: np.ndarray) -> bool:
    return bool(np.all(np.abs(M.sum(axis=1)) < 1e-8 * max(1.0, np.abs(M).max())))


def reversibility_residual(M: np.ndarray, stationary: np.ndarray) -> float:
    """Relative detailed-balance residual ``max|pi_x M_xy - pi_y M_yx| / max|pi_x M_xy|``."""
    F = stationary[:, None] * M
    np.fill_diagonal(F, 0.0)
    scale = np.abs(F).max()
    return 0.0 if scale == 0 else float(np.abs(F - F.T).max() / scale)


def spectrum(M: np.ndarray, stationary: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Ascending eigenvalues of a reversible kernel or rate matrix."""
    M = np.asarray(M, dtype=float)
    stationary = np.asarray(stationary, dtype=float)
    res = reversibility_residual(M, stationary)
    if res > tol:
        raise ContractError(f"matrix is not reversible w.r.t. the given law (residual {res:.2e})")
    d = np.sqrt(stationary)
    S = d[:, None] * M / d[None, :]
    return linalg.eigvalsh(0.5 * (S + S.T))


def spectral_gap(M: np.ndarray, stationary: np.ndarray, kind: str | None = None) -> float:
    """``1 - lambda_2`` for a stochastic matrix, ``-lambda_2`` for a rate matrix.

    ``kind`` is ``"kernel"`` or ``"rate"``; inferred from the row sums when
    omitted. A one-state chain has gap ``inf``.
    """
    M = np.asarray(M, dtype=float)
    if kind is None:
        kind = "rate" if _is_rate(M) else "kernel"
    if M.shape[0] == 1:
        return math.inf
    ev = spectrum(M, stationary)
    return float(1.0 - ev[-2]) if kind == "kernel" else float(-ev[-2])


def restrict(M: np.ndarray, S, kind: str | None = None) -> np.ndarray:
    """Restriction to index set ``S``: off-diagonals copied, diagonal refilled.

    Kernel rows are refilled to sum to one, rate rows to zero.
    """
    M = np.asarray(M, dtype=float)
    if kind is None:
        kind = "rate" if _is_rate(M) else "kernel"
    S = np.asarray(S, dtype=np.intp)
    if S.size == 0:
        raise ContractError("restriction to an empty set")
    sub = M[np.ix_(S, S)].copy()
    np.fill_diagonal(sub, 0.0)
    off = sub.sum(axis=1)
    np.fill_diagonal(sub, (1.0 - off) if kind == "kernel" else -off)
    return sub


def trace_kernel(K: np.ndarray, S) -> np.ndarray:
    """Transition matrix of the chain watched only while it is in ``S``.

    ``K|_S = K_SS + K_{S,S^c} A`` where ``A`` solves ``(I - K_{S^c,S^c}) A = K_{S^c,S}``
    (the exit distribution of excursions outside ``S``).
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    S = np.asarray(S, dtype=np.intp)
    if S.size == 0:
        raise ContractError("trace on an empty set")
    mask = np.zeros(n, dtype=bool)
    mask[S] = True
    C = np.flatnonzero(~mask)
    out = K[np.ix_(S, S)].copy()
    if C.size:
        lhs = np.eye(C.size) - K[np.ix_(C, C)]
        try:
            A = linalg.solve(lhs, K[np.ix_(C, S)])
        except linalg.LinAlgError as exc:
            raise NumericalError(f"excursion system is singular: {exc}") from None
        if not np.all(np.isfinite(A)):
            raise NumericalError("excursion system produced non-finite values")
        out += K[np.ix_(S, C)] @ A
    return out


def transition_function(Q: np.ndarray, t: float, tol: float = 1e-16) -> np.ndarray:
    """``exp(tQ)`` by uniformization.

    With ``b = 2 max|Q(x,x)|`` and ``P = Q/b + I``, ``exp(tQ)`` is the Poisson(bt)
    mixture of powers of ``P``. The Poisson series is summed for a time step
    ``t / 2^m`` with ``bt/2^m <= 1`` and the result squared ``m`` times, which
    keeps the number of matrix products logarithmic in ``bt``.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    b = 2.0 * np.abs(np.diag(Q)).max()
    if b == 0 or t == 0:
        return np.eye(n)
    P = Q / b + np.eye(n)
    m = max(0, math.ceil(math.log2(b * t))) if b * t > 1 else 0
    lam = b * t / 2**m
    term = np.eye(n)
    weight = math.exp(-lam)
    E = weight * term
    acc = weight
    k = 0
    while 1.0 - acc > tol and k < 200:
        k += 1
        term = term @ P
        weight *= lam / k
        acc += weight
        E += weight * term
    for _ in range(m):
        E = E @ E
    return E


def worst_tv(Q: np.ndarray, pi: np.ndarray, t: float) -> float:
    """``max_x ||exp(tQ)(x, .) - pi||_TV``."""
    E = transition_function(Q, t)
    return float(0.5 * np.abs(E - pi[None, :]).sum(axis=1).max())


def mixing_time(Q: np.ndarray, pi: np.ndarray, eps: float = 0.25, rtol: float = 1e-6,
                cap: int = DEFAULT_CAP) -> float:
    """Smallest ``t`` with worst-start total variation at most ``eps``, by bisection."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape[0] > cap:
        raise ResourceError(f"|X| = {Q.shape[0]} exceeds the dense cap {cap}")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    pi = np.asarray(pi, dtype=float)
    if worst_tv(Q, pi, 0.0) <= eps:
        return 0.0
    b = 2.0 * np.abs(np.diag(Q)).max()
    hi = 1.0 / b
    while worst_tv(Q, pi, hi) > eps:
        hi *= 2.0
        if hi > 1e15:
            raise NumericalError("total variation does not fall below eps")
    lo = hi / 2.0 if hi > 1.0 / b else 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if worst_tv(Q, pi, mid) > eps:
            lo = mid
        else:
            hi = mid
    return hi
