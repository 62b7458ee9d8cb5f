"""Landscape certificates and the spectral-gap lower bounds they unlock.

Every bound is evaluated with the exact constants measured on the chain
(``nu`` is the smallest log-ratio actually attained, not an asymptotic rate),
so ``bound <= exact_gap`` is a checkable statement on every fixture.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..balancing import MIN, PLUS_ONE, SQRT, BalancingRule, log_weight
from ..core import ContractError, IITError, is_connected
from .exact import ExactChain, restrict, spectral_gap, trace_kernel

B_TOL = 1e-9


class CertificateFailure(IITError):
    """A landscape condition does not hold; ``witness`` is the offending state or cluster."""

    def __init__(self, reason: str, witness=None):
        super().__init__(f"{reason} (witness: {witness!r})")
        self.reason = reason
        self.witness = witness


def kappa(p: float, alpha: float, nu: float) -> float:
    """Path-argument constant ``(1/2)(1 - p^{-(nu - alpha)/2})^3``."""
    if not nu > alpha:
        raise ContractError(f"kappa needs nu > alpha, got nu={nu}, alpha={alpha}")
    return 0.5 * (1.0 - p ** (-(nu - alpha) / 2.0)) ** 3


def _log_p(x, p):
    return np.asarray(x) / math.log(p)


def _require_nondecreasing(rule: BalancingRule) -> None:
    if not rule.is_balancing:
        raise ContractError(f"rule {rule.name} is not balancing")
    grid = np.linspace(-60.0, 60.0, 2401)
    if np.any(np.diff(rule.log_eval(grid)) < -1e-12):
        raise ContractError(f"rule {rule.name} is not non-decreasing")


def _best_neighbors(chain: ExactChain, among=None):
    """Index of the highest-mass neighbor of every state (lowest index on ties)."""
    best = np.empty(chain.n, dtype=np.intp)
    tied = False
    for i, nb in enumerate(chain.adjacency):
        if among is not None:
            nb = nb[among[nb]]
            if nb.size == 0:
                best[i] = -1
                continue
        lp = chain.log_pi[nb]
        top = lp.max()
        hits = nb[lp == top]
        tied |= hits.size > 1
        best[i] = hits.min()
    return best, tied


def _reaches_root(T: np.ndarray, root_mask: np.ndarray) -> int | None:
    """First state whose T-orbit cycles without reaching a root, else None."""
    n = len(T)
    done = root_mask.copy()
    for start in range(n):
        path = []
        x = start
        seen = set()
        while not done[x]:
            if x in seen:
                return start
            seen.add(x)
            path.append(x)
            x = T[x]
        done[path] = True
    return None


@dataclass
class UnimodalCertificate:
    """Single-mode landscape: every non-modal state has a neighbor ``p^nu`` times heavier."""

    mode: object
    mode_index: int
    T: np.ndarray
    nu: float
    alpha: float
    kappa: float
    p: float
    ties: bool

    def to_dict(self) -> dict:
        return {"kind": "unimodal", "mode": str(self.mode), "nu": self.nu, "alpha": self.alpha,
                "kappa": self.kappa, "p": self.p, "ties": self.ties}


@dataclass
class ConcentrationCertificate:
    """Mass concentrated on a set of comparable states; every other state climbs towards it."""

    target_set: np.ndarray
    M: int
    B: float
    T: np.ndarray
    nu: float
    alpha: float
    kappa: float
    p: float
    connected: bool
    regime: str
    delta: float | None = None

    def to_dict(self) -> dict:
        return {"kind": "concentration", "M": self.M, "B": self.B, "nu": self.nu, "alpha": self.alpha,
                "kappa": self.kappa, "p": self.p, "connected": self.connected, "regime": self.regime,
                "delta": self.delta}


@dataclass
class BoundReport:
    kind: str
    nu: float
    alpha: float
    kappa: float
    bound: float
    exact_gap: float
    slack: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        extras = d.pop("extras")
        d.update(extras)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _report(kind, nu, alpha, kap, bound, exact_gap, **extras) -> BoundReport:
    gap = float(exact_gap)
    return BoundReport(kind, float(nu), float(alpha), float(kap), float(bound), gap, gap - float(bound), extras)


def _alpha(chain: ExactChain) -> float:
    return float(_log_p(math.log(max(len(a) for a in chain.adjacency)), chain.p))


def verify_unimodal(chain: ExactChain) -> UnimodalCertificate:
    """Certify the single-mode condition with ``T(x)`` the best neighbor of ``x``.

    Raises :class:`CertificateFailure` when the global maximum is not unique,
    when some non-modal state has no strictly heavier neighbor, or when the
    certified ``nu`` does not exceed ``alpha``.
    """
    p = chain.p
    top = chain.log_pi.max()
    modes = np.flatnonzero(chain.log_pi >= top - 1e-12 * max(1.0, abs(top)))
    if modes.size > 1:
        raise CertificateFailure("multiple global maxima", [chain.states[i] for i in modes])
    star = int(modes[0])
    T, ties = _best_neighbors(chain)
    T[star] = -1
    others = np.flatnonzero(np.arange(chain.n) != star)
    log_ratio = chain.log_pi[T[others]] - chain.log_pi[others]
    alpha = _alpha(chain)
    if others.size == 0:
        raise CertificateFailure("single-state space", chain.states[star])
    j = int(np.argmin(log_ratio))
    nu = float(_log_p(log_ratio[j], p))
    if not nu > 0:
        raise CertificateFailure("state without a heavier neighbor", chain.states[others[j]])
    if not nu > alpha:
        raise CertificateFailure(f"nu={nu:.6g} does not exceed alpha={alpha:.6g}", chain.states[others[j]])
    roots = np.zeros(chain.n, dtype=bool)
    roots[star] = True
    bad = _reaches_root(np.where(T < 0, star, T), roots)
    if bad is not None:
        raise CertificateFailure("T-graph is not a tree rooted at the mode", chain.states[bad])
    return UnimodalCertificate(chain.states[star], star, T, nu, alpha, kappa(p, alpha, nu), p, bool(ties))


def lemma_bound(cert: UnimodalCertificate, P: np.ndarray) -> float:
    """``kappa * min_{x != x*} P(x, T(x))`` for any kernel reversible on the same space."""
    idx = np.flatnonzero(cert.T >= 0)
    return cert.kappa * float(P[idx, cert.T[idx]].min())


def unimodal_specializations(cert: UnimodalCertificate) -> dict:
    """Closed-form lower bounds on ``Gap(Q_h)`` for the three named rules."""
    p, a, nu, k = cert.p, cert.alpha, cert.nu, cert.kappa
    return {
        "plus1": 0.5 * k * p ** (nu - a),
        "min": 0.5 * k * p ** (nu - 2 * a),
        "sqrt": 0.5 * k * p ** (nu / 2) / (p ** (2 * a - nu) + p ** (a - nu / 2)),
    }


def bound_unimodal(cert: UnimodalCertificate, chain: ExactChain, rule: BalancingRule | None = None) -> BoundReport:
    """``kappa h(p^nu) / E_pi[Z_h]`` compared with the exact ``Gap(Q_h)``.

    The closed-form specialization for the named rule (if any) is reported
    as ``closed_form``; all three are under ``specializations``.
    """
    if not isinstance(cert, UnimodalCertificate) or cert.nu <= cert.alpha:
        raise ContractError("invalid unimodal certificate")
    rule = rule or chain.rule
    _require_nondecreasing(rule)
    log_h = log_weight(rule, cert.nu * math.log(cert.p))
    bound = cert.kappa * math.exp(log_h) / chain.expected_Zh
    specs = unimodal_specializations(cert)
    gap = spectral_gap(chain.Q, chain.pi, "rate")
    return _report("unimodal", cert.nu, cert.alpha, cert.kappa, bound, gap, rule=rule.name,
                   expected_Zh=chain.expected_Zh, closed_form=specs.get(_named(rule)),
                   closed_form_rule=_named(rule),
                   specializations=specs)


def _named(rule: BalancingRule) -> str | None:
    for named in (PLUS_ONE, MIN, SQRT):
        if rule.name == named.name or (rule.log_eval is named.log_eval):
            return named.name
    return None


def _maximin_threshold(W: np.ndarray) -> float:
    """Largest ``w`` such that edges with weight ``>= w`` connect every vertex."""
    n = W.shape[0]
    if n == 1:
        return math.inf
    S = np.minimum(W, W.T)
    iu, ju = np.triu_indices(n, 1)
    w = S[iu, ju]
    order = np.argsort(-w, kind="stable")
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    merged = 0
    for e in order:
        a, b = find(iu[e]), find(ju[e])
        if a != b:
            parent[a] = b
            merged += 1
            if merged == n - 1:
                return float(w[e])
    return 0.0


def verify_concentration(chain: ExactChain, target_set) -> ConcentrationCertificate:
    """Certify the concentration condition for ``target_set`` (states, not indices).

    ``T(x)`` is the best neighbor of each ``x`` outside the set. The regime is
    ``"set"`` when ``B = 1`` and the set is connected by moves, where the
    restriction-based bound applies; otherwise ``"trace"``, and ``delta`` is the
    largest value making the trace graph of the lazy chain ``Q/b + I`` on the set
    connected at level ``delta / b``.
    """
    S = chain.indices(target_set)
    M = int(S.size)
    if M < 2:
        raise ContractError("concentration needs at least two states in the target set")
    p = chain.p
    inside = np.zeros(chain.n, dtype=bool)
    inside[S] = True
    lp = chain.log_pi[S]
    B = float(math.exp(lp.max() - lp.min()))
    T, _ = _best_neighbors(chain)
    T[S] = -1
    out = np.flatnonzero(~inside)
    alpha = _alpha(chain)
    if out.size:
        log_ratio = chain.log_pi[T[out]] - chain.log_pi[out]
        j = int(np.argmin(log_ratio))
        nu = float(_log_p(log_ratio[j], p))
        if not nu > alpha:
            raise CertificateFailure(f"nu={nu:.6g} does not exceed alpha={alpha:.6g}", chain.states[out[j]])
        bad = _reaches_root(np.where(T < 0, 0, T), inside)
        if bad is not None:
            raise CertificateFailure("T-orbit never enters the target set", chain.states[bad])
    else:
        nu = math.inf
    kap = 0.5 if math.isinf(nu) else kappa(p, alpha, nu)
    local = {int(s): k for k, s in enumerate(S)}
    induced = [[local[int(y)] for y in chain.adjacency[s] if inside[y]] for s in S]
    connected = is_connected(induced)
    regime = "set" if (B <= 1 + B_TOL and connected) else "trace"
    delta = None
    if regime == "trace":
        b = 2.0 * np.abs(np.diag(chain.Q)).max()
        P = chain.Q / b + np.eye(chain.n)
        delta = b * _maximin_threshold(trace_kernel(P, S))
    return ConcentrationCertificate(S, M, B, T, nu, alpha, kap, p, connected, regime, delta)


def concentration_Z_bounds(cert: ConcentrationCertificate) -> dict:
    """Upper bounds on ``E_pi[Z_h]`` for the three named rules under the concentration condition."""
    p, a, nu, M = cert.p, cert.alpha, cert.nu, cert.M
    return {
        "plus1": 2 * p**a,
        "min": 2 * p ** (2 * a - nu) + M - 1,
        "sqrt": p ** (2 * a - nu) + 2 * p ** (a - nu / 2) + M - 1,
    }


def bound_set(cert: ConcentrationCertificate, chain: ExactChain, rule: BalancingRule | None = None) -> BoundReport:
    """``kappa h(1) / [3 (M p^{alpha-nu} + 1) M (M-1) E_pi[Z_h]]`` against exact ``Gap(Q_h)``.

    Only valid in the ``"set"`` regime. In the ``"trace"`` regime (``B > 1`` or a
    disconnected target set) no explicit bound is available because the
    remaining constant is unspecified; the report then has ``bound = 0`` and
    carries ``delta`` and the regime so callers can see why.
    """
    if cert.M < 2:
        raise ContractError("concentration needs M >= 2")
    rule = rule or chain.rule
    _require_nondecreasing(rule)
    gap = spectral_gap(chain.Q, chain.pi, "rate")
    zb = concentration_Z_bounds(cert)
    if cert.regime != "set":
        return _report("concentration", cert.nu, cert.alpha, cert.kappa, 0.0, gap, regime=cert.regime,
                       delta=cert.delta, B=cert.B, M=cert.M, rule=rule.name, expected_Zh=chain.expected_Zh,
                       Z_bounds=zb)
    p, a, nu, M = cert.p, cert.alpha, cert.nu, cert.M
    h1 = math.exp(log_weight(rule, 0.0))
    lead = 0.0 if math.isinf(nu) else M * p ** (a - nu)
    bound = cert.kappa * h1 / (3 * (lead + 1) * M * (M - 1) * chain.expected_Zh)
    return _report("concentration", nu, a, cert.kappa, bound, gap, regime="set", delta=None, B=cert.B, M=M,
                   rule=rule.name, expected_Zh=chain.expected_Zh, Z_bounds=zb)


@dataclass
class DecompositionCertificate:
    labels: np.ndarray
    clusters: list
    T_on_Y: np.ndarray
    y_star: int
    nu: float
    nu_tilde: float
    alpha: float
    epsilon: float
    kappa: float
    p: float

    def to_dict(self) -> dict:
        return {"kind": "decomposition", "nu": self.nu, "nu_tilde": self.nu_tilde, "alpha": self.alpha,
                "epsilon": self.epsilon, "kappa": self.kappa, "p": self.p, "clusters": len(self.clusters),
                "y_star": self.y_star}


def verify_decomposition(chain: ExactChain, partition, T_on_Y, nu_tilde: float,
                         epsilon: float | None = None, alpha: float | None = None) -> DecompositionCertificate:
    """Check the clustered landscape condition.

    Args:
        partition: Cluster label ``0..m-1`` for every state, aligned with ``chain.states``
            (a mapping state -> label is accepted too).
        T_on_Y: ``T_on_Y[y]`` is the cluster that cluster ``y`` climbs to; exactly one
            fixed point.
        nu_tilde: Required log-ratio (base ``p``) for a state to count as an entry point.
        epsilon: Required entry-point mass fraction; the attained minimum is used
            when omitted.
        alpha: Defaults to ``log_p`` of the largest ``T``-preimage size.
    """
    p = chain.p
    if isinstance(partition, dict):
        labels = np.array([partition[s] for s in chain.states], dtype=np.intp)
    else:
        labels = np.asarray(partition, dtype=np.intp)
    if labels.shape != (chain.n,):
        raise ContractError("partition must label every state")
    m = int(labels.max()) + 1
    if set(np.unique(labels)) != set(range(m)):
        raise ContractError("cluster labels must be 0..m-1 with every cluster nonempty")
    if m >= chain.n:
        raise ContractError("partition must have fewer clusters than states")
    T = np.asarray(T_on_Y, dtype=np.intp)
    if T.shape != (m,) or T.min() < 0 or T.max() >= m:
        raise ContractError("T_on_Y must map clusters to clusters")
    fixed = np.flatnonzero(T == np.arange(m))
    if fixed.size != 1:
        raise CertificateFailure("T on clusters must have exactly one fixed point", fixed.tolist())
    y_star = int(fixed[0])
    if not nu_tilde > 0:
        raise ContractError("nu_tilde must be positive")

    clusters = [np.flatnonzero(labels == y) for y in range(m)]
    log_piG = np.array([np.logaddexp.reduce(chain.log_pi[c]) for c in clusters])
    others = [y for y in range(m) if y != y_star]
    ratios = np.array([log_piG[T[y]] - log_piG[y] for y in others])
    j = int(np.argmin(ratios))
    nu = float(_log_p(ratios[j], p))

    preimages = np.bincount(T[others], minlength=m)
    if alpha is None:
        alpha = float(_log_p(math.log(max(1, preimages.max())), p))
    elif preimages.max() > p**alpha * (1 + 1e-12):
        raise CertificateFailure("too many clusters climb to one cluster", int(np.argmax(preimages)))
    if not nu > alpha:
        raise CertificateFailure(f"nu={nu:.6g} does not exceed alpha={alpha:.6g}", others[j])
    if _reaches_root(np.where(np.arange(m) == y_star, y_star, T), np.arange(m) == y_star) is not None:
        raise CertificateFailure("T on clusters does not lead to the fixed point", None)

    thresh = nu_tilde * math.log(p)
    fractions = []
    for y in others:
        target = labels == T[y]
        entry = []
        for x in clusters[y]:
            nb = chain.adjacency[x]
            nb = nb[target[nb]]
            entry.append(nb.size > 0 and chain.log_pi[nb].max() - chain.log_pi[x] >= thresh)
        entry = np.array(entry, dtype=bool)
        c = clusters[y]
        frac = float(np.exp(np.logaddexp.reduce(chain.log_pi[c[entry]]) - log_piG[y])) if entry.any() else 0.0
        fractions.append(frac)
    k = int(np.argmin(fractions))
    attained = fractions[k]
    if epsilon is None:
        epsilon = attained
        if not epsilon > 0:
            raise CertificateFailure("cluster has no entry points at nu_tilde", others[k])
    elif attained < epsilon:
        raise CertificateFailure(f"entry mass fraction {attained:.6g} below epsilon", others[k])
    return DecompositionCertificate(labels, clusters, T, y_star, nu, float(nu_tilde), float(alpha),
                                    float(epsilon), kappa(p, alpha, nu), p)


def bound_decomposition(chain: ExactChain, partition, T_on_Y, nu_tilde: float, epsilon: float | None = None,
                        alpha: float | None = None, rule: BalancingRule | None = None) -> BoundReport:
    """Clustered-landscape bound on ``Gap(Q_h)`` with exact within-cluster gaps.

    ``kappa eps h(p^nu~) min{1/(3 E_pi[Z_h]), min_y Gap(Q_y) / (kappa eps h(p^nu~) + 3 max Z_h)}``
    where ``Q_y`` is the restriction of ``Q_h`` to cluster ``y``.
    """
    cert = verify_decomposition(chain, partition, T_on_Y, nu_tilde, epsilon, alpha)
    rule = rule or chain.rule
    _require_nondecreasing(rule)
    lead = cert.kappa * cert.epsilon * math.exp(log_weight(rule, cert.nu_tilde * math.log(cert.p)))
    within = []
    for c in cert.clusters:
        Qy = restrict(chain.Q, c, "rate")
        piy = chain.pi[c] / chain.pi[c].sum()
        within.append(spectral_gap(Qy, piy, "rate") if c.size > 1 else math.inf)
    min_within = float(min(within))
    bound = lead * min(1.0 / (3.0 * chain.expected_Zh), min_within / (lead + 3.0 * float(chain.Zh.max())))
    gap = spectral_gap(chain.Q, chain.pi, "rate")
    return _report("decomposition", cert.nu, cert.alpha, cert.kappa, bound, gap, nu_tilde=cert.nu_tilde,
                   epsilon=cert.epsilon, min_within_gap=min_within, max_Zh=float(chain.Zh.max()),
                   expected_Zh=chain.expected_Zh, rule=rule.name)
