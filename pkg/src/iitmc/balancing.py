"""Proposal-weighting functions ``h`` evaluated in the log domain.

Every rule maps ``log u`` to ``log h(u)``; the linear-domain value is never
formed because posterior ratios routinely span hundreds of orders of
magnitude. A rule is *balancing* when ``h(u) = u h(1/u)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

LogFn = Callable[[np.ndarray], np.ndarray]


class AggressiveWeightingWarning(UserWarning):
    """Power weighting with exponent above one half.

    Importance weights of low-mass states then grow super-exponentially in
    the depth of the tail.
    """


@dataclass(frozen=True)
class BalancingRule:
    """A weighting function ``h`` exposed through ``log_eval``.

    Attributes:
        name: Canonical spec string, e.g. ``"sqrt"`` or ``"pow:0.3"``.
        log_eval: Vectorized map ``log u -> log h(u)``.
        is_balancing: Whether ``h(u) = u h(1/u)`` holds by construction.
        exponent: ``a`` for power rules ``h(u) = u^a``, else None.
        cap: ``log`` of the upper bound of ``h`` for bounded rules, else None.
    """

    name: str
    log_eval: LogFn = field(compare=False, repr=False)
    is_balancing: bool
    exponent: float | None = None
    cap: float | None = None

    def __call__(self, log_u):
        return self.log_eval(log_u)


def _checked(fn: LogFn) -> LogFn:
    def wrapped(log_u):
        arr = np.asarray(log_u, dtype=float)
        if np.isnan(arr).any():
            raise ValueError("log_u contains NaN")
        return fn(arr)

    return wrapped


def log_weight(rule: BalancingRule, log_u: float) -> float:
    """Scalar ``log h(exp(log_u))``."""
    if math.isnan(log_u):
        raise ValueError("log_u is NaN")
    return float(rule.log_eval(np.float64(log_u)))


def _sqrt(l):
    return 0.5 * l


def _min(l):
    return np.minimum(0.0, l)


def _plus_one(l):
    return np.maximum(0.0, l) + np.log1p(np.exp(-np.abs(l)))


SQRT = BalancingRule("sqrt", _checked(_sqrt), True, exponent=0.5)
MIN = BalancingRule("min", _checked(_min), True)
PLUS_ONE = BalancingRule("plus1", _checked(_plus_one), True)


def power(a: float) -> BalancingRule:
    """``h(u) = u^a``. Balancing only at ``a = 1/2``."""
    a = float(a)
    if not a >= 0:
        raise ValueError(f"power exponent must be >= 0, got {a}")
    if a > 0.5:
        warnings.warn(
            f"pow:{a:g} weights neighbors more aggressively than sqrt; importance "
            "weights may blow up in light tails",
            AggressiveWeightingWarning,
            stacklevel=2,
        )
    if a == 0.5:
        return BalancingRule("pow:0.5", SQRT.log_eval, True, exponent=0.5)
    return BalancingRule(f"pow:{a:g}", _checked(lambda l: a * l), False, exponent=a)


def make_bounded(c: float, p: float) -> BalancingRule:
    """Balancing rule ``(u ∧ p^c) ∨ (1 ∧ u p^c)``, valued in ``(0, p^c]``."""
    if not c > 0:
        raise ValueError(f"cap exponent c must be positive, got {c}")
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    log_cap = c * math.log(p)

    def fn(l):
        return np.maximum(np.minimum(l, log_cap), np.minimum(0.0, l + log_cap))

    return BalancingRule(f"bounded:c={c:g},p={p:g}", _checked(fn), True, cap=log_cap)


def mixture(h1: BalancingRule, h2: BalancingRule, w1: float = 1.0, w2: float = 1.0) -> BalancingRule:
    """``w1 h1 + w2 h2`` with nonnegative weights; balancing if both parts are."""
    if w1 < 0 or w2 < 0 or w1 + w2 == 0:
        raise ValueError("mixture weights must be nonnegative and not both zero")
    parts = [(math.log(w), h) for w, h in ((w1, h1), (w2, h2)) if w > 0]

    def fn(l):
        out = parts[0][0] + parts[0][1].log_eval(l)
        for lw, h in parts[1:]:
            out = np.logaddexp(out, lw + h.log_eval(l))
        return out

    return BalancingRule(
        f"mix({w1:g}*{h1.name},{w2:g}*{h2.name})",
        _checked(fn),
        h1.is_balancing and h2.is_balancing,
    )


def tilt(h: BalancingRule, log_g: LogFn, label: str = "g") -> BalancingRule:
    """``h(u) g(u) g(1/u)`` for an arbitrary positive ``g`` given as ``log g``."""

    def fn(l):
        return h.log_eval(l) + log_g(l) + log_g(-l)

    return BalancingRule(f"tilt({h.name},{label})", _checked(fn), h.is_balancing)


def min_form(log_g: LogFn, label: str = "g") -> BalancingRule:
    """``min{g(u), u g(1/u)}``; always balancing."""

    def fn(l):
        return np.minimum(log_g(l), l + log_g(-l))

    return BalancingRule(f"minform({label})", _checked(fn), True)


def max_form(log_g: LogFn, label: str = "g") -> BalancingRule:
    """``max{g(u), u g(1/u)}``; always balancing."""

    def fn(l):
        return np.maximum(log_g(l), l + log_g(-l))

    return BalancingRule(f"maxform({label})", _checked(fn), True)


@dataclass
class BalancingReport:
    rule: str
    max_residual: float
    worst_log_u: float
    is_balancing: bool
    probes: int


def check_balancing(rule: BalancingRule, probe_count: int = 10_000, tol: float = 1e-12,
                    seed: int = 0) -> BalancingReport:
    """Largest ``|log h(u) - log u - log h(1/u)|`` over log-uniform probes in ``[-50, 50]``.

    The probe set always contains ``log u = 1`` so that a rule failing at
    ``u = e`` cannot slip through on an unlucky draw.
    """
    if probe_count < 1:
        raise ValueError("probe_count must be >= 1")
    rng = np.random.default_rng(seed)
    log_u = rng.uniform(-50.0, 50.0, probe_count)
    log_u[0] = 1.0
    resid = np.abs(rule.log_eval(log_u) - log_u - rule.log_eval(-log_u))
    i = int(np.argmax(resid))
    return BalancingReport(rule.name, float(resid[i]), float(log_u[i]), bool(resid[i] < tol), probe_count)


def parse_rule(spec: str, p: float | None = None) -> BalancingRule:
    """Build a rule from its CLI string.

    Grammar::

        sqrt | min | plus1 | pow:<a> | bounded:c=<c>[,p=<p>]

    ``bounded`` takes ``p`` from the string or, failing that, from the
    ``p`` argument (normally the target's problem size).
    """
    s = spec.strip()
    if s == "sqrt":
        return SQRT
    if s == "min":
        return MIN
    if s in ("plus1", "+1"):
        return PLUS_ONE
    kind, _, arg = s.partition(":")
    if kind == "pow" and arg:
        try:
            return power(float(arg))
        except ValueError as exc:
            raise ValueError(f"bad power rule {spec!r}: {exc}") from None
    if kind == "bounded" and arg:
        kv = {}
        for item in arg.split(","):
            key, eq, val = item.partition("=")
            if not eq or key.strip() not in ("c", "p"):
                raise ValueError(f"bad bounded rule {spec!r}")
            kv[key.strip()] = float(val)
        if "c" not in kv:
            raise ValueError(f"bounded rule {spec!r} needs c=")
        cap_p = kv.get("p", p)
        if cap_p is None:
            raise ValueError(f"bounded rule {spec!r} needs p (none given and no target p)")
        return make_bounded(kv["c"], cap_p)
    raise ValueError(f"unknown rule {spec!r}")
