"""Informed importance tempering, Metropolis baselines and the Zanella process.

All samplers return a :class:`WeightedChain`. For informed samplers the log
weights are the unnormalized log importance weights; for Metropolis chains
they are all zero. :func:`estimate` turns a chain and a test function into a
self-normalized estimate.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.special import logsumexp

from .balancing import BalancingRule, power
from .core import ContractError, DiscreteTarget, LocalProfile, _profile, make_rng


@dataclass
class WeightedChain:
    states: list
    log_weights: np.ndarray
    seed: int | None
    sampler_tag: dict
    posterior_evals: int

    def __len__(self) -> int:
        return len(self.states)

    def to_csv(self, path, target: DiscreteTarget | None = None,
               functionals: Mapping[str, Callable] | None = None) -> None:
        """Write ``iteration,state,log_weight[,f...]`` rows, iteration counted from 1."""
        functionals = dict(functionals or {})
        enc = target.encode if target is not None else str
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "state", "log_weight", *functionals])
            for k, (x, lw) in enumerate(zip(self.states, self.log_weights), start=1):
                w.writerow([k, enc(x), repr(float(lw)), *(repr(float(f(x))) for f in functionals.values())])


@dataclass
class EstimatorReport:
    estimate: float
    ess: float
    normalizer_sum: float
    replicate_variance: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _draw(log_w: np.ndarray, u: float) -> int:
    # inverse CDF on max-shifted weights
    w = np.exp(log_w - log_w.max())
    cdf = np.cumsum(w)
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(i, len(log_w) - 1)


def _informed(target, log_h, log_weight_of, x0, t, rng, max_evals, tag, seed, cache):
    ev = target.evaluator()
    lm0 = ev.log_mass(x0)
    nbrs, lm = ev.neighborhood(x0)
    prof = _profile(x0, lm0, nbrs, lm, log_h)
    memo: dict = {x0: prof} if cache else None
    evals = ev.evals
    states = []
    logw = []
    for _ in range(t):
        i = _draw(prof.log_h_terms, rng.random())
        x = prof.neighbors[i]
        if max_evals is not None and evals + target.neighbor_count(x) > max_evals:
            break
        if cache and x in memo:
            prof = memo[x]
            evals += len(prof.neighbors)
        else:
            before = ev.evals
            nbrs, lm = ev.neighborhood(x)
            prof = _profile(x, float(prof.neighbor_log_masses[i]), nbrs, lm, log_h)
            evals += ev.evals - before
            if cache:
                memo[x] = prof
        states.append(x)
        logw.append(log_weight_of(prof))
    return WeightedChain(states, np.asarray(logw, dtype=float), seed, tag, evals)


def _rng_for(seed, rng):
    return rng if rng is not None else make_rng(seed)


def iit_run(target: DiscreteTarget, rule: BalancingRule, x0, t: int, seed: int | None = None,
            *, rng: np.random.Generator | None = None, max_evals: int | None = None,
            cache: bool = False) -> WeightedChain:
    """Locally balanced informed importance tempering.

    Each step moves to a neighbor drawn with probability proportional to
    ``h(pi(y)/pi(x))`` and records ``log w = -log Z_h(x)`` for the new state.
    The neighborhood profile computed for the proposal is reused for the
    weight, so an iteration costs ``|N(x)|`` posterior evaluations.

    Args:
        max_evals: Stop early once another iteration would exceed this many
            posterior evaluations (used for budget matching).
        cache: Memoize neighborhood profiles per state. Only worthwhile on
            small targets; ``posterior_evals`` still counts the evaluations the
            uncached algorithm performs.
    """
    if not rule.is_balancing:
        raise ContractError(f"rule {rule.name} is not balancing; use iit_power_run")
    if t < 1:
        raise ValueError("t must be >= 1")
    tag = {"sampler": "iit", "rule": rule.name}
    return _informed(target, rule.log_eval, lambda prof: -prof.log_Zh, x0, t,
                     _rng_for(seed, rng), max_evals, tag, seed, cache)


def iit_power_run(target: DiscreteTarget, a: float, x0, t: int, seed: int | None = None,
                  *, rng: np.random.Generator | None = None, max_evals: int | None = None,
                  cache: bool = False) -> WeightedChain:
    """Importance tempering with ``h(u) = u^a``.

    The log weight of ``x`` is ``(1 - 2a) log pi(x) - log z`` with
    ``z = sum_y (pi(y)/pi(x))^a``.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    rule = power(a)
    a = float(a)
    tag = {"sampler": "iit_power", "rule": rule.name}

    def weight(prof: LocalProfile) -> float:
        return (1.0 - 2.0 * a) * prof.log_mass_center - prof.log_Zh

    return _informed(target, rule.log_eval, weight, x0, t, _rng_for(seed, rng), max_evals, tag, seed, cache)


def rwmh_run(target: DiscreteTarget, x0, t: int, seed: int | None = None,
             *, rng: np.random.Generator | None = None) -> WeightedChain:
    """Random-walk Metropolis-Hastings with a uniform proposal on ``N(x)``."""
    rng = _rng_for(seed, rng)
    ev = target.evaluator()
    x = x0
    lm_x = ev.log_mass(x)
    deg_x = target.neighbor_count(x)
    states = []
    for _ in range(t):
        y = target.neighbor_at(x, int(rng.integers(deg_x)))
        lm_y = ev.log_mass(y)
        deg_y = target.neighbor_count(y)
        log_acc = lm_y - lm_x + math.log(deg_x) - math.log(deg_y)
        if log_acc >= 0 or rng.random() < math.exp(log_acc):
            x, lm_x, deg_x = y, lm_y, deg_y
        states.append(x)
    return WeightedChain(states, np.zeros(len(states)), seed, {"sampler": "rwmh"}, ev.evals)


ADS_MIX = (0.4, 0.4, 0.2)
_REVERSE = (1, 0, 2)


def ads_mixture(counts) -> np.ndarray:
    """Add/delete/swap probabilities with empty components' mass spread over the rest."""
    w = np.array([m if c > 0 else 0.0 for m, c in zip(ADS_MIX, counts)])
    return w / w.sum()


def ads_run(target: DiscreteTarget, x0, t: int, seed: int | None = None,
            *, rng: np.random.Generator | None = None) -> WeightedChain:
    """Add-delete-swap Metropolis-Hastings on inclusion vectors.

    Proposes an add, delete or swap move with probabilities 0.4/0.4/0.2, then a
    uniform move of that type. When a move type is unavailable (no deletions
    from the empty model, no additions at the size cap) its probability is
    redistributed proportionally over the available types, and the reverse
    proposal density in the acceptance ratio uses the mixture at the proposed
    state.
    """
    if not hasattr(target, "move_counts"):
        raise ContractError(f"{type(target).__name__} has no add/delete/swap partition")
    rng = _rng_for(seed, rng)
    ev = target.evaluator()
    x = x0
    lm_x = ev.log_mass(x)
    states = []
    for _ in range(t):
        counts = target.move_counts(x)
        mix = ads_mixture(counts)
        kind = int(np.searchsorted(np.cumsum(mix), rng.random(), side="right"))
        kind = min(kind, 2)
        while counts[kind] == 0:
            kind = (kind + 1) % 3
        y = target.random_move(x, kind, rng)
        lm_y = ev.log_mass(y)
        back = target.move_counts(y)
        log_q_fwd = math.log(mix[kind]) - math.log(counts[kind])
        rk = _REVERSE[kind]
        log_q_bwd = math.log(ads_mixture(back)[rk]) - math.log(back[rk])
        log_acc = lm_y - lm_x + log_q_bwd - log_q_fwd
        if log_acc >= 0 or rng.random() < math.exp(log_acc):
            x, lm_x = y, lm_y
        states.append(x)
    return WeightedChain(states, np.zeros(len(states)), seed, {"sampler": "ads"}, ev.evals)


@dataclass
class ZanellaTrajectory:
    states: list
    holding_times: np.ndarray
    time_budget: float
    seed: int | None
    posterior_evals: int
    sampler_tag: dict = field(default_factory=dict)

    def to_weighted_chain(self) -> WeightedChain:
        """Chain whose log weights are the log holding times (time averages via :func:`estimate`)."""
        return WeightedChain(list(self.states), np.log(self.holding_times), self.seed,
                             dict(self.sampler_tag), self.posterior_evals)


def zanella_run(target: DiscreteTarget, rule: BalancingRule, x0, time_budget: float,
                seed: int | None = None, *, rng: np.random.Generator | None = None,
                max_evals: int | None = None) -> ZanellaTrajectory:
    """Continuous-time chain with jump kernel ``K_h`` and exit rate ``Z_h(x)``.

    The holding time at ``x`` is exponential with mean ``1/Z_h(x)``, which is
    the importance weight of ``x`` up to one global constant. The last holding
    time is truncated at the budget, or at the current jump when another
    jump would exceed ``max_evals`` posterior evaluations.
    """
    if not rule.is_balancing:
        raise ContractError(f"rule {rule.name} is not balancing")
    if not time_budget > 0:
        raise ValueError("time_budget must be positive")
    rng = _rng_for(seed, rng)
    ev = target.evaluator()
    lm = ev.log_mass(x0)
    nbrs, lmn = ev.neighborhood(x0)
    prof = _profile(x0, lm, nbrs, lmn, rule.log_eval)
    x = x0
    states, holds = [], []
    elapsed = 0.0
    while True:
        hold = rng.exponential(math.exp(-prof.log_Zh))
        states.append(x)
        if elapsed + hold >= time_budget:
            holds.append(time_budget - elapsed)
            break
        i = _draw(prof.log_h_terms, rng.random())
        if max_evals is not None and ev.evals + target.neighbor_count(prof.neighbors[i]) > max_evals:
            holds.append(hold)
            break
        holds.append(hold)
        elapsed += hold
        x = prof.neighbors[i]
        nbrs, lmn = ev.neighborhood(x)
        prof = _profile(x, float(prof.neighbor_log_masses[i]), nbrs, lmn, rule.log_eval)
    return ZanellaTrajectory(states, np.asarray(holds), float(time_budget), seed, ev.evals,
                             {"sampler": "zanella", "rule": rule.name})


def estimate(chain: WeightedChain, f: Callable) -> EstimatorReport:
    """Self-normalized importance sampling estimate of ``E_pi[f]``.

    Weights are max-shifted once. The estimate is formed as
    ``min f + sum_k w_k (f_k - min f)`` so that a constant ``f`` is returned
    exactly and the result always lies in ``[min f, max f]``.
    """
    if len(chain) == 0:
        raise ContractError("empty chain")
    fx = np.fromiter((f(x) for x in chain.states), float, len(chain))
    lw = np.asarray(chain.log_weights, dtype=float)
    lse = float(logsumexp(lw))
    w = np.exp(lw - lse)
    lo, hi = fx.min(), fx.max()
    est = float(min(hi, lo + np.dot(w, fx - lo)))
    ess = float(np.clip(math.exp(2 * lse - logsumexp(2 * lw)), 1.0, len(chain)))
    return EstimatorReport(est, ess, lse)


@dataclass
class ReplicateSummary:
    mean: float
    variance: float
    standard_error: float
    variance_standard_error: float
    replicates: int


def summarize_replicates(estimates) -> ReplicateSummary:
    """Mean, unbiased variance and their standard errors across independent replicates."""
    x = np.asarray(estimates, dtype=float)
    r = len(x)
    if r < 2:
        raise ValueError("need at least two replicates")
    var = float(x.var(ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    # large-sample SE of the sample variance
    var_se = math.sqrt(max(m4 - var**2 * (r - 3) / (r - 1), 0.0) / r)
    return ReplicateSummary(float(x.mean()), var, math.sqrt(var / r), var_se, r)
