"""Batch drivers behind the command line: single runs, exact sweeps, replicated experiments."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .balancing import parse_rule
from .config import (
    ConfigError,
    RunConfig,
    SamplerSpec,
    build_target,
    decode_state,
    default_start,
    exact_expectations,
    parse_functional,
)
from .core import IITError, make_rng
from .models import count_local_modes, nu_histogram, nu_statistic
from .samplers import (
    WeightedChain,
    ads_run,
    estimate,
    iit_power_run,
    iit_run,
    rwmh_run,
    summarize_replicates,
    zanella_run,
)
from .spectral import (
    CertificateFailure,
    bound_decomposition,
    bound_set,
    bound_unimodal,
    build_exact,
    lemma_bound,
    mixing_time,
    restrict,
    reversibility_residual,
    rwmh_kernel,
    spectral_gap,
    trace_kernel,
    verify_concentration,
    verify_unimodal,
)


def _functionals(cfg: RunConfig, target) -> dict:
    return {name: parse_functional(name, target) for name in cfg.functionals}


def run_chain(target, spec: SamplerSpec, seed: int, max_evals: int | None = None,
              start_seed: int | None = None) -> WeightedChain:
    """One sampler run as a weighted chain (Zanella runs are converted via holding times)."""
    x0 = (decode_state(target, spec.x0, start_seed if start_seed is not None else seed)
          if spec.x0 else default_start(target))
    rng = make_rng(seed)
    p = getattr(target, "dimension_p", None)
    if spec.name in ("rwmh", "ads"):
        t = spec.t
        if max_evals is not None:
            t = max_evals - 1  # one evaluation per iteration after the start
        if t is None:
            raise ConfigError(f"sampler {spec.name} needs t")
        run = rwmh_run if spec.name == "rwmh" else ads_run
        return run(target, x0, t, seed, rng=rng)
    rule = parse_rule(spec.rule, p)
    if spec.name == "zanella":
        budget = spec.time_budget
        if budget is None:
            if max_evals is None:
                raise ConfigError("zanella needs time_budget")
            budget = math.inf
        return zanella_run(target, rule, x0, budget, seed, rng=rng, max_evals=max_evals).to_weighted_chain()
    t = spec.t if max_evals is None else 2**62
    if t is None:
        raise ConfigError(f"sampler {spec.name} needs t")
    if spec.name == "iit":
        return iit_run(target, rule, x0, t, seed, rng=rng, max_evals=max_evals, cache=spec.cache)
    return iit_power_run(target, rule.exponent, x0, t, seed, rng=rng, max_evals=max_evals, cache=spec.cache)


def run_sample(cfg: RunConfig):
    """Run the configured sampler once; returns ``(target, chain, functionals, report)``."""
    if cfg.sampler is None:
        raise ConfigError("sample needs a 'sampler' section")
    target = build_target(cfg.model)
    funcs = _functionals(cfg, target)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        chain = run_chain(target, cfg.sampler, cfg.seed,
                          cfg.budget_evals if cfg.match_budget else None)
    report = {
        "seed": cfg.seed,
        "sampler": chain.sampler_tag,
        "iterations": len(chain),
        "posterior_evals": chain.posterior_evals,
        "estimates": {name: vars(estimate(chain, f)) for name, f in funcs.items()},
        "warnings": [str(w.message) for w in caught],
    }
    return target, chain, funcs, report, caught


def _rule_section(target, rule_name: str, spec, cap: int) -> dict:
    rule = parse_rule(rule_name, target.dimension_p)
    chain = build_exact(target, rule, cap=cap)
    gap = spectral_gap(chain.Q, chain.pi, "rate")
    out = {"rule": rule.name, "states": chain.n, "exact_gap": gap, "expected_Zh": chain.expected_Zh,
           "certificate": None, "bounds": {}, "slack": {}}
    try:
        cert = verify_unimodal(chain)
        rep = bound_unimodal(cert, chain, rule)
        out["certificate"] = cert.to_dict()
        out["bounds"]["unimodal"] = rep.bound
        out["slack"]["unimodal"] = rep.slack
        for name, val in rep.extras["specializations"].items():
            out["bounds"][f"unimodal_closed_form:{name}"] = val
            if name == rep.extras["closed_form_rule"]:
                out["slack"][f"unimodal_closed_form:{name}"] = gap - val
        K = rwmh_kernel(target, cap)
        lb = lemma_bound(cert, K.P)
        mh_gap = spectral_gap(K.P, K.pi, "kernel")
        out["bounds"]["lemma_rwmh"] = lb
        out["slack"]["lemma_rwmh"] = mh_gap - lb
    except CertificateFailure as exc:
        out["certificate"] = {"kind": "unimodal", "failed": exc.reason, "witness": repr(exc.witness)}
    if spec is not None and spec.target_set:
        S = [decode_state(target, s) for s in spec.target_set]
        try:
            cert = verify_concentration(chain, S)
            rep = bound_set(cert, chain, rule)
            out["concentration"] = rep.to_dict()
            out["bounds"]["concentration"] = rep.bound
            out["slack"]["concentration"] = rep.slack
        except CertificateFailure as exc:
            out["concentration"] = {"failed": exc.reason, "witness": repr(exc.witness)}
    if spec is not None and spec.decomposition is not None:
        d = spec.decomposition
        try:
            rep = bound_decomposition(chain, d.labels, d.T, d.nu_tilde, d.epsilon, d.alpha, rule)
            out["decomposition"] = rep.to_dict()
            out["bounds"]["decomposition"] = rep.bound
            out["slack"]["decomposition"] = rep.slack
        except CertificateFailure as exc:
            out["decomposition"] = {"failed": exc.reason, "witness": repr(exc.witness)}
    if spec is not None and spec.trace_set:
        idx = chain.indices(decode_state(target, s) for s in spec.trace_set)
        pis = chain.pi_h[idx] / chain.pi_h[idx].sum()
        Kt = trace_kernel(chain.K, idx)
        Kr = restrict(chain.K, idx, "kernel")
        out["trace"] = {
            "states": len(idx),
            "trace_stationary_residual": float(np.abs(pis @ Kt - pis).max()),
            "restriction_stationary_residual": float(np.abs(pis @ Kr - pis).max()),
            "trace_row_residual": float(np.abs(Kt.sum(axis=1) - 1).max()),
            "trace_gap": spectral_gap(Kt, pis, "kernel"),
            "restriction_gap": spectral_gap(Kr, pis, "kernel"),
        }
    if type(target).__name__ == "TwoModeHypercube":
        f = np.array([1.0 if s & 1 else -1.0 for s in chain.states])
        p = target.p
        out["eigenvector_residual"] = float(np.abs(chain.Q @ f + (2.0 / p) * f).max())
        out["gap_upper_bound"] = 2.0 / p
    if spec is not None and spec.mixing_time:
        out["mixing_time"] = mixing_time(chain.Q, chain.pi, spec.eps, cap=cap)
        out["inverse_gap"] = 1.0 / gap
    out["detailed_balance_residual"] = reversibility_residual(chain.K, chain.pi_h)
    return out


def run_exact(cfg: RunConfig, cap: int) -> dict:
    target = build_target(cfg.model)
    spec = cfg.exact
    rules = spec.rules if spec is not None else ["sqrt"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return {"rules": [_rule_section(target, r, spec, cap) for r in rules]}


def _replicate(args):
    """Worker body: rebuild the target from the config, run one replicate, summarize it."""
    cfg_json, s_idx, rep = args
    cfg = RunConfig.model_validate_json(cfg_json)
    target = build_target(cfg.model)
    spec = cfg.samplers[s_idx]
    funcs = _functionals(cfg, target)
    seed = cfg.seed + rep
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        chain = run_chain(target, spec, seed, cfg.budget_evals if cfg.match_budget else None)
    est = {name: estimate(chain, f) for name, f in funcs.items()}
    first_visit = {}
    for k, x in enumerate(chain.states, start=1):
        first_visit.setdefault(x, k)
    return {
        "estimates": {n: e.estimate for n, e in est.items()},
        "ess": est[next(iter(est))].ess if est else estimate(chain, lambda x: 0.0).ess,
        "evals": chain.posterior_evals,
        "iterations": len(chain),
        "first_visit": first_visit,
    }


def run_experiment(cfg: RunConfig, workers: int = 1):
    """Replicated runs per sampler; returns ``(summary_rows, details)``.

    Replicate ``i`` uses seed ``cfg.seed + i``; results are assembled in
    (sampler, replicate) order whatever the completion order.
    """
    if not cfg.samplers:
        raise ConfigError("experiment needs a 'samplers' list")
    target = build_target(cfg.model)
    funcs = _functionals(cfg, target)
    exact = exact_expectations(target, funcs)
    cfg_json = cfg.model_dump_json()
    tasks = [(cfg_json, s, r) for s in range(len(cfg.samplers)) for r in range(cfg.replicates)]
    results = []
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for res in pool.map(_replicate, tasks):
                    results.append(res)
        else:
            for task in tasks:
                results.append(_replicate(task))
    except (IITError, ValueError, ArithmeticError) as exc:
        raise ExperimentAborted(str(exc), len(results)) from exc

    rows = []
    by_sampler = {}
    for s, spec in enumerate(cfg.samplers):
        reps = results[s * cfg.replicates:(s + 1) * cfg.replicates]
        by_sampler[spec.label] = reps
        evals = float(np.mean([r["evals"] for r in reps]))
        ess = float(np.mean([r["ess"] for r in reps]))
        for name in funcs:
            summ = summarize_replicates([r["estimates"][name] for r in reps])
            rows.append({
                "sampler": spec.label, "functional": name, "var": summ.variance, "ess_mean": ess,
                "evals": evals, "mean": summ.mean, "se": summ.standard_error,
                "exact": exact[name] if exact is not None else None,
            })

    visited = {}
    for reps in by_sampler.values():
        for r in reps:
            for x in r["first_visit"]:
                visited.setdefault(x, None)
    visited_list = list(visited)
    lm = np.array([target.log_mass(x) for x in visited_list])
    best = visited_list[int(np.argmax(lm))]
    nus = [nu_statistic(target, x) for x in visited_list]
    details = {
        "best_visited": target.encode(best),
        "hitting_iterations": {label: [r["first_visit"].get(best) for r in reps]
                               for label, reps in by_sampler.items()},
        "posterior_evals": {label: [r["evals"] for r in reps] for label, reps in by_sampler.items()},
        "distinct_visited": len(visited_list),
        "nu_histogram": nu_histogram(nus),
        "nu_fraction_above": {str(c): float(np.mean(np.asarray(nus) > c)) for c in (0, 1, 2, 3)},
        "local_modes": count_local_modes(target, visited_list),
    }
    return rows, details


class ExperimentAborted(IITError):
    def __init__(self, message: str, completed: int):
        super().__init__(f"replicate failed after {completed} completed: {message}")
        self.completed = completed
