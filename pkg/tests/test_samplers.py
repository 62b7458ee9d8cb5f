import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp

from iitmc import MIN, PLUS_ONE, SQRT, power
from iitmc.core import ContractError
from iitmc.models import two_mode_hypercube, variable_selection, simulate_regression
from iitmc.samplers import (
    WeightedChain,
    ads_mixture,
    ads_run,
    estimate,
    iit_power_run,
    iit_run,
    rwmh_run,
    summarize_replicates,
    zanella_run,
)
from iitmc.spectral import ads_kernel, build_exact
from oracles import enumerate_expectation, normalized_pi, path_target, random_graph_target

PATH3 = path_target(np.log([0.7, 0.2, 0.1]))


def test_iit_moves_along_edges_and_weights_are_inverse_normalizers():
    t = random_graph_target(np.random.default_rng(1), 30, "tree", extra=5)
    chain = iit_run(t, SQRT, 0, 500, seed=3)
    prev = 0
    for x in chain.states:
        assert x in t.neighbors(prev)
        prev = x
    ex = build_exact(t, SQRT)
    assert np.allclose(chain.log_weights, -ex.log_Zh[chain.states])


def test_iit_eval_accounting_and_budget():
    t = random_graph_target(np.random.default_rng(2), 20, "grid")
    chain = iit_run(t, SQRT, 0, 50, seed=1)
    expected = 1 + len(t.neighbors(0)) + sum(len(t.neighbors(x)) for x in chain.states)
    assert chain.posterior_evals == expected
    capped = iit_run(t, SQRT, 0, 10**6, seed=1, max_evals=200)
    assert capped.posterior_evals <= 200
    assert capped.posterior_evals > 200 - max(len(a) for a in t.adjacency)
    assert capped.states == chain.states[: len(capped)] or len(capped) > len(chain)


def test_iit_rejects_non_balancing_rule():
    with pytest.raises(ContractError):
        iit_run(PATH3, power(0.3), 0, 10, seed=0)


def test_seed_determinism_and_cache_equivalence():
    t = random_graph_target(np.random.default_rng(5), 40, "tree", extra=10)
    a = iit_run(t, PLUS_ONE, 0, 300, seed=9)
    b = iit_run(t, PLUS_ONE, 0, 300, seed=9)
    c = iit_run(t, PLUS_ONE, 0, 300, seed=9, cache=True)
    assert a.states == b.states == c.states
    assert np.array_equal(a.log_weights, c.log_weights)
    assert a.posterior_evals == c.posterior_evals


def test_power_half_reproduces_sqrt_trajectory():
    t = random_graph_target(np.random.default_rng(6), 25, "tree", extra=4)
    a = iit_run(t, SQRT, 0, 200, seed=4)
    b = iit_power_run(t, 0.5, 0, 200, seed=4)
    assert a.states == b.states
    # same weights up to the constant that cancels in self-normalization
    assert np.allclose(b.log_weights, a.log_weights)


def test_power_weights_match_exact_omega_up_to_constant():
    t = random_graph_target(np.random.default_rng(7), 15, "tree", extra=3)
    chain = iit_power_run(t, 0.3, 0, 200, seed=2)
    ex = build_exact(t, 0.3)
    diff = chain.log_weights - ex.log_omega[chain.states]
    assert np.ptp(diff) < 1e-10


def test_iit_estimates_converge_on_path():
    f = lambda x: float(x)
    exact = enumerate_expectation(PATH3, f)
    for rule in (SQRT, MIN, PLUS_ONE):
        est = estimate(iit_run(PATH3, rule, 0, 20000, seed=11), f)
        assert abs(est.estimate - exact) < 0.03


def test_rwmh_frequencies_match_target():
    t = random_graph_target(np.random.default_rng(3), 8, "tree", extra=3, scale=0.7)
    chain = rwmh_run(t, 0, 60000, seed=5)
    freq = np.bincount(chain.states, minlength=8) / len(chain)
    assert np.abs(freq - normalized_pi(t)).max() < 0.03
    assert chain.posterior_evals == 60001


def test_ads_mixture_renormalizes():
    assert np.allclose(ads_mixture((3, 0, 0)), [1, 0, 0])
    assert np.allclose(ads_mixture((3, 2, 6)), [0.4, 0.4, 0.2])
    assert np.allclose(ads_mixture((3, 2, 0)), [0.5, 0.5, 0])


def test_ads_exact_kernel_is_reversible_for_pi_and_sampler_agrees():
    data = simulate_regression(40, 5, 2, 2.0, seed=1)
    t = variable_selection(data)
    K = ads_kernel(t)
    assert np.allclose(K.P.sum(axis=1), 1.0)
    F = K.pi[:, None] * K.P
    assert np.abs(F - F.T).max() < 1e-14
    chain = ads_run(t, 0, 40000, seed=3)
    freq = np.bincount(chain.states, minlength=32) / len(chain)
    assert np.abs(freq - K.pi).max() < 0.03


def test_ads_requires_partition():
    with pytest.raises(ContractError):
        ads_run(PATH3, 0, 10, seed=0)


def test_zanella_time_budget_and_time_average():
    traj = zanella_run(PATH3, SQRT, 0, 3000.0, seed=8)
    assert traj.holding_times.sum() == pytest.approx(3000.0)
    est = estimate(traj.to_weighted_chain(), lambda x: float(x == 0))
    assert abs(est.estimate - 0.7) < 0.05


def test_estimate_constant_and_bounds():
    chain = WeightedChain([0, 1, 2, 1], np.array([-700.0, 0.0, 5.0, 700.0]), 0, {}, 0)
    assert estimate(chain, lambda x: 3.25).estimate == 3.25
    rep = estimate(chain, lambda x: float(x))
    assert 0 <= rep.estimate <= 2
    assert 1.0 <= rep.ess <= 4


def test_ess_matches_definition():
    lw = np.log(np.array([1.0, 2.0, 3.0, 4.0]))
    chain = WeightedChain([0, 1, 2, 3], lw, 0, {}, 0)
    w = np.exp(lw)
    assert estimate(chain, float).ess == pytest.approx(w.sum() ** 2 / (w**2).sum())


def test_summarize_replicates():
    x = np.random.default_rng(0).normal(size=500)
    s = summarize_replicates(x)
    assert s.variance == pytest.approx(np.var(x, ddof=1))
    assert s.standard_error == pytest.approx(math.sqrt(np.var(x, ddof=1) / 500))
    # normal data: var(s^2) ~ 2 sigma^4 / r
    assert s.variance_standard_error == pytest.approx(math.sqrt(2 / 500), rel=0.25)
    with pytest.raises(ValueError):
        summarize_replicates([1.0])


def test_chain_csv(tmp_path):
    chain = iit_run(PATH3, SQRT, 0, 5, seed=1)
    path = tmp_path / "c.csv"
    chain.to_csv(path, PATH3, {"f": float})
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["iteration", "state", "log_weight", "f"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "4", "5"]
    assert float(rows[1][2]) == chain.log_weights[0]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-50, 50)), min_size=1, max_size=40))
def test_estimate_is_a_convex_combination(pairs):
    vals = [v for v, _ in pairs]
    lw = np.array([w for _, w in pairs])
    chain = WeightedChain(list(range(len(pairs))), lw, 0, {}, 0)
    rep = estimate(chain, lambda i: vals[i])
    assert min(vals) <= rep.estimate <= max(vals)
    assert rep.normalizer_sum == pytest.approx(logsumexp(lw))
