import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iitmc import SQRT, GraphTarget, make_rng
from iitmc.core import (
    ContractError,
    DiscreteTarget,
    StructuralError,
    check_symmetry,
    is_connected,
    local_profile,
    log_base,
)
from oracles import path_target


def test_rng_streams_reproducible_and_distinct():
    a = make_rng(7).random(5)
    assert np.array_equal(a, make_rng(7).random(5))
    assert not np.array_equal(a, make_rng(8).random(5))


def test_graph_target_sorts_neighbors_and_validates():
    t = GraphTarget([[2, 1], [0], [0]], [0.0, -1.0, -2.0])
    assert t.neighbors(0) == [1, 2]
    assert t.state_count() == 3
    with pytest.raises(ValueError):
        GraphTarget([[1], [0]], [0.0])
    with pytest.raises(ValueError):
        GraphTarget([[1], [0]], [0.0, np.inf])
    with pytest.raises(ValueError):
        GraphTarget([[1], [0]], [0.0, 0.0], dimension_p=1.0)


def test_check_symmetry_flags_one_way_edges():
    check_symmetry(path_target([0.0, 0.0, 0.0]))
    with pytest.raises(StructuralError):
        check_symmetry(GraphTarget([[1], [], [1]], [0.0, 0.0, 0.0]))
    with pytest.raises(StructuralError):
        check_symmetry(GraphTarget([[0, 1], [0]], [0.0, 0.0]))


def test_local_profile_matches_hand_computation():
    t = path_target(np.log([0.7, 0.2, 0.1]))
    prof = local_profile(t, SQRT, 1)
    assert prof.neighbors == [0, 2]
    expected = math.sqrt(3.5) + math.sqrt(0.5)
    assert math.isclose(math.exp(prof.log_Zh), expected, rel_tol=1e-14)


def test_local_profile_empty_neighborhood():
    t = GraphTarget([[], []], [0.0, 0.0])
    with pytest.raises(StructuralError):
        local_profile(t, SQRT, 0)


def test_non_enumerable_base_refuses_states():
    with pytest.raises(ContractError):
        DiscreteTarget().states()


def test_evaluator_counts():
    t = path_target([0.0, -1.0, -2.0])
    ev = t.evaluator()
    ev.log_mass(0)
    ev.neighborhood(1)
    assert ev.evals == 3


def test_connectivity():
    assert is_connected([[1], [0, 2], [1]])
    assert not is_connected([[1], [0], []])
    assert log_base(math.log(1000.0), 10.0) == pytest.approx(3.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=30))
def test_profile_log_ratios_are_differences(lms):
    t = path_target(lms)
    for x in (0, len(lms) - 1):
        prof = local_profile(t, SQRT, x)
        assert np.allclose(prof.log_ratios, np.asarray(lms)[prof.neighbors] - lms[x])
