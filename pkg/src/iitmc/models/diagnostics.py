"""Landscape diagnostics evaluated along sampler paths."""

from __future__ import annotations

import math

import numpy as np

from ..core import ContractError, DiscreteTarget


def nu_statistic(target: DiscreteTarget, x) -> float:
    """``max_{y in N(x)} log_p(pi(y) / pi(x))``; negative exactly at strict local modes."""
    _, lm = target.neighbor_log_masses(x)
    return float((lm.max() - target.log_mass(x)) / math.log(target.dimension_p))


def is_local_mode(target: DiscreteTarget, x) -> bool:
    _, lm = target.neighbor_log_masses(x)
    return bool(target.log_mass(x) > lm.max())


def count_local_modes(target: DiscreteTarget, visited) -> int:
    """Distinct states in ``visited`` whose mass strictly exceeds every neighbor's.

    Ties are not modes: a state sharing the top mass with a neighbor is not counted.
    """
    distinct = list(dict.fromkeys(visited))
    if not distinct:
        raise ContractError("visited set is empty")
    return sum(is_local_mode(target, x) for x in distinct)


def nu_histogram(values, edges=(-np.inf, 0.0, 1.0, 2.0, 3.0, 4.0, np.inf)) -> dict:
    """Counts of ``nu`` values per half-open bin ``[lo, hi)``, keyed ``"lo,hi"``."""
    v = np.asarray(values, dtype=float)
    out = {}
    for lo, hi in zip(edges[:-1], edges[1:]):
        out[f"{lo:g},{hi:g}"] = int(np.count_nonzero((v >= lo) & (v < hi)))
    return out
