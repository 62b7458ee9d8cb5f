"""Concrete target distributions."""

from .diagnostics import count_local_modes, is_local_mode, nu_histogram, nu_statistic
from .inclusion import InclusionTarget, TwoModeHypercube, members, two_mode_hypercube
from .permutations import PermutationTarget, PermutationWeights, weighted_permutations
from .regression import (
    IncrementalCholesky,
    RegressionData,
    VariableSelectionTarget,
    cholesky_rank_one_update,
    simulate_regression,
    variable_selection,
)
from .toy import toy_chain, toy_log_masses
