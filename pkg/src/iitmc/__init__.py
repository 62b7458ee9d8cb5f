"""Informed importance tempering for discrete spaces, with exact spectral checks."""

from .balancing import MIN, PLUS_ONE, SQRT, BalancingRule, check_balancing, make_bounded, parse_rule, power
from .core import (
    ContractError,
    DiscreteTarget,
    GraphTarget,
    IITError,
    IrreducibilityError,
    ResourceError,
    StructuralError,
    local_profile,
    make_rng,
)
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

__version__ = "0.1.0"
