"""JSON run configuration, validated with pydantic (unknown keys are rejected)."""

from __future__ import annotations

import json
import warnings
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .balancing import parse_rule
from .core import DiscreteTarget, make_rng
from .models import (
    RegressionData,
    simulate_regression,
    toy_chain,
    two_mode_hypercube,
    variable_selection,
    weighted_permutations,
)


class ConfigError(Exception):
    """Raised for unparseable or invalid configuration; maps to exit code 2."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ToyModel(_Strict):
    name: Literal["toy_chain"]
    p: int = Field(ge=2)
    r: float = Field(gt=1)
    profile: Literal["tie", "power", "geometric"] = "tie"
    c: float = 1.0
    seed: int = 0


class HypercubeModel(_Strict):
    name: Literal["two_mode_hypercube"]
    p: int = Field(ge=2)
    r: float = Field(ge=1)
    swaps: bool = False
    seed: int = 0


class PermutationModel(_Strict):
    name: Literal["weighted_permutations"]
    p: int = Field(ge=3)
    eta: float
    scenario: Literal["I", "II"] = "I"
    seed: int = 0


class VariableSelectionModel(_Strict):
    name: Literal["variable_selection"]
    n: Optional[int] = Field(default=None, ge=1)
    p: Optional[int] = Field(default=None, ge=1)
    s_star: int = Field(default=0, ge=0)
    snr: float = 0.0
    data_csv: Optional[str] = None
    g: Optional[float] = Field(default=None, gt=0)
    c0: float = 2.0
    swaps: bool = False
    size_cap: Optional[int] = Field(default=None, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _data_source(self):
        if self.data_csv is None and (self.n is None or self.p is None):
            raise ValueError("variable_selection needs either data_csv or both n and p")
        if self.data_csv is None and self.s_star > self.p:
            raise ValueError("s_star must not exceed p")
        return self


ModelSpec = Annotated[
    Union[ToyModel, HypercubeModel, PermutationModel, VariableSelectionModel],
    Field(discriminator="name"),
]


class SamplerSpec(_Strict):
    name: Literal["iit", "iit_power", "rwmh", "ads", "zanella"]
    rule: Optional[str] = None
    t: Optional[int] = Field(default=None, ge=1)
    time_budget: Optional[float] = Field(default=None, gt=0)
    x0: Optional[str] = None
    cache: bool = False

    @model_validator(mode="after")
    def _rule_needed(self):
        if self.name in ("iit", "iit_power", "zanella") and not self.rule:
            raise ValueError(f"sampler {self.name} needs a rule")
        if self.name == "iit_power" and not self.rule.startswith("pow:"):
            raise ValueError("iit_power needs a rule of the form pow:<a>")
        if self.rule:
            try:
                # bounded rules may take p from the model; validate syntax with a placeholder
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    parse_rule(self.rule, p=2.0)
            except ValueError as exc:
                raise ValueError(str(exc)) from None
        return self

    @property
    def label(self) -> str:
        return f"{self.name}:{self.rule}" if self.rule else self.name


class OutputNames(_Strict):
    chain_csv: str = "chain.csv"
    report_json: str = "report.json"
    exact_json: str = "exact.json"
    summary_csv: str = "summary.csv"
    details_json: str = "experiment.json"


class DecompositionSpec(_Strict):
    labels: list[int]
    T: list[int]
    nu_tilde: float = Field(gt=0)
    epsilon: Optional[float] = Field(default=None, gt=0)
    alpha: Optional[float] = Field(default=None, ge=0)


class ExactSpec(_Strict):
    rules: list[str] = Field(default_factory=lambda: ["sqrt"], min_length=1)
    mixing_time: bool = False
    eps: float = Field(default=0.25, gt=0, lt=1)
    target_set: Optional[list[str]] = None
    trace_set: Optional[list[str]] = None
    decomposition: Optional[DecompositionSpec] = None


class RunConfig(_Strict):
    model: ModelSpec
    sampler: Optional[SamplerSpec] = None
    samplers: Optional[list[SamplerSpec]] = None
    replicates: int = Field(default=2, ge=2)
    functionals: list[str] = Field(default_factory=list)
    seed: int = 0
    match_budget: bool = False
    budget_evals: Optional[int] = Field(default=None, ge=1)
    exact: Optional[ExactSpec] = None
    outputs: OutputNames = Field(default_factory=OutputNames)

    @model_validator(mode="after")
    def _budget(self):
        if self.match_budget and self.budget_evals is None:
            raise ValueError("match_budget requires budget_evals")
        return self


def load_config(text: str) -> RunConfig:
    """Parse and validate; raise :class:`ConfigError` with line or field diagnostics."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(part) for part in err["loc"]) or "<root>"
            lines.append(f"{loc}: {err['msg']}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines)) from None


def build_target(spec) -> DiscreteTarget:
    if isinstance(spec, ToyModel):
        return toy_chain(spec.p, spec.r, spec.profile, spec.c)
    if isinstance(spec, HypercubeModel):
        return two_mode_hypercube(spec.p, spec.r, spec.swaps)
    if isinstance(spec, PermutationModel):
        return weighted_permutations(spec.p, spec.eta, spec.scenario, spec.seed)
    if isinstance(spec, VariableSelectionModel):
        if spec.data_csv is not None:
            data = RegressionData.from_csv(spec.data_csv)
        else:
            data = simulate_regression(spec.n, spec.p, spec.s_star, spec.snr, spec.seed)
        return variable_selection(data, spec.g, spec.c0, spec.swaps, spec.size_cap)
    raise ConfigError(f"unknown model {spec!r}")


def decode_state(target: DiscreteTarget, text: str, seed: int = 0):
    """Parse a state string. Inclusion targets also accept ``random:<k>``."""
    if hasattr(target, "decode"):
        if text.startswith("random:"):
            k = int(text.split(":", 1)[1])
            rng = make_rng([seed, 1])
            chosen = rng.choice(target.p, size=k, replace=False)
            return int(sum(1 << int(j) for j in chosen))
        return target.decode(text)
    try:
        x = int(text)
    except ValueError:
        raise ConfigError(f"cannot parse state {text!r}") from None
    if not 0 <= x < target.state_count():
        raise ConfigError(f"state {x} out of range")
    return x


def default_start(target: DiscreteTarget):
    """Low-mass corner: last path state, full model, reversed permutation, or empty model."""
    name = type(target).__name__
    if name == "GraphTarget":
        return target.state_count() - 1
    if name == "TwoModeHypercube":
        return (1 << target.p) - 1
    if name == "PermutationTarget":
        return tuple(range(target.p - 1, -1, -1))
    return 0


def parse_functional(spec: str, target: DiscreteTarget):
    """Map a functional string to a callable on states.

    ``rank:k`` position of item ``k`` (permutations); ``include:j`` indicator of
    variable ``j``; ``size`` model size; ``value`` the integer state; ``below:m``
    indicator of ``x < m``; ``mass_at:<state>`` indicator of one state.
    """
    kind, _, arg = spec.partition(":")
    try:
        if kind == "rank":
            k = int(arg)
            return lambda tau: tau.index(k - 1) + 1
        if kind == "include":
            j = int(arg) - 1
            return lambda x: float((x >> j) & 1)
        if kind == "size":
            return lambda x: float(x.bit_count())
        if kind == "value":
            return lambda x: float(x)
        if kind == "below":
            m = float(arg)
            return lambda x: float(x < m)
        if kind == "mass_at":
            s = decode_state(target, arg)
            return lambda x: float(x == s)
    except ValueError as exc:
        raise ConfigError(f"bad functional {spec!r}: {exc}") from None
    raise ConfigError(f"unknown functional {spec!r}")


def exact_expectations(target: DiscreteTarget, functionals: dict, limit: int = 1_000_000) -> dict | None:
    """``E_pi[f]`` by enumeration, or None when the space is not enumerable or too large."""
    if not target.enumerable:
        return None
    count = target.state_count()
    if count is None or count > limit:
        return None
    states = target.states()
    lm = np.array([target.log_mass(s) for s in states])
    w = np.exp(lm - lm.max())
    w /= w.sum()
    return {name: float(sum(wi * f(s) for wi, s in zip(w, states))) for name, f in functionals.items()}
