"""Design variables, occupant contexts and the parametric behavior models.

Every behavior model exposes ``probability(context)`` so that simulators and
metrics can treat them interchangeably. Illuminance enters all models on a
log10 scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DomainError

LEAVE_STATUSES = ("none", "short", "long")
EVENT_TYPES = (
    "initial",
    "arrival",
    "short_leave",
    "short_return",
    "long_leave",
    "long_return",
    "departure",
)
SEASONS = ("spring", "summer", "fall", "winter")
BLINDS = ("up", "down")

NUMERIC_FIELDS = {
    "work_illuminance": (0.0, math.inf),
    "outdoor_illuminance": (0.0, math.inf),
    "time_of_day": (0.0, 24.0),
}
ENUM_FIELDS = {
    "occupancy": (False, True),
    "leave_status": LEAVE_STATUSES,
    "event_type": EVENT_TYPES,
    "season": SEASONS,
    "blinds": BLINDS,
    "lights_currently_on": (False, True),
}


def _log10_lux(lux):
    if not lux > 0:
        raise DomainError(f"illuminance must be positive, got {lux}")
    return math.log10(lux)


def logistic(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ez = math.exp(x)
    return ez / (1.0 + ez)


def normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


# ---------------------------------------------------------------------------
# Design variables


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ContractError(f"interval needs lower < upper, got [{self.lower}, {self.upper}]")

    def contains(self, value):
        return self.lower <= value <= self.upper

    def covers(self, other):
        if isinstance(other, Interval):
            return self.lower <= other.lower and other.upper <= self.upper
        return all(isinstance(v, (int, float)) and self.contains(v) for v in other.values)


@dataclass(frozen=True)
class FiniteSet:
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise ContractError("finite domain must be non-empty")

    def contains(self, value):
        return value in self.values

    def covers(self, other):
        if isinstance(other, Interval):
            return False
        return set(other.values) <= set(self.values)


@dataclass(frozen=True)
class Uniform:
    lower: float
    upper: float

    def support(self):
        return Interval(self.lower, self.upper)

    def sample(self, rng):
        return float(rng.uniform(self.lower, self.upper))


@dataclass(frozen=True)
class PointMass:
    value: object

    def support(self):
        return FiniteSet((self.value,))

    def sample(self, rng):
        return self.value


@dataclass(frozen=True)
class Categorical:
    values: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ContractError("categorical needs one probability per value")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ContractError("categorical probabilities must be non-negative and sum to 1")

    def support(self):
        return FiniteSet(tuple(v for v, p in zip(self.values, self.probs) if p > 0))

    def sample(self, rng):
        return self.values[int(rng.choice(len(self.values), p=np.asarray(self.probs)))]


@dataclass(frozen=True)
class ScaledBeta:
    """Beta(a, b) stretched onto [lower, upper]."""

    a: float
    b: float
    lower: float
    upper: float

    def support(self):
        return Interval(self.lower, self.upper)

    def sample(self, rng):
        return float(self.lower + (self.upper - self.lower) * rng.beta(self.a, self.b))


@dataclass(frozen=True)
class DesignVariable:
    name: str
    domain: Interval | FiniteSet
    distribution: Uniform | PointMass | Categorical | ScaledBeta

    def __post_init__(self):
        if not self.domain.covers(self.distribution.support()):
            raise ContractError(f"distribution support of {self.name!r} escapes its domain")


@dataclass(frozen=True)
class CphsDesign:
    variables: tuple[DesignVariable, ...]

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ContractError(f"duplicate design variable names in {names}")

    @property
    def names(self):
        return tuple(v.name for v in self.variables)


@dataclass(frozen=True)
class DesignSpecification:
    """A named scalar evaluator over design assignments and its target value."""

    name: str
    evaluator: Callable[[Mapping[str, object]], float]
    variables: tuple[str, ...]
    target_value: float

    @classmethod
    def constant(cls, k, target_value=0.0):
        return cls("constant", lambda assignment: float(k), (), target_value)

    @classmethod
    def linear(cls, weights: Mapping[str, float], target_value=0.0):
        weights = dict(weights)
        return cls(
            "linear",
            lambda assignment: float(sum(w * assignment[n] for n, w in weights.items())),
            tuple(weights),
            target_value,
        )


def sample_design(design: CphsDesign, seed) -> dict[str, object]:
    """Draw every design variable independently from its own distribution."""
    rng = np.random.default_rng(seed)
    return {v.name: v.distribution.sample(rng) for v in design.variables}


def evaluate_specification(spec: DesignSpecification, assignment: Mapping[str, object]) -> float:
    for name in spec.variables:
        if name not in assignment:
            raise ContractError(f"assignment is missing design variable {name!r}")
    return spec.evaluator(assignment)


# ---------------------------------------------------------------------------
# Contexts


@dataclass(frozen=True)
class ContextVector:
    work_illuminance: float
    outdoor_illuminance: float
    occupancy: bool
    leave_status: str
    event_type: str
    season: str
    time_of_day: float
    blinds: str
    lights_currently_on: bool

    def __post_init__(self):
        for name in ("work_illuminance", "outdoor_illuminance"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ContractError(f"{name} must be finite and non-negative, got {value}")
        if not 0.0 <= self.time_of_day < 24.0:
            raise ContractError(f"time_of_day must be in [0, 24), got {self.time_of_day}")
        for name, allowed in ENUM_FIELDS.items():
            if getattr(self, name) not in allowed:
                raise ContractError(f"{name}={getattr(self, name)!r} not in {allowed}")


@dataclass(frozen=True)
class ContextPredicate:
    """Conjunction of closed numeric ranges and enum subsets over context fields."""

    ranges: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    subsets: Mapping[str, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        for name, (lo, hi) in self.ranges.items():
            if name not in NUMERIC_FIELDS:
                raise ContractError(f"{name!r} is not a numeric context field")
            dom_lo, dom_hi = NUMERIC_FIELDS[name]
            if not lo <= hi or hi < dom_lo or lo >= dom_hi:
                raise ContractError(f"range {name} in [{lo}, {hi}] is unsatisfiable")
        for name, allowed in self.subsets.items():
            if name not in ENUM_FIELDS:
                raise ContractError(f"{name!r} is not an enum context field")
            if not allowed or not set(allowed) <= set(ENUM_FIELDS[name]):
                raise ContractError(f"subset for {name} must be a non-empty subset of {ENUM_FIELDS[name]}")

    @classmethod
    def everything(cls):
        return cls()

    def matches(self, context: ContextVector) -> bool:
        for name, (lo, hi) in self.ranges.items():
            if not lo <= getattr(context, name) <= hi:
                return False
        return all(getattr(context, name) in allowed for name, allowed in self.subsets.items())


# ---------------------------------------------------------------------------
# Behavior models


@dataclass(frozen=True)
class HuntModel:
    """Existing design model: switch-on probability from work-area illuminance."""

    a: float
    c: float
    b: float
    m: float

    def __post_init__(self):
        if self.a < 0 or self.b <= 0:
            raise ContractError("Hunt model needs a >= 0 and b > 0")
        # a + c may exceed 1 slightly under user configs; outputs are clamped.

    def probability(self, context: ContextVector) -> float:
        return hunt_probability(self, context.work_illuminance)


@dataclass(frozen=True)
class ProbitTarget:
    beta0: float
    beta1: float

    def __post_init__(self):
        if not (math.isfinite(self.beta0) and math.isfinite(self.beta1)):
            raise ContractError("probit coefficients must be finite")

    def probability(self, context: ContextVector) -> float:
        return probit_probability(self, context.work_illuminance)


@dataclass(frozen=True)
class GroundTruthSCM:
    """Hidden logistic response used as the simulator's truth.

    ``event_effects`` holds additive logit offsets per event type; missing
    types contribute zero.
    """

    intercept: float = 0.0
    work: float = 0.0
    outdoor: float = 0.0
    occupancy: float = 0.0
    leave_short: float = 0.0
    leave_long: float = 0.0
    event_effects: Mapping[str, float] = field(default_factory=dict)
    noise_seed: int = 0

    def __post_init__(self):
        unknown = set(self.event_effects) - set(EVENT_TYPES)
        if unknown:
            raise ContractError(f"unknown event types in SCM effects: {sorted(unknown)}")

    def coefficient_vector(self) -> np.ndarray:
        return np.array(
            [self.intercept, self.work, self.outdoor, self.occupancy, self.leave_short, self.leave_long]
            + [self.event_effects.get(e, 0.0) for e in EVENT_TYPES]
        )

    def with_coefficients(self, vector: Sequence[float]) -> "GroundTruthSCM":
        v = [float(x) for x in vector]
        return GroundTruthSCM(*v[:6], event_effects=dict(zip(EVENT_TYPES, v[6:])), noise_seed=self.noise_seed)

    def logit(self, context: ContextVector) -> float:
        return (
            self.intercept
            + self.work * math.log10(max(context.work_illuminance, 1e-3))
            + self.outdoor * math.log10(max(context.outdoor_illuminance, 1e-3))
            + self.occupancy * float(context.occupancy)
            + self.leave_short * float(context.leave_status == "short")
            + self.leave_long * float(context.leave_status == "long")
            + self.event_effects.get(context.event_type, 0.0)
        )

    def probability(self, context: ContextVector) -> float:
        return scm_probability(self, context)


def hunt_probability(model: HuntModel, work_illuminance: float) -> float:
    x = _log10_lux(work_illuminance)
    z = model.b * (x - model.m)
    # 1 / (1 + e^z) == logistic(-z), which stays finite for large |z|
    p = model.a + model.c * logistic(-z)
    return min(1.0, max(0.0, p))


def probit_probability(model: ProbitTarget, work_illuminance: float) -> float:
    return normal_cdf(model.beta0 + model.beta1 * _log10_lux(work_illuminance))


def scm_probability(model: GroundTruthSCM, context: ContextVector) -> float:
    return logistic(model.logit(context))
