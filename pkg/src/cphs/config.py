"""Sectioned key-value configuration shared by every command.

Example::

    [hunt]
    a = 0.0
    c = 0.9
    b = 3.0
    m = 2.2

    [causal]
    variables = work_lux, outdoor_lux, occupancy
    pilot_edges = outdoor_lux -> work_lux, work_lux -> switch_on
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .domain import (
    EVENT_TYPES,
    Categorical,
    CphsDesign,
    DesignSpecification,
    DesignVariable,
    FiniteSet,
    GroundTruthSCM,
    HuntModel,
    Interval,
    PointMass,
    ProbitTarget,
    ScaledBeta,
    Uniform,
)
from .errors import ContractError
from .fusion import TrainingConfig
from .ivesim import CASE_STUDY_COUNTS, ScheduleConfig


@dataclass(frozen=True)
class IveConfig:
    alpha: float = 0.1
    k: int = 1
    perturbation_scale: float = 0.5
    max_rejections: int = 200
    subjects: int = 1
    facility_subjects: int = 48


@dataclass(frozen=True)
class CausalConfig:
    outcome: str = "switch_on"
    variables: tuple[str, ...] = ("work_lux", "outdoor_lux", "occupancy", "leave_status", "lights_on")
    pilot_edges: tuple[tuple[str, str], ...] = ()
    candidate_variables: tuple[str, ...] = ()
    alpha_sig: float = 0.01
    negligible: float = 0.02
    budget: int = 2
    max_cond: int = 2
    quantile_bins: int = 4


@dataclass(frozen=True)
class LoopConfig:
    hunt: HuntModel
    target: ProbitTarget
    truth: GroundTruthSCM
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    ive: IveConfig = field(default_factory=IveConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    causal: CausalConfig = field(default_factory=CausalConfig)
    design: CphsDesign | None = None
    specification: DesignSpecification | None = None
    epsilon: float = 0.01
    beta: float = 0.5
    graph_floor: int = 0
    max_iterations: int = 3
    seed: int = 0
    source: str = ""

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ContractError("max_iterations must be at least 1")
        for name in ("epsilon", "beta"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")
        if self.ive.alpha <= 0 or self.causal.alpha_sig <= 0 or self.causal.negligible <= 0:
            raise ContractError("alpha, alpha_sig and negligible must be positive")

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def _names(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _edges(text):
    edges = []
    for item in text.split(","):
        if not item.strip():
            continue
        if "->" not in item:
            raise ContractError(f"edge {item.strip()!r} is not of the form 'a -> b'")
        u, v = (s.strip() for s in item.split("->", 1))
        edges.append((u, v))
    return tuple(edges)


def _domain(text):
    kind, _, rest = text.strip().partition(" ")
    if kind == "interval":
        lo, hi = _floats(rest)
        return Interval(lo, hi)
    if kind == "set":
        return FiniteSet(tuple(_parse_value(v) for v in rest.replace(",", " ").split()))
    raise ContractError(f"unknown domain kind {kind!r}")


def _parse_value(token):
    try:
        return float(token)
    except ValueError:
        return token


def _distribution(text):
    kind, _, rest = text.strip().partition(" ")
    if kind == "uniform":
        return Uniform(*_floats(rest))
    if kind == "point":
        return PointMass(_parse_value(rest.strip()))
    if kind == "beta":
        return ScaledBeta(*_floats(rest))
    if kind == "categorical":
        pairs = [p.split(":") for p in rest.replace(",", " ").split()]
        return Categorical(tuple(_parse_value(v) for v, _ in pairs), tuple(float(p) for _, p in pairs))
    raise ContractError(f"unknown distribution kind {kind!r}")


def _required(section, key):
    if key not in section:
        raise ContractError(f"missing key {key!r} in [{section.name}]")
    try:
        return float(section[key])
    except ValueError:
        raise ContractError(f"[{section.name}] {key} is not a number: {section[key]!r}") from None


def _section(parser, name):
    return parser[name] if parser.has_section(name) else {}


def parse_config(text: str, source: str = "<string>") -> LoopConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text, source=source)
    for required in ("hunt", "probit_target", "scm"):
        if not parser.has_section(required):
            raise ContractError(f"{source}: missing [{required}] section")

    h = parser["hunt"]
    hunt = HuntModel(*(_required(h, k) for k in ("a", "c", "b", "m")))
    p = parser["probit_target"]
    target = ProbitTarget(_required(p, "beta0"), _required(p, "beta1"))
    s = parser["scm"]
    truth = GroundTruthSCM(
        intercept=s.getfloat("intercept", 0.0),
        work=s.getfloat("work", 0.0),
        outdoor=s.getfloat("outdoor", 0.0),
        occupancy=s.getfloat("occupancy", 0.0),
        leave_short=s.getfloat("leave_short", 0.0),
        leave_long=s.getfloat("leave_long", 0.0),
        event_effects={e: s.getfloat(f"event.{e}") for e in EVENT_TYPES if f"event.{e}" in s},
        noise_seed=s.getint("noise_seed", 0),
    )

    sc = _section(parser, "schedule")
    defaults = ScheduleConfig()
    counts = {e: int(sc.get(f"count.{e}", CASE_STUDY_COUNTS[e])) for e in EVENT_TYPES}
    schedule = ScheduleConfig(
        counts=counts,
        **{
            name: type(getattr(defaults, name))(sc[name])
            for name in ("seed", "outdoor_jitter", "work_jitter", "transfer_up", "transfer_down", "artificial_lux", "floor_lux", "switch_off_rate")
            if name in sc
        },
    )

    iv = _section(parser, "ive")
    ive_defaults = IveConfig()
    ive = IveConfig(**{k: type(getattr(ive_defaults, k))(iv[k]) for k in vars(ive_defaults) if k in iv})

    tr = _section(parser, "training")
    tr_defaults = TrainingConfig()
    kwargs = {}
    for k in ("max_epochs", "batch_size", "noise_dim", "mc_samples", "n_bins"):
        if k in tr:
            kwargs[k] = int(tr[k])
    for k in ("learning_rate", "discrepancy_threshold", "bin_lower", "bin_upper"):
        if k in tr:
            kwargs[k] = float(tr[k])
    if "hidden" in tr:
        kwargs["hidden"] = tuple(int(v) for v in _floats(tr["hidden"]))
    if "real_bernoulli" in tr:
        kwargs["real_bernoulli"] = parser.getboolean("training", "real_bernoulli")
    training = replace(tr_defaults, **kwargs)

    ca = _section(parser, "causal")
    causal_defaults = CausalConfig()
    causal = CausalConfig(
        outcome=ca.get("outcome", causal_defaults.outcome).strip(),
        variables=_names(ca["variables"]) if "variables" in ca else causal_defaults.variables,
        pilot_edges=_edges(ca.get("pilot_edges", "")),
        candidate_variables=_names(ca.get("candidate_variables", "")),
        alpha_sig=float(ca.get("alpha_sig", causal_defaults.alpha_sig)),
        negligible=float(ca.get("negligible", causal_defaults.negligible)),
        budget=int(ca.get("budget", causal_defaults.budget)),
        max_cond=int(ca.get("max_cond", causal_defaults.max_cond)),
        quantile_bins=int(ca.get("quantile_bins", causal_defaults.quantile_bins)),
    )

    variables = []
    for name in parser.sections():
        if name.startswith("design.variables."):
            sec = parser[name]
            variables.append(
                DesignVariable(name[len("design.variables."):], _domain(sec["domain"]), _distribution(sec["distribution"]))
            )
    design = CphsDesign(tuple(variables)) if variables else None
    specification = None
    if parser.has_section("design.specification"):
        sec = parser["design.specification"]
        target_value = float(sec.get("target", 0.0))
        if sec.get("evaluator", "linear").strip() == "constant":
            specification = DesignSpecification.constant(float(sec.get("value", 0.0)), target_value)
        else:
            weights = {k.strip(): float(v) for k, v in (item.split(":") for item in sec["weights"].replace(",", " ").split())}
            specification = DesignSpecification.linear(weights, target_value)

    lp = _section(parser, "loop")
    return LoopConfig(
        hunt=hunt,
        target=target,
        truth=truth,
        schedule=schedule,
        ive=ive,
        training=training,
        causal=causal,
        design=design,
        specification=specification,
        epsilon=float(lp.get("epsilon", 0.01)),
        beta=float(lp.get("beta", 0.5)),
        graph_floor=int(lp.get("graph_floor", 0)),
        max_iterations=int(lp.get("max_iterations", 3)),
        seed=int(lp.get("seed", 0)),
        source=source,
    )


def load_config(path) -> LoopConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))
