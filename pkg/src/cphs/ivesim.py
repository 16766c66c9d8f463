"""Synthetic stated-choice experiments.

Stands in for both the immersive virtual environment and the physical
facility: builds the seasonal event schedule, samples light-switch actions
from a behavior model, and produces perturbed copies of the ground truth
that play the role of auxiliary distributions.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .domain import (
    EVENT_TYPES,
    SEASONS,
    ContextPredicate,
    ContextVector,
    GroundTruthSCM,
)
from .errors import ConstructionError, ContractError, EmptyContextError
from .metrics import EmpiricalDistribution, wasserstein1

SCENARIOS = ("no_artificial", "possible_artificial", "artificial")
ACTIONS = ("switch_on", "switch_off", "no_action")
CHANNELS = ("ive", "physical", "existing")

CASE_STUDY_COUNTS = {
    "initial": 36,
    "arrival": 36,
    "short_leave": 18,
    "short_return": 18,
    "long_leave": 18,
    "long_return": 18,
    "departure": 36,
}

EVENT_TIME = {
    "initial": 7.5,
    "arrival": 8.0,
    "short_leave": 10.0,
    "short_return": 10.5,
    "long_leave": 12.0,
    "long_return": 13.0,
    "departure": 17.0,
}
OCCUPIED_EVENTS = {"arrival", "short_return", "long_return"}
LEAVING_EVENTS = {"short_leave", "long_leave", "departure"}

# Median outdoor illuminance (lux) per season and daylight scenario.
OUTDOOR_BASE = {
    "spring": (30000.0, 6000.0, 400.0),
    "summer": (50000.0, 9000.0, 700.0),
    "fall": (25000.0, 5000.0, 300.0),
    "winter": (15000.0, 3500.0, 150.0),
}

# season x scenario x lights x blinds; subject rotation walks this cycle
_CYCLE = 4 * 3 * 2 * 2

DATASET_COLUMNS = (
    "subject_id",
    "slot",
    "channel",
    "event_type",
    "season",
    "scenario",
    "time_of_day",
    "work_lux",
    "outdoor_lux",
    "occupancy",
    "leave_status",
    "blinds",
    "lights_on_before",
    "action",
)


def leave_status_of(event_type):
    if event_type.startswith("short"):
        return "short"
    if event_type.startswith("long"):
        return "long"
    return "none"


@dataclass(frozen=True)
class ScheduleConfig:
    counts: Mapping[str, int] = field(default_factory=lambda: dict(CASE_STUDY_COUNTS))
    seed: int = 2019
    outdoor_jitter: float = 0.25
    work_jitter: float = 0.15
    transfer_up: float = 0.02
    transfer_down: float = 0.005
    artificial_lux: float = 350.0
    floor_lux: float = 5.0
    switch_off_rate: float = 0.0

    def __post_init__(self):
        unknown = set(self.counts) - set(EVENT_TYPES)
        if unknown:
            raise ContractError(f"unknown event types in schedule counts: {sorted(unknown)}")
        if any(n < 0 for n in self.counts.values()):
            raise ContractError("event counts must be non-negative")


@dataclass(frozen=True)
class Slot:
    index: int
    event_type: str
    season: str
    scenario: str
    time_of_day: float
    blinds: str
    lights_on: bool
    outdoor_lux: float
    work_lux: float

    @property
    def context(self) -> ContextVector:
        return ContextVector(
            work_illuminance=self.work_lux,
            outdoor_illuminance=self.outdoor_lux,
            occupancy=self.event_type in OCCUPIED_EVENTS,
            leave_status=leave_status_of(self.event_type),
            event_type=self.event_type,
            season=self.season,
            time_of_day=self.time_of_day,
            blinds=self.blinds,
            lights_currently_on=self.lights_on,
        )


@dataclass(frozen=True)
class StedSchedule:
    slots: tuple[Slot, ...]
    config: ScheduleConfig
    subject: int = 0

    def __len__(self):
        return len(self.slots)

    def __iter__(self):
        return iter(self.slots)

    def event_counts(self):
        return {e: sum(s.event_type == e for s in self.slots) for e in EVENT_TYPES}

    def restrict(self, predicate: ContextPredicate) -> "StedSchedule":
        return replace(self, slots=tuple(s for s in self.slots if predicate.matches(s.context)))


def build_sted_schedule(config: ScheduleConfig, subject: int = 0) -> StedSchedule:
    """Lay out event slots in event-type blocks and assign their conditions.

    Slot ``g`` of subject ``s`` takes the ``(g + s) mod 48`` entry of the
    season x scenario x lights x blinds cycle, so seasons are balanced within
    one subject and every event type sees the full factorial once the
    subject count is a multiple of 48. Illuminance jitter is drawn from the
    schedule seed and the subject index only.
    """
    total = sum(config.counts.get(e, 0) for e in EVENT_TYPES)
    if total == 0:
        raise ContractError("schedule breakdown has zero events")
    rng = np.random.default_rng([config.seed, subject])
    slots = []
    g = 0
    for event in EVENT_TYPES:
        for _ in range(config.counts.get(event, 0)):
            k = (g + subject) % _CYCLE
            season = SEASONS[k % 4]
            scenario_idx = (k // 4) % 3
            lights_on = bool((k // 12) % 2)
            blinds = "up" if (k // 24) % 2 == 0 else "down"
            outdoor = OUTDOOR_BASE[season][scenario_idx] * math.exp(config.outdoor_jitter * rng.standard_normal())
            transfer = config.transfer_up if blinds == "up" else config.transfer_down
            daylight = outdoor * transfer * math.exp(config.work_jitter * rng.standard_normal())
            work = daylight + config.artificial_lux * lights_on + config.floor_lux
            slots.append(
                Slot(
                    index=g,
                    event_type=event,
                    season=season,
                    scenario=SCENARIOS[scenario_idx],
                    time_of_day=EVENT_TIME[event],
                    blinds=blinds,
                    lights_on=lights_on,
                    outdoor_lux=round(outdoor, 6),
                    work_lux=round(work, 6),
                )
            )
            g += 1
    return StedSchedule(tuple(slots), config, subject)


# ---------------------------------------------------------------------------
# Records


@dataclass(frozen=True)
class EventRecord:
    subject_id: int
    slot: int
    context: ContextVector
    action: str
    channel: str
    scenario: str = "possible_artificial"

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ContractError(f"unknown action {self.action!r}")
        if self.channel not in CHANNELS:
            raise ContractError(f"unknown channel {self.channel!r}")
        if self.action == "switch_on" and self.context.lights_currently_on:
            raise ContractError("cannot switch lights on when they are already on")
        if self.action == "switch_off" and not self.context.lights_currently_on:
            raise ContractError("cannot switch lights off when they are already off")


def run_stated_choice(schedule: StedSchedule, model, channel: str, seed, subject_id=None) -> list[EventRecord]:
    """Sample one action per slot from ``model.probability(context)``.

    With lights off the switch-on draw succeeds with the model probability.
    With lights on, switch-on is illegal; on leaving events the occupant
    switches off with the configured rate, otherwise nothing happens.
    """
    if len(schedule) == 0:
        raise ContractError("schedule is empty")
    rng = np.random.default_rng(seed)
    subject_id = schedule.subject if subject_id is None else subject_id
    off_rate = schedule.config.switch_off_rate
    records = []
    for slot in schedule:
        ctx = slot.context
        p = min(1.0, max(0.0, model.probability(ctx)))
        u = rng.random()
        if not ctx.lights_currently_on:
            action = "switch_on" if u < p else "no_action"
        elif slot.event_type in LEAVING_EVENTS and u < off_rate:
            action = "switch_off"
        else:
            action = "no_action"
        records.append(EventRecord(subject_id, slot.index, ctx, action, channel, slot.scenario))
    return records


def run_experiment(config: ScheduleConfig, model, channel: str, seed: int, n_subjects: int = 1) -> list[EventRecord]:
    """Run ``n_subjects`` i.i.d. subjects over their (rotated) schedules."""
    records = []
    for s in range(n_subjects):
        schedule = build_sted_schedule(config, subject=s)
        records.extend(run_stated_choice(schedule, model, channel, [seed, s], subject_id=s))
    return records


def _fmt(x):
    return repr(float(x))


def dataset_csv(records: Sequence[EventRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DATASET_COLUMNS)
    for r in records:
        c = r.context
        writer.writerow(
            [
                r.subject_id,
                r.slot,
                r.channel,
                c.event_type,
                c.season,
                r.scenario,
                _fmt(c.time_of_day),
                _fmt(c.work_illuminance),
                _fmt(c.outdoor_illuminance),
                int(c.occupancy),
                c.leave_status,
                c.blinds,
                int(c.lights_currently_on),
                r.action,
            ]
        )
    return buf.getvalue()


def write_dataset(records: Sequence[EventRecord], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(dataset_csv(records))


def read_dataset(path) -> list[EventRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != DATASET_COLUMNS:
            raise ContractError(f"{path}: unexpected dataset header {reader.fieldnames}")
        records = []
        for row in reader:
            ctx = ContextVector(
                work_illuminance=float(row["work_lux"]),
                outdoor_illuminance=float(row["outdoor_lux"]),
                occupancy=row["occupancy"] == "1",
                leave_status=row["leave_status"],
                event_type=row["event_type"],
                season=row["season"],
                time_of_day=float(row["time_of_day"]),
                blinds=row["blinds"],
                lights_currently_on=row["lights_on_before"] == "1",
            )
            records.append(
                EventRecord(int(row["subject_id"]), int(row["slot"]), ctx, row["action"], row["channel"], row["scenario"])
            )
    return records


def to_frame(records: Sequence[EventRecord]) -> pd.DataFrame:
    """Tabular view with log10 illuminance and a binary switch-on outcome."""
    rows = []
    for r in records:
        c = r.context
        rows.append(
            {
                "subject_id": r.subject_id,
                "slot": r.slot,
                "event_type": c.event_type,
                "season": c.season,
                "scenario": r.scenario,
                "work_lux": math.log10(max(c.work_illuminance, 1e-3)),
                "outdoor_lux": math.log10(max(c.outdoor_illuminance, 1e-3)),
                "occupancy": int(c.occupancy),
                "leave_status": c.leave_status,
                "blinds": int(c.blinds == "down"),
                "lights_on": int(c.lights_currently_on),
                "switch_on": int(r.action == "switch_on"),
            }
        )
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Auxiliary models

PROFILE_GRID_SEED = 64
PROFILE_GRID_SIZE = 512


def profile_contexts(seed=PROFILE_GRID_SEED, n=PROFILE_GRID_SIZE) -> list[ContextVector]:
    """Random reference contexts on which response profiles are compared."""
    rng = np.random.default_rng(seed)
    contexts = []
    for _ in range(n):
        event = EVENT_TYPES[rng.integers(len(EVENT_TYPES))]
        contexts.append(
            ContextVector(
                work_illuminance=float(10 ** rng.uniform(1.3, 3.3)),
                outdoor_illuminance=float(10 ** rng.uniform(1.7, 4.8)),
                occupancy=event in OCCUPIED_EVENTS,
                leave_status=leave_status_of(event),
                event_type=event,
                season=SEASONS[rng.integers(4)],
                time_of_day=EVENT_TIME[event],
                blinds=("up", "down")[rng.integers(2)],
                lights_currently_on=False,
            )
        )
    return contexts


def profile_distance(model_a, model_b, contexts: Sequence[ContextVector]) -> float:
    """W1 between the response-probability profiles of two models."""
    pa = [model_a.probability(c) for c in contexts]
    pb = [model_b.probability(c) for c in contexts]
    return wasserstein1(EmpiricalDistribution(pa), EmpiricalDistribution(pb))


@dataclass(frozen=True)
class AuxiliaryModel:
    model: GroundTruthSCM
    radius: float
    distance: float
    alpha: float

    def probability(self, context):
        return self.model.probability(context)


def perturb_ground_truth(
    truth: GroundTruthSCM,
    alpha: float,
    k: int,
    seed,
    scale: float = 0.5,
    max_rejections: int = 200,
    grid_seed: int = PROFILE_GRID_SEED,
) -> list[AuxiliaryModel]:
    """Shift every truth coefficient by U(-scale, scale), keeping draws within ``alpha``."""
    if alpha <= 0 or k < 1:
        raise ContractError("need alpha > 0 and k >= 1")
    rng = np.random.default_rng(seed)
    grid = profile_contexts(grid_seed)
    base = truth.coefficient_vector()
    models = []
    for j in range(k):
        best = math.inf
        for _ in range(max_rejections):
            candidate = truth.with_coefficients(base + rng.uniform(-scale, scale, size=base.shape))
            d = profile_distance(candidate, truth, grid)
            if d <= alpha:
                models.append(AuxiliaryModel(candidate, scale, d, alpha))
                break
            best = min(best, d)
        else:
            raise ConstructionError(
                f"auxiliary model {j}: no perturbation within alpha={alpha} after "
                f"{max_rejections} draws (closest {best:.4f})"
            )
    return models


# ---------------------------------------------------------------------------
# Predicate-restricted sampling


class CoverageReport(NamedTuple):
    n_records: int
    n_overlap: int
    overlap_fraction: float


def restricted_sample(schedule, model, predicate, approx_predicate, seed, channel="ive"):
    """Sample only the slots satisfying ``approx_predicate``.

    The report gives the share of those records that also satisfy the
    intended ``predicate``.
    """
    sub = schedule.restrict(approx_predicate)
    if len(sub) == 0:
        raise EmptyContextError("approximate predicate selects no schedule slot")
    records = run_stated_choice(sub, model, channel, seed)
    overlap = sum(predicate.matches(r.context) for r in records)
    return records, CoverageReport(len(records), overlap, overlap / len(records))
