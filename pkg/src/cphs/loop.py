"""The closed design loop: simulate, fuse, validate causally, feed back, repeat."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .causal import (
    CausalGraph,
    FeedbackPlan,
    IndependenceTestReport,
    adjustment_set,
    ci_test,
    estimate_ate_ipw,
    graph_distance,
    is_continuous,
    refine_graph,
    test_implications,
)
from .config import LoopConfig
from .errors import StageError
from .fusion import (
    IVE_VARIABLES,
    AugmentedModel,
    ExistingDataset,
    TrainingConfig,
    TrainingHistory,
    existing_curve,
    target_curve,
    train_gan,
)
from .ivesim import EventRecord, build_sted_schedule, perturb_ground_truth, run_experiment, to_frame
from .metrics import target_discrepancy

log = logging.getLogger(__name__)

TERMINATION_REASONS = ("graph_converged", "discrepancy_met", "max_iterations")
STAGES = ("existing", "auxiliary", "ive", "train", "facility")


def derive_seed(master: int, iteration: int, stage: str) -> int:
    """64-bit stage seed from the master seed, iteration index and stage name."""
    digest = hashlib.blake2b(f"{master}/{iteration}/{stage}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass
class LoopState:
    iteration: int = 0
    model: AugmentedModel | None = None
    best_model: AugmentedModel | None = None
    best_iteration: int = -1
    pilot_graph: CausalGraph | None = None
    refined_graph: CausalGraph | None = None
    discrepancy_history: list[float] = field(default_factory=list)
    existing_discrepancy_history: list[float] = field(default_factory=list)
    graph_distance_history: list[int] = field(default_factory=list)
    epochs_history: list[int] = field(default_factory=list)
    plans: list[FeedbackPlan] = field(default_factory=list)
    experiment_variables: tuple[str, ...] = ()
    ive_records: list[EventRecord] = field(default_factory=list)
    best_ive_records: list[EventRecord] = field(default_factory=list)
    facility_records: list[EventRecord] = field(default_factory=list)
    training_history: TrainingHistory | None = None
    test_report: IndependenceTestReport | None = None

    def best_so_far(self):
        return list(np.minimum.accumulate(self.discrepancy_history)) if self.discrepancy_history else []


@dataclass
class LoopResult:
    state: LoopState
    termination: str
    config: LoopConfig
    manifest: list[tuple[str, int]] = field(default_factory=list)


def binarize(column: pd.Series) -> pd.Series:
    """Treatment indicator: above-median for continuous, not-first-level otherwise."""
    if is_continuous(column):
        return (column > column.median()).astype(int)
    if pd.api.types.is_numeric_dtype(column) and set(column.unique()) <= {0, 1}:
        return column.astype(int)
    levels = sorted(column.astype(str).unique())
    return (column.astype(str) != levels[0]).astype(int)


def variable_effects(graph: CausalGraph, frame: pd.DataFrame, outcome: str) -> dict[str, float]:
    """IPW effect of each graph variable on the outcome, adjusting by backdoor sets."""
    effects = {}
    for var in graph.nodes:
        if var == outcome:
            continue
        covariates = adjustment_set(graph, var, outcome)
        if covariates is None:
            continue
        data = frame[[outcome, *covariates]].copy()
        data["_treatment"] = binarize(frame[var])
        if data["_treatment"].nunique() < 2:
            continue
        ate, _ = estimate_ate_ipw(data, "_treatment", outcome, covariates)
        effects[var] = ate
    return effects


def pilot_graph(config: LoopConfig) -> CausalGraph:
    nodes = set(config.causal.variables) | {config.causal.outcome}
    return CausalGraph.from_edges(config.causal.pilot_edges, nodes)


def _stage(name, iteration, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - every stage failure is reported uniformly
        raise StageError(name, iteration, exc) from exc

def stage_seeds(master: int, iteration: int) -> dict[str, int]:
    return {s: derive_seed(master, iteration, s) for s in STAGES}


def simulate_stage(config: LoopConfig, schedule, seeds, iteration=0):
    """Existing-model dataset plus the IVE records from freshly drawn auxiliary models."""
    existing = _stage("existing", iteration, ExistingDataset.sample, config.hunt, schedule, seeds["existing"])
    aux = _stage(
        "auxiliary", iteration, perturb_ground_truth, config.truth, config.ive.alpha, config.ive.k, seeds["auxiliary"],
        scale=config.ive.perturbation_scale, max_rejections=config.ive.max_rejections,
    )
    ive_records = []
    for s in range(config.ive.subjects):
        sub = _stage("ive", iteration, run_experiment, config.schedule, aux[s % len(aux)], "ive", seeds["ive"] + s, 1)
        ive_records.extend(replace(r, subject_id=s) for r in sub)
    return existing, ive_records


def training_config(config: LoopConfig, seeds, variables) -> TrainingConfig:
    return replace(
        config.training,
        seed=seeds["train"] % 2**32,
        ive_variables=tuple(v for v in variables if v in IVE_VARIABLES),
    )


def fuse_once(config: LoopConfig, seed: int | None = None):
    """One simulate + train pass outside the loop; returns (existing, ive_records, model, history)."""
    seeds = stage_seeds(config.seed if seed is None else seed, 0)
    variables = tuple(n for n in pilot_graph(config).nodes if n != config.causal.outcome)
    schedule = build_sted_schedule(config.schedule)
    existing, ive_records = simulate_stage(config, schedule, seeds)
    training = training_config(config, seeds, variables)
    model, history = _stage("train", 0, train_gan, existing, ive_records, config.target, training)
    return existing, ive_records, model, history


def facility_stage(config: LoopConfig, seeds, iteration=0):
    return _stage(
        "facility", iteration, run_experiment, config.schedule, config.truth, "physical", seeds["facility"],
        config.ive.facility_subjects,
    )


def causal_stage(config: LoopConfig, pilot: CausalGraph, frame: pd.DataFrame, iteration=0):
    """Test the pilot's implications, estimate effects, and propose a repaired graph."""
    outcome = config.causal.outcome
    report = _stage(
        "causal", iteration, test_implications, pilot, frame, config.causal.alpha_sig, config.causal.max_cond,
        config.causal.quantile_bins,
    )
    effects = _stage("causal", iteration, variable_effects, pilot, frame, outcome)
    refined, plan = refine_graph(pilot, report, effects, config.causal.budget, config.causal.negligible)
    additions = tuple(
        v for v in config.causal.candidate_variables
        if v not in refined.nodes and v in frame.columns
        and ci_test(frame, v, outcome, (), config.causal.quantile_bins)[0] < config.causal.alpha_sig
    )
    return report, effects, refined, replace(plan, variables_to_add=additions)


def apply_plan(graph: CausalGraph, plan: FeedbackPlan, outcome: str) -> CausalGraph:
    """Next pilot: drop removed variables, attach added ones as direct causes of the outcome."""
    for v in plan.variables_to_remove:
        graph = graph.without_node(v)
    for v in plan.variables_to_add:
        graph = graph.with_node(v).with_edge(v, outcome)
    return graph


def run_design_loop(config: LoopConfig, flush=None) -> LoopResult:
    """Iterate until the causal graph stops changing, the target is met, or the budget runs out.

    ``flush`` (optional) is called with the partial state before a stage
    error propagates, so callers can write what was produced so far.
    """
    state = LoopState(pilot_graph=pilot_graph(config))
    outcome = config.causal.outcome
    graph = state.pilot_graph
    centers = config.training.centers
    target_c = target_curve(config.target, centers)
    existing_disc = target_discrepancy(existing_curve(config.hunt, centers), target_c)
    schedule = build_sted_schedule(config.schedule)
    termination = "max_iterations"

    try:
        for it in range(config.max_iterations):
            seeds = stage_seeds(config.seed, it)
            variables = tuple(n for n in graph.nodes if n != outcome)
            state.experiment_variables = variables
            existing, ive_records = simulate_stage(config, schedule, seeds, it)
            state.ive_records = ive_records
            training = training_config(config, seeds, variables)
            model, history = _stage("train", it, train_gan, existing, ive_records, config.target, training)
            disc = target_discrepancy(model.curve, target_c)

            facility = facility_stage(config, seeds, it)
            state.facility_records = facility
            frame = to_frame(facility)

            pilot = graph
            report, effects, refined, plan = causal_stage(config, pilot, frame, it)
            refined = apply_plan(refined, plan, outcome)
            distance = graph_distance(pilot, refined)

            state.iteration = it + 1
            state.model = model
            state.pilot_graph, state.refined_graph = pilot, refined
            state.training_history = history
            state.test_report = report
            state.discrepancy_history.append(disc)
            state.existing_discrepancy_history.append(existing_disc)
            state.graph_distance_history.append(distance)
            state.epochs_history.append(len(history))
            state.plans.append(plan)
            if state.best_model is None or disc < min(state.discrepancy_history[:-1], default=math.inf):
                state.best_model, state.best_iteration, state.best_ive_records = model, it, ive_records
            log.info("iteration %d: discrepancy %.4f, graph distance %d", it + 1, disc, distance)

            if distance <= config.graph_floor:
                termination = "graph_converged"
                break
            if disc <= config.epsilon:
                termination = "discrepancy_met"
                break

            graph = refined
    except StageError:
        if flush is not None:
            flush(state)
        raise
    return LoopResult(state, termination, config)
