"""Adversarial fusion of an existing behavior model with experiment data.

The generator sees one existing-model sample (illuminance feature and model
probability), one experiment record (context features and response) and a
noise vector, and emits a switch-on probability. The discriminator sees a
probability together with the generator's conditioning features and must
tell performance-target probabilities from generated ones.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .domain import HuntModel, ProbitTarget, hunt_probability, probit_probability
from .errors import ContractError, TrainingError
from .ivesim import EventRecord, StedSchedule, run_stated_choice
from .metrics import (
    Curve,
    EmpiricalDistribution,
    HypothesisSet,
    hypothesis_expectations,
    hypothesis_loss,
    lux_bin_grid,
    target_discrepancy,
    wasserstein1,
)
from .nn import Mlp

IVE_VARIABLES = ("work_lux", "outdoor_lux", "occupancy", "leave_status", "lights_on", "blinds")
_EPS = 1e-7


@dataclass(frozen=True)
class TrainingConfig:
    max_epochs: int = 300
    batch_size: int = 32
    learning_rate: float = 0.1
    discrepancy_threshold: float = 0.01
    seed: int = 0
    bin_lower: float = 200.0
    bin_upper: float = 700.0
    n_bins: int = 11
    noise_dim: int = 4
    hidden: tuple[int, ...] = (16, 16)
    mc_samples: int = 256
    real_bernoulli: bool = False
    ive_variables: tuple[str, ...] = ("work_lux", "outdoor_lux", "occupancy", "leave_status")

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ContractError("max_epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be positive")
        if self.discrepancy_threshold < 0:
            raise ContractError("discrepancy_threshold must be non-negative")
        unknown = set(self.ive_variables) - set(IVE_VARIABLES)
        if unknown:
            raise ContractError(f"unknown experiment variables: {sorted(unknown)}")

    @property
    def centers(self):
        return lux_bin_grid(self.bin_lower, self.bin_upper, self.n_bins)


@dataclass(frozen=True)
class ExistingDataset:
    """Records sampled from the existing design model, plus the model itself."""

    records: tuple[EventRecord, ...]
    model: HuntModel

    @classmethod
    def sample(cls, model: HuntModel, schedule: StedSchedule, seed):
        return cls(tuple(run_stated_choice(schedule, model, "existing", seed)), model)

    @property
    def work_lux(self):
        return np.array([r.context.work_illuminance for r in self.records])


@dataclass(frozen=True)
class Normalization:
    work_mean: float
    work_sd: float
    outdoor_mean: float
    outdoor_sd: float
    lux_min: float
    lux_max: float


def _log_lux(values):
    return np.log10(np.maximum(np.asarray(values, dtype=float), 1e-3))


def ive_features(records: Sequence[EventRecord], variables, norm: Normalization) -> np.ndarray:
    """Context features of experiment records followed by their switch-on response."""
    cols = []
    ctx = [r.context for r in records]
    for name in variables:
        if name == "work_lux":
            cols.append((_log_lux([c.work_illuminance for c in ctx]) - norm.work_mean) / norm.work_sd)
        elif name == "outdoor_lux":
            cols.append((_log_lux([c.outdoor_illuminance for c in ctx]) - norm.outdoor_mean) / norm.outdoor_sd)
        elif name == "occupancy":
            cols.append(np.array([float(c.occupancy) for c in ctx]))
        elif name == "leave_status":
            cols.append(np.array([float(c.leave_status == "short") for c in ctx]))
            cols.append(np.array([float(c.leave_status == "long") for c in ctx]))
        elif name == "lights_on":
            cols.append(np.array([float(c.lights_currently_on) for c in ctx]))
        elif name == "blinds":
            cols.append(np.array([float(c.blinds == "down") for c in ctx]))
    cols.append(np.array([float(r.action == "switch_on") for r in records]))
    return np.column_stack(cols)


def _existing_features(lux, hunt: HuntModel, norm: Normalization):
    lux = np.clip(np.asarray(lux, dtype=float), norm.lux_min, norm.lux_max)
    z = (_log_lux(lux) - norm.work_mean) / norm.work_sd
    p = np.array([hunt_probability(hunt, float(e)) for e in lux])
    return np.column_stack([z, p])


class AugmentedModel:
    """Trained generator plus everything needed to turn it into a curve."""

    def __init__(self, generator, norm, hunt, ive_pool, variables, noise_dim, mc_samples, eval_seed, centers):
        self.generator = generator
        self.norm = norm
        self.hunt = hunt
        self.ive_pool = np.asarray(ive_pool, dtype=float)
        self.variables = tuple(variables)
        self.noise_dim = int(noise_dim)
        self.mc_samples = int(mc_samples)
        self.eval_seed = int(eval_seed)
        self.centers = np.asarray(centers, dtype=float)
        self.curve = self.predict_curve(self.centers)

    def _draws(self, mc_samples):
        rng = np.random.default_rng(self.eval_seed)
        idx = rng.integers(self.ive_pool.shape[0], size=mc_samples)
        noise = rng.standard_normal((mc_samples, self.noise_dim))
        return self.ive_pool[idx], noise

    def predict_curve(self, lux_values, mc_samples=None) -> Curve:
        """Mean generator output per illuminance, sharing one Monte-Carlo draw."""
        mc = self.mc_samples if mc_samples is None else mc_samples
        pool, noise = self._draws(mc)
        lux_values = np.atleast_1d(np.asarray(lux_values, dtype=float))
        ex = _existing_features(lux_values, self.hunt, self.norm)
        n = lux_values.shape[0]
        inputs = np.hstack([np.repeat(ex, mc, axis=0), np.tile(pool, (n, 1)), np.tile(noise, (n, 1))])
        out = self.generator(inputs)[:, 0].reshape(n, mc).mean(axis=1)
        return Curve(lux_values, np.clip(out, 0.0, 1.0))

    def predict(self, work_illuminance: float) -> float:
        return float(self.predict_curve([work_illuminance]).probability[0])

    def probability(self, context):
        return self.predict(context.work_illuminance)

    def save(self, path):
        g = self.generator
        lines = [
            "# augmented model parameters",
            "sizes " + " ".join(str(s) for s in g.sizes),
            "activations " + " ".join(g.activations),
            "normalization " + " ".join(repr(float(v)) for v in vars(self.norm).values()),
            "hunt " + " ".join(repr(float(v)) for v in (self.hunt.a, self.hunt.c, self.hunt.b, self.hunt.m)),
            "variables " + ",".join(self.variables),
            f"noise_dim {self.noise_dim}",
            f"mc_samples {self.mc_samples}",
            f"eval_seed {self.eval_seed}",
            "centers " + " ".join(repr(float(c)) for c in self.centers),
        ]
        for i, (w, b) in enumerate(zip(g.weights, g.biases)):
            lines.append(f"weights {i} {w.shape[0]} {w.shape[1]}")
            lines.extend(" ".join(repr(float(v)) for v in row) for row in w)
            lines.append(f"bias {i}")
            lines.append(" ".join(repr(float(v)) for v in b))
        lines.append(f"pool {self.ive_pool.shape[0]} {self.ive_pool.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in self.ive_pool)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
        header = {}
        pos = 0
        while not lines[pos].startswith("weights"):
            key, _, rest = lines[pos].partition(" ")
            header[key] = rest
            pos += 1

        def floats(s):
            return [float(v) for v in s.split()] if s.strip() else []

        weights, biases = [], []
        activations = header["activations"].split()
        for _ in activations:
            _, _, rows, cols = lines[pos].split()
            rows, cols = int(rows), int(cols)
            weights.append(np.array([floats(lines[pos + 1 + r]) for r in range(rows)]).reshape(rows, cols))
            pos += 1 + rows
            biases.append(np.array(floats(lines[pos + 1])))
            pos += 2
        _, rows, cols = lines[pos].split()
        pool = np.array([floats(lines[pos + 1 + r]) for r in range(int(rows))]).reshape(int(rows), int(cols))
        norm = Normalization(*floats(header["normalization"]))
        variables = tuple(v for v in header["variables"].split(",") if v)
        return cls(
            Mlp(weights, biases, activations),
            norm,
            HuntModel(*floats(header["hunt"])),
            pool,
            variables,
            int(header["noise_dim"]),
            int(header["mc_samples"]),
            int(header["eval_seed"]),
            floats(header["centers"]),
        )


def augmented_predict(model: AugmentedModel, work_illuminance: float) -> float:
    return model.predict(work_illuminance)


@dataclass
class TrainingHistory:
    g_loss: list[float] = field(default_factory=list)
    d_loss: list[float] = field(default_factory=list)
    discrepancy: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def __len__(self):
        return len(self.discrepancy)

    def best_so_far(self):
        return list(np.minimum.accumulate(self.discrepancy))

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "g_loss", "d_loss", "discrepancy"])
            for i, row in enumerate(zip(self.g_loss, self.d_loss, self.discrepancy)):
                writer.writerow([i] + [repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        hist = cls(
            [float(r["g_loss"]) for r in rows],
            [float(r["d_loss"]) for r in rows],
            [float(r["discrepancy"]) for r in rows],
        )
        hist.best_epoch = int(np.argmin(hist.discrepancy)) if rows else 0
        return hist


def target_curve(target: ProbitTarget, centers) -> Curve:
    return Curve.from_model(lambda e: probit_probability(target, e), centers)


def existing_curve(model: HuntModel, centers) -> Curve:
    return Curve.from_model(lambda e: hunt_probability(model, e), centers)


def _normalization(existing: ExistingDataset, ive_records) -> Normalization:
    work = _log_lux(existing.work_lux)
    outdoor = _log_lux([r.context.outdoor_illuminance for r in ive_records])
    return Normalization(
        float(work.mean()),
        float(work.std()) or 1.0,
        float(outdoor.mean()),
        float(outdoor.std()) or 1.0,
        float(existing.work_lux.min()),
        float(existing.work_lux.max()),
    )


def train_gan(
    existing: ExistingDataset,
    ive_records: Sequence[EventRecord],
    target: ProbitTarget,
    config: TrainingConfig,
) -> tuple[AugmentedModel, TrainingHistory]:
    """Minimax training; returns the epoch with the lowest discrepancy to target."""
    if not existing.records or not ive_records:
        raise ContractError("existing and experiment datasets must be non-empty")
    centers = config.centers
    norm = _normalization(existing, ive_records)
    if centers.min() < norm.lux_min or centers.max() > norm.lux_max:
        raise ContractError(
            f"bin grid [{centers.min():.0f}, {centers.max():.0f}] lux exceeds the existing data "
            f"support [{norm.lux_min:.1f}, {norm.lux_max:.1f}]"
        )
    seq = np.random.SeedSequence(config.seed)
    init_seed, data_seed, eval_seq = seq.spawn(3)
    eval_seed = int(eval_seq.generate_state(1, dtype=np.uint32)[0])
    init_rng = np.random.default_rng(init_seed)
    rng = np.random.default_rng(data_seed)

    lux = existing.work_lux
    ex_feat = _existing_features(lux, existing.model, norm)
    ive_feat = ive_features(ive_records, config.ive_variables, norm)
    target_p = np.array([probit_probability(target, float(e)) for e in lux])
    cond_dim = ex_feat.shape[1] + ive_feat.shape[1]
    generator = Mlp.init([cond_dim + config.noise_dim, *config.hidden, 1], init_rng)
    discriminator = Mlp.init([1 + cond_dim, *config.hidden, 1], init_rng)
    target_c = target_curve(target, centers)

    def snapshot(gen):
        return AugmentedModel(
            gen, norm, existing.model, ive_feat, config.ive_variables, config.noise_dim, config.mc_samples, eval_seed, centers
        )

    history = TrainingHistory()
    best, best_disc = None, math.inf
    n, m, lr = len(lux), ive_feat.shape[0], config.learning_rate
    for epoch in range(config.max_epochs):
        g_losses, d_losses = [], []
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            b = idx.shape[0]
            cond = np.hstack([ex_feat[idx], ive_feat[rng.integers(m, size=b)]])
            noise = rng.standard_normal((b, config.noise_dim))
            real_p = target_p[idx]
            if config.real_bernoulli:
                real_p = (rng.random(b) < real_p).astype(float)
            fake_p, g_outs = generator.forward(np.hstack([cond, noise]))

            d_real, r_outs = discriminator.forward(np.hstack([real_p[:, None], cond]))
            d_fake, f_outs = discriminator.forward(np.hstack([fake_p, cond]))
            d_real = np.clip(d_real, _EPS, 1 - _EPS)
            d_fake = np.clip(d_fake, _EPS, 1 - _EPS)
            d_losses.append(float(-np.mean(np.log(d_real)) - np.mean(np.log(1 - d_fake))))
            wr, br, _ = discriminator.backward(r_outs, -1.0 / (d_real * b))
            wf, bf, _ = discriminator.backward(f_outs, 1.0 / ((1 - d_fake) * b))
            discriminator.sgd_step([x + y for x, y in zip(wr, wf)], [x + y for x, y in zip(br, bf)], lr)

            d_fake, f_outs = discriminator.forward(np.hstack([fake_p, cond]))
            d_fake = np.clip(d_fake, _EPS, 1 - _EPS)
            g_losses.append(float(-np.mean(np.log(d_fake))))
            _, _, d_input = discriminator.backward(f_outs, -1.0 / (d_fake * b))
            gw, gb, _ = generator.backward(g_outs, d_input[:, :1])
            generator.sgd_step(gw, gb, lr)

        g_loss, d_loss = float(np.mean(g_losses)), float(np.mean(d_losses))
        if not (math.isfinite(g_loss) and math.isfinite(d_loss) and generator.is_finite()):
            raise TrainingError("non-finite adversarial loss", epoch)
        model = snapshot(generator.copy())
        disc = target_discrepancy(model.curve, target_c)
        history.g_loss.append(g_loss)
        history.d_loss.append(d_loss)
        history.discrepancy.append(disc)
        if disc < best_disc:
            best, best_disc, history.best_epoch = model, disc, epoch
        if disc <= config.discrepancy_threshold:
            break
    return best, history


# ---------------------------------------------------------------------------
# Approximate design from auxiliary samples


@dataclass(frozen=True)
class ApproximateDesignReport:
    weights: tuple[float, ...]
    loss: float
    epsilon: float
    meets_epsilon: bool
    nearest_index: int
    nearest_w1: float
    distance_bound: float
    beta: float
    meets_beta: bool


def solve_approximate_design(
    auxiliary: Sequence[EmpiricalDistribution],
    known_moments,
    hypotheses: HypothesisSet,
    epsilon: float,
    beta: float,
    alpha: float = 0.0,
) -> tuple[EmpiricalDistribution, ApproximateDesignReport]:
    """Mix auxiliary samples to minimize the hypothesis loss against known moments.

    The max over a finite hypothesis set makes this a linear program in the
    mixture weights and an epigraph variable. The distance check is
    conservative: W1 to the nearest auxiliary plus its declared radius.
    """
    k = len(auxiliary)
    if k < 1 or epsilon <= 0 or beta <= 0:
        raise ContractError("need at least one auxiliary, epsilon > 0 and beta > 0")
    expect = np.array([hypothesis_expectations(a, hypotheses) for a in auxiliary])  # (k, |H|)
    ref = hypothesis_expectations(known_moments, hypotheses)
    if k == 1:
        weights = np.ones(1)
    else:
        nh = len(hypotheses)
        cost = np.zeros(k + 1)
        cost[-1] = 1.0
        a_ub = np.vstack([np.hstack([expect.T, -np.ones((nh, 1))]), np.hstack([-expect.T, -np.ones((nh, 1))])])
        b_ub = np.concatenate([ref, -ref])
        a_eq = np.hstack([np.ones((1, k)), np.zeros((1, 1))])
        res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=[(0, None)] * k + [(0, None)], method="highs")
        if not res.success:
            raise ContractError(f"mixture program failed: {res.message}")
        weights = np.clip(res.x[:k], 0.0, None)
        weights /= weights.sum()
    mixture = EmpiricalDistribution.mixture(auxiliary, weights)
    loss = hypothesis_loss(mixture, known_moments, hypotheses)
    dists = [wasserstein1(mixture, a) for a in auxiliary]
    nearest = int(np.argmin(dists))
    bound = dists[nearest] + alpha
    report = ApproximateDesignReport(
        tuple(float(w) for w in weights), loss, epsilon, loss < epsilon, nearest, dists[nearest], bound, beta, bound <= beta
    )
    return mixture, report
