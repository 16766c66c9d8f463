"""Losses, distances and reference decision rules."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ContractError, DomainError, EmptyContextError

# ---------------------------------------------------------------------------
# Distributions and hypothesis sets


@dataclass(frozen=True)
class KnownMoments:
    """Mean and variance of a distribution we cannot sample from."""

    mean: float
    variance: float


class EmpiricalDistribution:
    """Weighted sample list; weights are normalized to sum to one."""

    def __init__(self, values, weights=None):
        values = np.asarray(values, dtype=float)
        if values.shape[0] == 0:
            raise ContractError("empirical distribution needs at least one sample")
        if weights is None:
            weights = np.full(values.shape[0], 1.0 / values.shape[0])
        else:
            weights = np.asarray(weights, dtype=float)
            if weights.shape[0] != values.shape[0] or np.any(weights <= 0):
                raise ContractError("weights must be positive, one per sample")
            weights = weights / weights.sum()
        self.values = values
        self.weights = weights

    def __len__(self):
        return self.values.shape[0]

    def expect(self, fn):
        return float(np.dot(self.weights, fn(self.values)))

    @property
    def mean(self):
        return self.expect(lambda x: x)

    @classmethod
    def mixture(cls, components: Sequence["EmpiricalDistribution"], weights):
        values, masses = [], []
        for comp, w in zip(components, weights):
            if w <= 0:
                continue
            values.append(comp.values)
            masses.append(w * comp.weights)
        return cls(np.concatenate(values), np.concatenate(masses))


@dataclass(frozen=True)
class Hypothesis:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    bound: float
    # (degree, center) for centered monomials; lets known moments evaluate them
    monomial: tuple[int, float] | None = None

    def __post_init__(self):
        if not math.isfinite(self.bound):
            raise ContractError(f"hypothesis {self.name!r} needs a finite bound")


class HypothesisSet(tuple):
    """Finite, non-empty collection of bounded hypotheses."""

    def __new__(cls, hypotheses: Iterable[Hypothesis]):
        hypotheses = tuple(hypotheses)
        if not hypotheses:
            raise ContractError("hypothesis set must be non-empty")
        return super().__new__(cls, hypotheses)

    @classmethod
    def identity(cls, lower=0.0, upper=1.0):
        bound = max(abs(lower), abs(upper))
        return cls([Hypothesis("id", lambda x: x, bound, (1, 0.0))])

    @classmethod
    def build(cls, lower=0.0, upper=1.0, degree=2, n_bins=0, smoothing=0.02):
        """Identity, centered monomials up to ``degree`` and smoothed bin indicators."""
        center = 0.5 * (lower + upper)
        half = 0.5 * (upper - lower)
        items = list(cls.identity(lower, upper))
        for k in range(1, degree + 1):
            items.append(Hypothesis(f"poly{k}", lambda x, k=k: (x - center) ** k, half**k, (k, center)))
        edges = np.linspace(lower, upper, n_bins + 1)
        for i in range(n_bins):
            lo, hi = edges[i], edges[i + 1]

            def bump(x, lo=lo, hi=hi):
                return _sigmoid((x - lo) / smoothing) * _sigmoid((hi - x) / smoothing)

            items.append(Hypothesis(f"bin[{lo:.3g},{hi:.3g}]", bump, 1.0))
        return cls(items)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def _moment_expectation(h: Hypothesis, moments: KnownMoments):
    if h.monomial is None or h.monomial[0] > 2:
        raise ContractError(f"hypothesis {h.name!r} is not determined by mean and variance")
    degree, center = h.monomial
    shift = moments.mean - center
    if degree == 1:
        return shift
    return moments.variance + shift**2


def hypothesis_expectations(dist, hypotheses: HypothesisSet) -> np.ndarray:
    if isinstance(dist, KnownMoments):
        return np.array([_moment_expectation(h, dist) for h in hypotheses])
    return np.array([dist.expect(h.fn) for h in hypotheses])


def hypothesis_loss(f: EmpiricalDistribution, reference, hypotheses: HypothesisSet) -> float:
    """Largest absolute expectation gap over the hypothesis set."""
    ef = hypothesis_expectations(f, hypotheses)
    er = hypothesis_expectations(reference, hypotheses)
    return float(np.max(np.abs(ef - er)))


# ---------------------------------------------------------------------------
# Distances


def wasserstein1(a: EmpiricalDistribution, b: EmpiricalDistribution) -> float:
    """1-D earth mover's distance as the integral of |F_a - F_b|."""
    if a.values.ndim != 1 or b.values.ndim != 1:
        raise ContractError("wasserstein1 needs scalar-valued samples")
    support = np.union1d(a.values, b.values)
    if support.size == 1:
        return 0.0

    def cdf(dist):
        order = np.argsort(dist.values, kind="stable")
        cum = np.cumsum(dist.weights[order])
        idx = np.searchsorted(dist.values[order], support[:-1], side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)

    return float(np.sum(np.abs(cdf(a) - cdf(b)) * np.diff(support)))


# ---------------------------------------------------------------------------
# Classical reference rules


def bayes_optimal_label(eta_value: float) -> int:
    if not 0.0 <= eta_value <= 1.0:
        raise DomainError(f"posterior must lie in [0, 1], got {eta_value}")
    return 1 if eta_value > 0.5 else 0


class GapCheck(NamedTuple):
    gap: float
    bound: float
    violated: bool


def generalization_gap_check(train_error, test_error, n, epsilon) -> GapCheck:
    """Observed train/test gap next to Hoeffding's two-sided tail bound.

    ``violated`` records a single-run observation gap > epsilon; it does not
    contradict the bound, which is a probability.
    """
    gap = abs(test_error - train_error)
    bound = min(1.0, 2.0 * math.exp(-2.0 * n * epsilon**2))
    return GapCheck(gap, bound, gap > epsilon)


# ---------------------------------------------------------------------------
# Curves


def lux_bin_grid(lower=200.0, upper=700.0, n_bins=11) -> np.ndarray:
    """Bin centers equally spaced in log10 lux."""
    return np.logspace(math.log10(lower), math.log10(upper), n_bins)


def bin_edges(centers) -> np.ndarray:
    logc = np.log10(np.asarray(centers, dtype=float))
    mids = 0.5 * (logc[1:] + logc[:-1])
    return np.concatenate(([-np.inf], mids, [np.inf]))


def assign_bins(lux, centers) -> np.ndarray:
    """Index of the nearest (log-scale) bin center for each illuminance."""
    edges = bin_edges(centers)
    return np.searchsorted(edges, np.log10(np.asarray(lux, dtype=float)), side="right") - 1


@dataclass(frozen=True)
class Curve:
    bin_center_lux: np.ndarray
    probability: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bin_center_lux", np.asarray(self.bin_center_lux, dtype=float))
        object.__setattr__(self, "probability", np.asarray(self.probability, dtype=float))
        if self.bin_center_lux.shape != self.probability.shape:
            raise ContractError("curve needs one probability per bin")

    @classmethod
    def from_model(cls, model, centers):
        """Evaluate ``model(lux)`` at each bin center."""
        return cls(centers, [model(float(c)) for c in centers])

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["bin_center_lux", "probability"])
            for x, p in zip(self.bin_center_lux, self.probability):
                writer.writerow([repr(float(x)), repr(float(p))])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls([float(r["bin_center_lux"]) for r in rows], [float(r["probability"]) for r in rows])


def target_discrepancy(model_curve: Curve, target_curve: Curve) -> float:
    """Mean absolute deviation between two curves on the same bin grid."""
    if model_curve.bin_center_lux.shape != target_curve.bin_center_lux.shape or not np.allclose(
        model_curve.bin_center_lux, target_curve.bin_center_lux, rtol=1e-12, atol=0.0
    ):
        raise ContractError("curves are defined on different bin grids")
    return float(np.mean(np.abs(model_curve.probability - target_curve.probability)))


# ---------------------------------------------------------------------------
# Context-restricted evaluation


def _switched_on(record):
    return record.action == "switch_on"


def context_restricted_error(model, records, predicate, centers=None) -> float:
    """Error of ``model`` on the records whose context satisfies ``predicate``.

    Models with a ``probability(context)`` method are scored by the mean
    absolute gap between average predicted probability and observed switch-on
    rate per illuminance bin. Anything else is treated as a classifier
    ``model(context) -> {0, 1}`` and scored by misclassification rate.
    """
    chosen = [r for r in records if predicate.matches(r.context)]
    if not chosen:
        raise EmptyContextError("no record satisfies the context predicate")
    labels = np.array([_switched_on(r) for r in chosen], dtype=float)
    if not hasattr(model, "probability"):
        predicted = np.array([model(r.context) for r in chosen], dtype=float)
        return float(np.mean(predicted != labels))
    centers = lux_bin_grid() if centers is None else centers
    probs = np.array([model.probability(r.context) for r in chosen])
    bins = assign_bins([max(r.context.work_illuminance, 1e-3) for r in chosen], centers)
    gaps = [abs(probs[bins == b].mean() - labels[bins == b].mean()) for b in np.unique(bins)]
    return float(np.mean(gaps))
