"""Causal feedback: DAG assumptions, their testable implications, IP weighting."""

from __future__ import annotations

import csv
import io
import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .errors import ContractError


@dataclass(frozen=True)
class CausalGraph:
    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]] = frozenset()

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise ContractError(f"duplicate node names in {self.nodes}")
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes)))
        object.__setattr__(self, "edges", frozenset(self.edges))
        known = set(self.nodes)
        for u, v in self.edges:
            if u not in known or v not in known:
                raise ContractError(f"edge {u} -> {v} references an unknown node")
            if u == v:
                raise ContractError(f"self loop on {u}")
        if not self._acyclic():
            raise ContractError("graph has a directed cycle")

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], nodes: Iterable[str] = ()):
        edges = list(edges)
        names = set(nodes) | {n for e in edges for n in e}
        return cls(tuple(names), frozenset(edges))

    def _acyclic(self):
        indeg = {n: 0 for n in self.nodes}
        for _, v in self.edges:
            indeg[v] += 1
        queue = deque(n for n, d in indeg.items() if d == 0)
        seen = 0
        while queue:
            n = queue.popleft()
            seen += 1
            for c in self.children(n):
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        return seen == len(self.nodes)

    def parents(self, node):
        return {u for u, v in self.edges if v == node}

    def children(self, node):
        return {v for u, v in self.edges if u == node}

    def descendants(self, node):
        out, stack = set(), [node]
        while stack:
            for c in self.children(stack.pop()):
                if c not in out:
                    out.add(c)
                    stack.append(c)
        return out

    def ancestors(self, node):
        out, stack = set(), [node]
        while stack:
            for p in self.parents(stack.pop()):
                if p not in out:
                    out.add(p)
                    stack.append(p)
        return out

    def with_edge(self, u, v):
        return CausalGraph(self.nodes, self.edges | {(u, v)})

    def without_edge(self, u, v):
        return CausalGraph(self.nodes, self.edges - {(u, v)})

    def with_node(self, node):
        return self if node in self.nodes else CausalGraph(self.nodes + (node,), self.edges)

    def without_node(self, node):
        return CausalGraph(
            tuple(n for n in self.nodes if n != node), frozenset(e for e in self.edges if node not in e)
        )

    def surgery(self, node):
        """Drop the outgoing edges of ``node``."""
        return CausalGraph(self.nodes, frozenset(e for e in self.edges if e[0] != node))

    def _check(self, *names):
        for n in names:
            if n not in self.nodes:
                raise ContractError(f"unknown node {n!r}")

    def to_text(self):
        lines = ["# causal graph: one 'parent -> child' per line; bare names are isolated nodes"]
        lines += [f"{u} -> {v}" for u, v in sorted(self.edges)]
        connected = {n for e in self.edges for n in e}
        lines += [n for n in self.nodes if n not in connected]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        nodes, edges = [], []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "->" in line:
                u, v = (s.strip() for s in line.split("->", 1))
                edges.append((u, v))
            else:
                nodes.append(line)
        return cls.from_edges(edges, nodes)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def read(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def d_separated(graph: CausalGraph, x: str, y: str, z: Iterable[str]) -> bool:
    """Reachability ("Bayes ball") test for d-separation of ``x`` and ``y`` given ``z``."""
    z = set(z)
    graph._check(x, y, *z)
    if x == y or x in z or y in z:
        raise ContractError("need distinct x, y outside the conditioning set")
    # colliders open up when they or a descendant are observed
    opened = set(z)
    for n in z:
        opened |= graph.ancestors(n)
    # state: (node, arrived_from_child) -- True means we came up an edge into node
    visited = set()
    queue = deque([(x, True)])
    while queue:
        node, up = queue.popleft()
        if (node, up) in visited:
            continue
        visited.add((node, up))
        if node == y:
            return False
        if up and node not in z:
            queue.extend((p, True) for p in graph.parents(node))
            queue.extend((c, False) for c in graph.children(node))
        elif not up:
            if node not in z:
                queue.extend((c, False) for c in graph.children(node))
            if node in opened:
                queue.extend((p, True) for p in graph.parents(node))
    return True


def implied_independencies(graph: CausalGraph, max_cond: int = 2) -> list[tuple[str, str, tuple[str, ...]]]:
    """All (x, y, z) with x < y, |z| <= max_cond and x independent of y given z."""
    out = []
    for x, y in itertools.combinations(graph.nodes, 2):
        rest = [n for n in graph.nodes if n not in (x, y)]
        for size in range(max_cond + 1):
            for z in itertools.combinations(rest, size):
                if d_separated(graph, x, y, z):
                    out.append((x, y, z))
    return out


# ---------------------------------------------------------------------------
# Conditional independence tests


@dataclass(frozen=True)
class IndependenceTest:
    x: str
    y: str
    z: tuple[str, ...]
    implied: bool
    p_value: float
    reject: bool
    method: str
    empty_strata: int = 0


@dataclass(frozen=True)
class IndependenceTestReport:
    tests: tuple[IndependenceTest, ...]
    alpha_sig: float

    def __iter__(self):
        return iter(self.tests)

    def __len__(self):
        return len(self.tests)

    def rejected(self):
        return [t for t in self.tests if t.implied and t.reject]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "y", "z", "implied", "p_value", "reject", "method", "empty_strata"])
        for t in self.tests:
            writer.writerow(
                [t.x, t.y, ";".join(t.z), int(t.implied), repr(float(t.p_value)), int(t.reject), t.method, t.empty_strata]
            )
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read_csv(cls, path, alpha_sig=0.01):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        tests = tuple(
            IndependenceTest(
                r["x"], r["y"], tuple(v for v in r["z"].split(";") if v), r["implied"] == "1",
                float(r["p_value"]), r["reject"] == "1", r["method"], int(r["empty_strata"]),
            )
            for r in rows
        )
        return cls(tests, alpha_sig)


def is_continuous(column: pd.Series, max_levels: int = 10) -> bool:
    return pd.api.types.is_float_dtype(column) and column.nunique() > max_levels


def _codes(column: pd.Series, continuous: bool, n_bins: int) -> np.ndarray:
    if continuous:
        edges = np.unique(np.quantile(column.to_numpy(), np.linspace(0, 1, n_bins + 1)[1:-1]))
        return np.searchsorted(edges, column.to_numpy(), side="right")
    return pd.factorize(column, sort=True)[0]


def g_test(x_codes, y_codes, strata) -> tuple[float, int]:
    """Stratified likelihood-ratio statistic and degrees of freedom."""
    kx, ky = x_codes.max() + 1, y_codes.max() + 1
    _, s = np.unique(strata, return_inverse=True)
    ns = s.max() + 1
    counts = np.bincount((s * kx + x_codes) * ky + y_codes, minlength=ns * kx * ky).reshape(ns, kx, ky)
    rows = counts.sum(axis=2, keepdims=True)
    cols = counts.sum(axis=1, keepdims=True)
    tot = counts.sum(axis=(1, 2), keepdims=True)
    expected = rows * cols / tot
    mask = counts > 0
    g = 2.0 * float(np.sum(counts[mask] * np.log(counts[mask] / expected[mask])))
    dof = int(np.sum(np.maximum((rows[:, :, 0] > 0).sum(axis=1) - 1, 0) * np.maximum((cols[:, 0, :] > 0).sum(axis=1) - 1, 0)))
    return g, dof


def fisher_z(data: pd.DataFrame, x, y, z) -> float:
    """Two-sided p-value of the partial correlation of x and y given z."""
    n = len(data)
    design = np.column_stack([np.ones(n)] + [data[c].to_numpy(float) for c in z])
    resid = []
    for col in (x, y):
        v = data[col].to_numpy(float)
        coef, *_ = np.linalg.lstsq(design, v, rcond=None)
        resid.append(v - design @ coef)
    denom = np.sqrt(np.dot(resid[0], resid[0]) * np.dot(resid[1], resid[1]))
    r = 0.0 if denom == 0 else float(np.dot(resid[0], resid[1]) / denom)
    if abs(r) >= 1.0:
        return 0.0
    stat = np.arctanh(r) * np.sqrt(max(n - len(z) - 3, 1))
    return float(2.0 * stats.norm.sf(abs(stat)))


def ci_test(data: pd.DataFrame, x, y, z, n_bins=4, max_levels=10):
    """Return (p_value, method, empty_strata) for x independent of y given z."""
    cols = [x, y, *z]
    cont = {c: is_continuous(data[c], max_levels) for c in cols}
    if all(cont.values()):
        return fisher_z(data, x, y, z), "fisher_z", 0
    codes = {c: _codes(data[c], cont[c], n_bins) for c in cols}
    strata = np.zeros(len(data), dtype=np.int64)
    possible = 1
    for c in z:
        levels = int(codes[c].max()) + 1
        strata = strata * levels + codes[c]
        possible *= levels
    g, dof = g_test(codes[x], codes[y], strata)
    empty = possible - len(np.unique(strata))
    p = float(stats.chi2.sf(g, dof)) if dof > 0 else 1.0
    method = "g_test_binned" if any(cont.values()) else "g_test"
    return p, method, empty


def test_implications(graph: CausalGraph, data: pd.DataFrame, alpha_sig=0.01, max_cond=2, n_bins=4) -> IndependenceTestReport:
    missing = [n for n in graph.nodes if n not in data.columns]
    if missing:
        raise ContractError(f"dataset lacks columns for graph nodes {missing}")
    if len(data) < 30:
        raise ContractError("need at least 30 rows to test implications")
    tests = []
    for x, y, z in implied_independencies(graph, max_cond):
        p, method, empty = ci_test(data, x, y, z, n_bins)
        tests.append(IndependenceTest(x, y, z, True, p, p < alpha_sig, method, empty))
    return IndependenceTestReport(tuple(tests), alpha_sig)


# the name starts with "test_" but this is library code, not a pytest test
test_implications.__test__ = False


# ---------------------------------------------------------------------------
# Adjustment and IP weighting


def satisfies_backdoor(graph: CausalGraph, treatment, outcome, z) -> bool:
    z = set(z)
    if z & graph.descendants(treatment):
        return False
    return d_separated(graph.surgery(treatment), treatment, outcome, z)


def adjustment_set(graph: CausalGraph, treatment: str, outcome: str) -> tuple[str, ...] | None:
    """Smallest backdoor adjustment set (lexicographic among ties), or None."""
    graph._check(treatment, outcome)
    if treatment == outcome:
        raise ContractError("treatment and outcome must differ")
    banned = graph.descendants(treatment) | {treatment, outcome}
    candidates = [n for n in graph.nodes if n not in banned]
    surgered = graph.surgery(treatment)
    for size in range(len(candidates) + 1):
        for z in itertools.combinations(candidates, size):
            if d_separated(surgered, treatment, outcome, z):
                return z
    return None


@dataclass(frozen=True)
class PropensityModel:
    treatment: str
    covariates: tuple[str, ...]
    columns: tuple[str, ...]
    coef: np.ndarray
    center: np.ndarray
    scale: np.ndarray

    def predict(self, design: np.ndarray) -> np.ndarray:
        x = (design - self.center) / self.scale
        eta = self.coef[0] + x @ self.coef[1:]
        return 0.5 * (1.0 + np.tanh(0.5 * eta))


def _covariate_design(data: pd.DataFrame, covariates):
    cols, names = [], []
    for c in covariates:
        col = data[c]
        if pd.api.types.is_numeric_dtype(col) and not pd.api.types.is_bool_dtype(col):
            cols.append(col.to_numpy(float))
            names.append(c)
        else:
            levels = sorted(col.astype(str).unique())
            for lv in levels[1:]:
                cols.append((col.astype(str) == lv).to_numpy(float))
                names.append(f"{c}={lv}")
    if not cols:
        return np.zeros((len(data), 0)), ()
    return np.column_stack(cols), tuple(names)


def fit_propensity(data, treatment, covariates, n_iter=2000) -> PropensityModel:
    """Logistic regression by full-batch gradient ascent from zero."""
    t = data[treatment].to_numpy(float)
    design, names = _covariate_design(data, covariates)
    center = design.mean(axis=0) if design.size else np.zeros(0)
    scale = design.std(axis=0) if design.size else np.zeros(0)
    scale = np.where(scale > 0, scale, 1.0)
    x = np.column_stack([np.ones(len(t)), (design - center) / scale])
    n = len(t)
    # step 1/L with L the Lipschitz constant of the mean log-likelihood gradient
    lip = 0.25 * np.linalg.eigvalsh(x.T @ x / n).max()
    coef = np.zeros(x.shape[1])
    for _ in range(n_iter):
        p = 0.5 * (1.0 + np.tanh(0.5 * (x @ coef)))
        coef += (x.T @ (t - p) / n) / lip
    return PropensityModel(treatment, tuple(covariates), names, coef, center, scale)


@dataclass(frozen=True)
class IpwDiagnostics:
    n: int
    n_clipped: int
    naive_difference: float
    weight_min: float
    weight_max: float
    weight_mean: float
    propensity: PropensityModel


def estimate_ate_ipw(
    data: pd.DataFrame, treatment: str, outcome: str, covariates: Sequence[str] = (), stabilized=False, clip=(0.01, 0.99)
) -> tuple[float, IpwDiagnostics]:
    """Average treatment effect as the difference of IP-weighted arm means."""
    for c in (treatment, outcome, *covariates):
        if c not in data.columns:
            raise ContractError(f"missing column {c!r}")
    t = data[treatment].to_numpy(float)
    if not set(np.unique(t)) <= {0.0, 1.0}:
        raise ContractError(f"treatment {treatment!r} must be binary 0/1")
    if t.min() == t.max():
        raise ContractError(f"treatment {treatment!r} has a single arm")
    y = data[outcome].to_numpy(float)
    model = fit_propensity(data, treatment, covariates)
    e_raw = model.predict(_covariate_design(data, covariates)[0])
    e = np.clip(e_raw, *clip)
    n_clipped = int(np.sum((e_raw < clip[0]) | (e_raw > clip[1])))
    w = t / e + (1.0 - t) / (1.0 - e)
    if stabilized:
        p1 = t.mean()
        w = w * np.where(t == 1.0, p1, 1.0 - p1)
    treated, control = t == 1.0, t == 0.0
    ate = float(np.sum(w[treated] * y[treated]) / np.sum(w[treated]) - np.sum(w[control] * y[control]) / np.sum(w[control]))
    naive = float(y[treated].mean() - y[control].mean())
    return ate, IpwDiagnostics(len(t), n_clipped, naive, float(w.min()), float(w.max()), float(w.mean()), model)


# ---------------------------------------------------------------------------
# Refinement


@dataclass(frozen=True)
class FeedbackPlan:
    variables_to_add: tuple[str, ...] = ()
    variables_to_remove: tuple[str, ...] = ()
    edges_added: tuple[tuple[str, str], ...] = ()
    edges_removed: tuple[tuple[str, str], ...] = ()
    effects: Mapping[str, float] = field(default_factory=dict)
    negligible_threshold: float = 0.02

    def __post_init__(self):
        overlap = set(self.variables_to_add) & set(self.variables_to_remove)
        if overlap:
            raise ContractError(f"variables both added and removed: {sorted(overlap)}")

    @property
    def is_empty(self):
        return not (self.variables_to_add or self.variables_to_remove or self.edges_added or self.edges_removed)


def refine_graph(
    pilot: CausalGraph,
    report: IndependenceTestReport,
    effects: Mapping[str, float],
    budget: int,
    negligible: float = 0.02,
) -> tuple[CausalGraph, FeedbackPlan]:
    """Greedy repair of rejected implications within an edit budget.

    Each rejected independence that the current graph still implies gets one
    direct edge between its endpoints, the lexicographically first
    orientation that keeps the graph acyclic. Variables with negligible
    effect that take part in no surviving implication are proposed for
    removal; the graph itself is not pruned.
    """
    if budget < 0:
        raise ContractError("edit budget must be non-negative")
    if budget == 0:
        return pilot, FeedbackPlan(effects=dict(effects), negligible_threshold=negligible)
    graph = pilot
    added = []
    for t in report.rejected():
        if len(added) >= budget:
            break
        if not d_separated(graph, t.x, t.y, t.z):
            continue
        for u, v in sorted([(t.x, t.y), (t.y, t.x)]):
            try:
                graph = graph.with_edge(u, v)
            except ContractError:
                continue
            added.append((u, v))
            break
    surviving = set()
    for t in report:
        if t.implied and not t.reject and d_separated(graph, t.x, t.y, t.z):
            surviving |= {t.x, t.y}
    remove = tuple(sorted(v for v, ate in effects.items() if abs(ate) < negligible and v not in surviving))
    plan = FeedbackPlan((), remove, tuple(added), (), dict(effects), negligible)
    return graph, plan


def graph_distance(g1: CausalGraph, g2: CausalGraph) -> int:
    """Structural Hamming distance; nodes present in only one graph count once each."""
    dist = len(set(g1.nodes) ^ set(g2.nodes))
    pairs = {frozenset(e) for e in g1.edges} | {frozenset(e) for e in g2.edges}
    for pair in pairs:
        u, v = sorted(pair)
        o1 = (u, v) in g1.edges, (v, u) in g1.edges
        o2 = (u, v) in g2.edges, (v, u) in g2.edges
        dist += o1 != o2
    return dist
