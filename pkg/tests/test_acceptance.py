"""Acceptance criteria 1-11, each checked at its stated tolerance.

Every test records a one-line PASS/FAIL verdict that is printed in the
pytest terminal summary under "acceptance criteria".
"""

from __future__ import annotations

import itertools
import math
import subprocess
import sys
import time

import numpy as np
import pandas as pd
import pytest
from scipy.optimize import linear_sum_assignment

from cphs.causal import CausalGraph, d_separated, estimate_ate_ipw
from cphs.fusion import existing_curve, target_curve
from cphs.ivesim import build_sted_schedule, perturb_ground_truth, profile_contexts, profile_distance
from cphs.loop import fuse_once, pilot_graph, run_design_loop
from cphs.metrics import (
    EmpiricalDistribution,
    HypothesisSet,
    KnownMoments,
    bayes_optimal_label,
    hypothesis_loss,
    target_discrepancy,
    wasserstein1,
)
from cphs.nn import mlp_gradient
from conftest import PLANTED, record_criterion
from test_nn import finite_difference, random_net


def test_criterion_01_augmented_closer_to_target(case_config):
    centers = case_config.training.centers
    target = target_curve(case_config.target, centers)
    existing = target_discrepancy(existing_curve(case_config.hunt, centers), target)
    start = time.perf_counter()
    augmented = []
    for seed in range(10):
        _, _, model, _ = fuse_once(case_config, seed=seed)
        augmented.append(target_discrepancy(model.curve, target))
    elapsed = time.perf_counter() - start
    wins = sum(a < existing for a in augmented)
    improvement = float(np.median([(existing - a) / existing for a in augmented]))
    ok = wins >= 9 and improvement >= 0.30 and elapsed <= 300
    record_criterion(1, ok, f"improved {wins}/10, median improvement {improvement:.1%}, {elapsed:.1f}s (existing {existing:.4f})")
    assert ok


def test_criterion_02_identity_hypothesis_loss():
    rng = np.random.default_rng(20)
    worst = 0.0
    for _ in range(100):
        values = rng.uniform(-5, 5, size=int(rng.integers(1, 200)))
        mu = float(rng.uniform(-5, 5))
        oracle = abs(math.fsum(values) / len(values) - mu)
        got = hypothesis_loss(EmpiricalDistribution(values), KnownMoments(mu, 1.0), HypothesisSet.identity(-5, 5))
        worst = max(worst, abs(got - oracle))
    ok = worst <= 1e-12
    record_criterion(2, ok, f"max |loss - |mean - mu|| = {worst:.2e} over 100 sets")
    assert ok


def test_criterion_03_gradient_check():
    rng = np.random.default_rng(30)
    worst = 0.0
    for _ in range(50):
        net = random_net(rng)
        x = rng.normal(size=(4, net.sizes[0]))
        up = rng.normal(size=(4, net.sizes[-1]))
        gw, gb = mlp_gradient(net, x, up)
        for a, n in zip(gw + gb, finite_difference(net, x, up, h=1e-5)):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-12)
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    ok = worst < 1e-4
    record_criterion(3, ok, f"max relative error {worst:.2e} over 50 networks")
    assert ok


def test_criterion_04_wasserstein_matching_oracle():
    rng = np.random.default_rng(40)
    worst = 0.0
    for _ in range(100):
        a, b = rng.normal(size=8), rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2), size=8)
        rows, cols = linear_sum_assignment(np.abs(a[:, None] - b[None, :]))
        oracle = float(np.abs(a[rows] - b[cols]).mean())
        worst = max(worst, abs(wasserstein1(EmpiricalDistribution(a), EmpiricalDistribution(b)) - oracle))
    ok = worst <= 1e-9
    record_criterion(4, ok, f"max |W1 - matching cost| = {worst:.2e} over 100 pairs")
    assert ok


def _all_paths(adj, x, y):
    out = []

    def walk(node, path):
        if node == y:
            out.append(path)
            return
        for nxt in adj[node]:
            if nxt not in path:
                walk(nxt, path + [nxt])

    walk(x, [x])
    return out


def _path_active(graph, path, z, desc):
    for a, b, c in zip(path, path[1:], path[2:]):
        if (a, b) in graph.edges and (c, b) in graph.edges:
            if b not in z and not (desc[b] & z):
                return False
        elif b in z:
            return False
    return True


def test_criterion_05_d_separation_path_oracle():
    rng = np.random.default_rng(50)
    triples = mismatches = 0
    for _ in range(200):
        n = int(rng.integers(2, 9))
        names = [f"n{i}" for i in range(n)]
        order = rng.permutation(n)
        p = rng.uniform(0.15, 0.6)
        edges = [(names[order[i]], names[order[j]]) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
        g = CausalGraph.from_edges(edges, names)
        adj = {v: g.parents(v) | g.children(v) for v in names}
        desc = {v: g.descendants(v) for v in names}
        for x, y in itertools.combinations(names, 2):
            paths = _all_paths(adj, x, y)
            rest = [v for v in names if v not in (x, y)]
            for k in range(3):
                for z in itertools.combinations(rest, k):
                    oracle = not any(_path_active(g, path, set(z), desc) for path in paths)
                    mismatches += oracle != d_separated(g, x, y, z)
                    triples += 1
    ok = mismatches == 0
    record_criterion(5, ok, f"{mismatches} mismatches over {triples} triples on 200 DAGs")
    assert ok


def _confounded(n, seed):
    """Binary confounder c -> t, c -> y; y is a binary action with risk difference 0.3 for t."""
    rng = np.random.default_rng(seed)
    c = (rng.random(n) < 0.5).astype(int)
    t = (rng.random(n) < 0.2 + 0.6 * c).astype(int)
    y = (rng.random(n) < 0.2 + 0.3 * t + 0.3 * c).astype(int)
    return pd.DataFrame({"c": c, "t": t, "y": y})


def test_criterion_06_ipw_recovers_effect():
    results = []
    for seed in range(5):
        ate, diag = estimate_ate_ipw(_confounded(10_000, seed), "t", "y", ["c"])
        results.append((ate, diag.naive_difference))
    ok = all(abs(a - 0.3) < 0.05 and abs(nv - 0.3) > 0.1 for a, nv in results)
    detail = ", ".join(f"ipw {a:.3f}/naive {nv:.3f}" for a, nv in results)
    record_criterion(6, ok, f"5 seeds: {detail}")
    assert ok


def test_criterion_07_bayes_rule_minimal():
    rng = np.random.default_rng(70)
    worst = -math.inf
    for _ in range(50):
        n = int(rng.integers(1, 13))
        joint = rng.dirichlet(np.ones(2 * n)).reshape(n, 2)  # joint[x, y]
        eta = joint[:, 1] / joint.sum(axis=1)
        rule = np.array([bayes_optimal_label(float(e)) for e in eta])
        rule_error = joint[np.arange(n), 1 - rule].sum()
        best = min(joint[np.arange(n), 1 - np.array(lab)].sum() for lab in itertools.product((0, 1), repeat=n))
        worst = max(worst, rule_error - best)
    ok = worst <= 1e-12
    record_criterion(7, ok, f"max (rule error - exhaustive minimum) = {worst:.2e} over 50 joints")
    assert ok


def test_criterion_08_schedule_counts(case_config):
    sched = build_sted_schedule(case_config.schedule)
    counts = tuple(sched.event_counts().values())
    ok = counts == (36, 36, 18, 18, 18, 18, 36) and len(sched) == 180
    record_criterion(8, ok, f"counts {counts}, total {len(sched)}")
    assert ok


def test_criterion_09_auxiliary_radius(case_config):
    models = perturb_ground_truth(case_config.truth, 0.1, 10, 90)
    rng = np.random.default_rng(91)
    verdicts = []
    for i, aux in enumerate(models):
        # fresh contexts, disjoint from the grid used during construction
        contexts = profile_contexts(seed=10_000 + i, n=2000)
        d = profile_distance(aux, case_config.truth, contexts)
        boot = []
        for _ in range(40):
            idx = rng.integers(len(contexts), size=len(contexts))
            boot.append(profile_distance(aux, case_config.truth, [contexts[j] for j in idx]))
        sigma = float(np.std(boot))
        verdicts.append((d, sigma, d <= 0.1 + 3 * sigma))
    ok = len(models) == 10 and all(v for *_, v in verdicts)
    worst = max(verdicts, key=lambda v: v[0] - 3 * v[1])
    record_criterion(9, ok, f"10 models, largest re-measured distance {worst[0]:.4f} (sigma {worst[1]:.4f}) vs alpha 0.1")
    assert ok


def test_criterion_10_planted_edge_recovered(planted_config, case_config):
    truth = pilot_graph(case_config)
    planted_pilot = pilot_graph(planted_config)
    missing = set(truth.edges) - set(planted_pilot.edges)
    outcomes = []
    for seed in (planted_config.seed, 2, 3):
        cfg = planted_config.with_seed(seed)
        first, second = run_design_loop(cfg), run_design_loop(cfg)
        s = first.state
        recovered = s.refined_graph == truth and set(s.plans[0].edges_added) == missing
        deterministic = (
            s.discrepancy_history == second.state.discrepancy_history
            and s.graph_distance_history == second.state.graph_distance_history
            and s.refined_graph == second.state.refined_graph
        )
        outcomes.append((seed, first.termination, s.iteration, recovered, deterministic))
    ok = all(t == "graph_converged" and it <= 3 and rec and det for _, t, it, rec, det in outcomes)
    detail = "; ".join(f"seed {sd}: {t} at {it}, recovered={rec}, deterministic={det}" for sd, t, it, rec, det in outcomes)
    record_criterion(10, ok, f"missing edge {sorted(missing)}; {detail}")
    assert ok


def test_criterion_11_cli_loop_byte_identical(tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        proc = subprocess.run(
            [sys.executable, "-m", "cphs", "loop", "--config", str(PLANTED), "--seed", "11", "--out", str(out)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    names = ("curves.csv", "loop_history.csv", "pilot_graph.txt", "final_graph.txt", "manifest.txt")
    same = {n: (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names}
    ok = all(same.values())
    record_criterion(11, ok, "identical: " + ", ".join(n for n, s in same.items() if s))
    assert ok


@pytest.fixture(scope="module", autouse=True)
def _echo_verdicts():
    yield
    from conftest import ACCEPTANCE

    for n in sorted(ACCEPTANCE):
        print(ACCEPTANCE[n])
