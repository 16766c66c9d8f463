from __future__ import annotations

import itertools

import numpy as np
import pandas as pd
import pytest

from cphs.causal import (
    CausalGraph,
    IndependenceTest,
    IndependenceTestReport,
    adjustment_set,
    ci_test,
    d_separated,
    estimate_ate_ipw,
    graph_distance,
    implied_independencies,
    refine_graph,
    satisfies_backdoor,
    test_implications,
)
from cphs.errors import ContractError


def random_dag(rng, n, p=0.35):
    names = [f"v{i}" for i in range(n)]
    order = rng.permutation(n)
    edges = [(names[order[i]], names[order[j]]) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return CausalGraph.from_edges(edges, names)


# --- graph type


def test_cycle_rejected():
    g = CausalGraph.from_edges([("a", "b"), ("b", "c")])
    with pytest.raises(ContractError):
        g.with_edge("c", "a")
    with pytest.raises(ContractError):
        CausalGraph.from_edges([("a", "a")])


def test_text_round_trip(tmp_path):
    g = CausalGraph.from_edges([("a", "b"), ("c", "b")], ["lonely"])
    g.write(tmp_path / "g.txt")
    assert CausalGraph.read(tmp_path / "g.txt") == g


def test_surgery_and_relatives():
    g = CausalGraph.from_edges([("c", "t"), ("t", "y"), ("c", "y")])
    assert not g.surgery("t").children("t")
    assert g.surgery("t").parents("t") == {"c"}
    assert g.descendants("c") == {"t", "y"}
    assert g.ancestors("y") == {"c", "t"}


# --- d-separation


def test_chain_and_collider():
    chain = CausalGraph.from_edges([("A", "B"), ("B", "C")])
    assert d_separated(chain, "A", "C", {"B"})
    assert not d_separated(chain, "A", "C", set())
    collider = CausalGraph.from_edges([("A", "B"), ("C", "B")])
    assert d_separated(collider, "A", "C", set())
    assert not d_separated(collider, "A", "C", {"B"})
    with pytest.raises(ContractError):
        d_separated(chain, "A", "A", set())


def test_collider_descendant_opens_path():
    g = CausalGraph.from_edges([("A", "B"), ("C", "B"), ("B", "D")])
    assert not d_separated(g, "A", "C", {"D"})


def test_edgeless_graph_all_independent():
    g = CausalGraph.from_edges([], ["a", "b", "c"])
    assert len(implied_independencies(g)) == 3 * 2  # 3 pairs x (empty set, the third node)


def test_complete_dag_has_no_implications():
    g = CausalGraph.from_edges([(a, b) for a, b in itertools.combinations("abcde", 2)])
    assert implied_independencies(g) == []


def test_fork_matches_enumeration():
    g = CausalGraph.from_edges([("r", "a"), ("r", "b"), ("r", "c"), ("r", "d")])
    expected = []
    for x, y in itertools.combinations(g.nodes, 2):
        rest = [n for n in g.nodes if n not in (x, y)]
        for k in range(3):
            for z in itertools.combinations(rest, k):
                if d_separated(g, x, y, z):
                    expected.append((x, y, z))
    assert implied_independencies(g) == expected
    assert ("a", "b", ("r",)) in expected and ("a", "b", ()) not in expected


# --- CI tests


def _scm_sample(n, seed):
    """Binary/continuous data from c -> t -> y, c -> y, plus independent u."""
    rng = np.random.default_rng(seed)
    c = rng.normal(size=n)
    t = (rng.random(n) < 1 / (1 + np.exp(-1.5 * c))).astype(int)
    y = 0.8 * t + c + rng.normal(size=n)
    u = rng.integers(0, 3, size=n)
    w = 0.5 * c + rng.normal(size=n)
    return pd.DataFrame({"c": c, "t": t, "y": y, "u": u, "w": w})


def test_calibration_on_faithful_data():
    g = CausalGraph.from_edges([("c", "t"), ("t", "y"), ("c", "y"), ("c", "w")], ["u"])
    report = test_implications(g, _scm_sample(10_000, 0), alpha_sig=0.01)
    assert len(report) > 0
    assert len(report.rejected()) <= 0.1 * len(report)


def test_independent_coins_mostly_accepted():
    rng = np.random.default_rng(1)
    pvals = []
    for _ in range(100):
        df = pd.DataFrame({"a": rng.integers(0, 2, 500), "b": rng.integers(0, 2, 500)})
        pvals.append(ci_test(df, "a", "b", ())[0])
    assert np.mean(np.array(pvals) < 0.01) <= 0.05
    assert 0.3 < np.mean(pvals) < 0.7


def test_functional_dependence_rejected():
    rng = np.random.default_rng(2)
    x = rng.integers(0, 3, 300)
    df = pd.DataFrame({"x": x, "y": x})
    g = CausalGraph.from_edges([], ["x", "y"])
    report = test_implications(g, df)
    assert report.rejected() and report.rejected()[0].p_value < 1e-10
    cont = pd.DataFrame({"x": rng.normal(size=300)})
    cont["y"] = 2 * cont["x"]
    assert ci_test(cont, "x", "y", ()) == (0.0, "fisher_z", 0)


def test_small_data_rejected():
    with pytest.raises(ContractError):
        test_implications(CausalGraph.from_edges([], ["a", "b"]), pd.DataFrame({"a": [0] * 5, "b": [1] * 5}))


def test_report_round_trip(tmp_path):
    rep = IndependenceTestReport((IndependenceTest("a", "b", ("c", "d"), True, 0.5, False, "g_test", 2),), 0.01)
    rep.write_csv(tmp_path / "r.csv")
    assert IndependenceTestReport.read_csv(tmp_path / "r.csv") == rep


# --- adjustment


def test_adjustment_examples():
    g = CausalGraph.from_edges([("C", "T"), ("C", "Y"), ("T", "Y")])
    assert adjustment_set(g, "T", "Y") == ("C",)
    assert adjustment_set(CausalGraph.from_edges([("T", "Y")]), "T", "Y") == ()


def test_adjustment_none_when_outcome_causes_treatment():
    g = CausalGraph.from_edges([("Y", "T"), ("C", "T")])
    assert adjustment_set(g, "T", "Y") is None
    # mediators are never adjusted for
    g = CausalGraph.from_edges([("T", "M"), ("M", "Y"), ("T", "Y")])
    assert adjustment_set(g, "T", "Y") == ()


def _backdoor_oracle(graph, t, y, z):
    """Check the criterion by enumerating undirected paths that start with an arrow into t."""
    z = set(z)
    if z & graph.descendants(t):
        return False
    adj = {n: graph.parents(n) | graph.children(n) for n in graph.nodes}

    def blocked(path):
        for a, b, c in zip(path, path[1:], path[2:]):
            collider = (a, b) in graph.edges and (c, b) in graph.edges
            if collider:
                if b not in z and not (graph.descendants(b) & z):
                    return True
            elif b in z:
                return True
        return False

    def paths(node, seen):
        if node == y:
            yield list(seen)
            return
        for nxt in adj[node]:
            if nxt not in seen:
                yield from paths(nxt, seen + [nxt])

    for p in graph.parents(t):
        for path in paths(p, [t, p]):
            if not blocked(path):
                return False
    return True


def test_adjustment_random_graphs_pass_oracle():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(60):
        g = random_dag(rng, 7, 0.4)
        for t, y in itertools.permutations(g.nodes, 2):
            if y not in g.descendants(t):
                continue
            z = adjustment_set(g, t, y)
            if z is None:
                continue
            assert _backdoor_oracle(g, t, y, z)
            assert satisfies_backdoor(g, t, y, z)
            checked += 1
    assert checked > 50


# --- IPW


def test_randomized_treatment():
    rng = np.random.default_rng(0)
    n = 10_000
    t = rng.integers(0, 2, n)
    df = pd.DataFrame({"t": t, "y": t + rng.normal(size=n)})
    ate, diag = estimate_ate_ipw(df, "t", "y")
    assert abs(ate - 1.0) < 0.05 and diag.n_clipped == 0


def test_null_effect():
    rng = np.random.default_rng(1)
    n = 10_000
    c = rng.normal(size=n)
    df = pd.DataFrame({"c": c, "t": (rng.random(n) < 0.5).astype(int), "y": c + rng.normal(size=n)})
    assert abs(estimate_ate_ipw(df, "t", "y", ["c"])[0]) < 0.05


def test_stabilized_weights_same_point_estimate():
    df = _scm_sample(5000, 3)
    a, _ = estimate_ate_ipw(df, "t", "y", ["c"])
    b, diag = estimate_ate_ipw(df, "t", "y", ["c"], stabilized=True)
    assert a == pytest.approx(b, abs=1e-12)
    assert diag.weight_mean == pytest.approx(1.0, abs=0.1)


def test_categorical_covariate_and_clipping():
    rng = np.random.default_rng(4)
    n = 4000
    g = rng.choice(["lo", "mid", "hi"], n)
    p = np.select([g == "lo", g == "mid"], [0.001, 0.5], 0.999)
    t = (rng.random(n) < p).astype(int)
    df = pd.DataFrame({"g": g, "t": t, "y": t * 0.5 + rng.normal(size=n)})
    ate, diag = estimate_ate_ipw(df, "t", "y", ["g"])
    assert diag.n_clipped > 0
    assert np.isfinite(ate)


def test_single_arm():
    with pytest.raises(ContractError):
        estimate_ate_ipw(pd.DataFrame({"t": [1] * 10, "y": range(10)}), "t", "y")


# --- refinement


def test_empty_report_keeps_pilot():
    g = CausalGraph.from_edges([("a", "b")])
    out, plan = refine_graph(g, IndependenceTestReport((), 0.01), {}, 2)
    assert out == g and plan.is_empty


def test_single_rejection_adds_edge():
    g = CausalGraph.from_edges([], ["B", "A"])
    rep = IndependenceTestReport((IndependenceTest("A", "B", (), True, 1e-9, True, "g_test"),), 0.01)
    out, plan = refine_graph(g, rep, {}, 1)
    assert plan.edges_added == (("A", "B"),)
    assert set(out.edges) == {("A", "B")}


def test_orientation_respects_acyclicity():
    g = CausalGraph.from_edges([("b", "m"), ("m", "a")])
    rep = IndependenceTestReport((IndependenceTest("a", "b", ("m",), True, 1e-9, True, "g_test"),), 0.01)
    out, plan = refine_graph(g, rep, {}, 1)
    assert plan.edges_added == (("b", "a"),)


def test_planted_edge_recovered():
    truth = CausalGraph.from_edges([("x", "m"), ("m", "y"), ("x", "y")])
    pilot = truth.without_edge("x", "y")
    rng = np.random.default_rng(5)
    n = 10_000
    x = rng.normal(size=n)
    m = x + rng.normal(size=n)
    y = m + 0.8 * x + rng.normal(size=n)
    df = pd.DataFrame({"x": x, "m": m, "y": y})
    rep = test_implications(pilot, df)
    out, plan = refine_graph(pilot, rep, {}, 1)
    assert out == truth and plan.edges_added == (("x", "y"),)
    assert graph_distance(out, pilot) <= 1


def test_negligible_variable_proposed_for_removal():
    g = CausalGraph.from_edges([("a", "y"), ("n", "y")])
    out, plan = refine_graph(g, IndependenceTestReport((), 0.01), {"a": 0.3, "n": 0.001}, 2)
    assert plan.variables_to_remove == ("n",) and out == g


def test_graph_distance():
    g = CausalGraph.from_edges([("a", "b"), ("b", "c")])
    assert graph_distance(g, g) == 0
    assert graph_distance(g, g.without_edge("a", "b").with_edge("b", "a")) == 1
    rng = np.random.default_rng(6)
    for _ in range(50):
        g1, g2 = random_dag(rng, 6), random_dag(rng, 6)
        und1 = {frozenset(e) for e in g1.edges}
        und2 = {frozenset(e) for e in g2.edges}
        reversed_ = sum(1 for e in g1.edges if (e[1], e[0]) in g2.edges)
        assert graph_distance(g1, g2) == len(und1 ^ und2) + reversed_
