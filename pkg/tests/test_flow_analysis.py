import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expanderlab.errors import NoPath, PremiseViolated, ValidationError
from expanderlab.flow_analysis import (ExplicitPaths, KShortestPaths, SpraypointPaths, build_spraypoint_graph,
                                       check_flow_result, compare_routing, descendant_graph, edge_disjoint_count,
                                       generate_traffic, ksp_paths, matching_mincut_oracle, max_concurrent_flow,
                                       oversubscription, random_matching, synthetic_source_flow)
from expanderlab.graph_core import Topology, build_configuration_graph
from expanderlab.models import oversub_length_lower_bound
from expanderlab.spraypoint import DestinationTables, build_pointing_graph, compute_levels, enumerate_paths

from oracles import brute_force_matching, max_disjoint_packing, small_digraph_corpus


def complete(n):
    return Topology(n, n - 1, np.array([(u, v) for u in range(n) for v in range(u + 1, n)]))


def test_spraypoint_graph_on_complete_graph():
    topo = complete(4)
    lv = compute_levels(topo, 0, 2, 1, key=1)
    pg = build_pointing_graph(topo, lv, 2, key=1)
    arcs = {tuple(a) for a in build_spraypoint_graph(topo, lv, pg, 1, 0).tolist()}
    assert arcs == {(1, 0), (1, 2), (1, 3), (2, 0), (3, 0)}
    assert edge_disjoint_count(np.array(sorted(arcs)), 1, 0) == 3


def test_spraypoint_graph_on_ring_example(ring_example):
    topo, ids, score = ring_example
    t = ids["t"]
    lv = compute_levels(topo, t, 2, 1, key=5, score=score)
    pg = build_pointing_graph(topo, lv, 1, key=5)
    arcs = {tuple(a) for a in build_spraypoint_graph(topo, lv, pg, ids["v2"], t).tolist()}
    assert (ids["o1"], ids["r6"]) in arcs


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), h=st.integers(1, 3), p=st.integers(2, 4))
def test_spraypoint_graph_size_bound(seed, h, p):
    topo = build_configuration_graph(60, 6, seed=seed)
    lv = compute_levels(topo, 0, p, 1, key=seed)
    pg = build_pointing_graph(topo, lv, h, key=seed)
    for s in (1, 17, 42):
        arcs = build_spraypoint_graph(topo, lv, pg, s, 0)
        assert len(arcs) <= topo.n * (h + 1) + topo.d


def test_two_disjoint_routes():
    assert edge_disjoint_count(np.array([(0, 1), (1, 3), (0, 2), (2, 3)]), 0, 3) == 2


def test_edp_equals_exhaustive_packing():
    for arcs in small_digraph_corpus(150, seed=3):
        got = edge_disjoint_count(np.array(arcs, dtype=np.int64).reshape(-1, 2), 0, 5, n=6)
        assert got == max_disjoint_packing(arcs, 0, 5), arcs


def test_compiled_paths_match_enumeration(small_topo):
    prov = SpraypointPaths(small_topo, 2, 2, 3)
    for s, t in [(0, 5), (10, 199), (77, 3), (150, 151)]:
        lv, pg = prov.tables.get(t)
        ref = sorted(path for path, _ in enumerate_paths(small_topo, lv, pg, s, t))
        assert sorted(prov.paths(s, t)) == ref


def test_matching_oracle_examples(small_topo):
    lv = compute_levels(small_topo, 0, 2, 1, key=1)
    pg = build_pointing_graph(small_topo, lv, 2, key=1)
    ir = lv.inner_ring
    assert matching_mincut_oracle(small_topo, lv, pg, [int(ir[0])], 0) == 1
    assert matching_mincut_oracle(small_topo, lv, pg, [], 0) == 0
    with pytest.raises(PremiseViolated):
        matching_mincut_oracle(small_topo, lv, pg, [int(lv.waypoint_levels[0][0])], 0)


def test_matching_oracle_against_brute_force(small_topo):
    rng = np.random.default_rng(0)
    for t in range(5):
        lv = compute_levels(small_topo, t, 2, 1, key=2)
        pg = build_pointing_graph(small_topo, lv, 2, key=2)
        S = rng.choice(lv.inner_ring, size=6, replace=False).tolist()
        adj = descendant_graph(small_topo, lv, pg, S)
        expected = brute_force_matching(adj, len(lv.waypoint_levels[0]))
        assert matching_mincut_oracle(small_topo, lv, pg, S, t) == expected
        assert synthetic_source_flow(small_topo, lv, pg, S, t) == expected


def test_traffic_shapes():
    m = generate_traffic("matching", 1.0, 50, seed=1)
    dense = np.zeros((50, 50))
    dense[m.src, m.dst] = m.rate
    assert np.all(dense.sum(0) == 1) and np.all(dense.sum(1) == 1)

    c = generate_traffic("clique", 0.2, 100, seed=1)
    members = np.unique(c.src)
    assert len(members) == 20 and len(c) == 20 * 19
    assert np.allclose(c.rate, 1 / 19)
    assert np.allclose(c.row_sums()[members], 1.0)

    h = generate_traffic("hubs", 0.2, 100, seed=1)
    rows = h.row_sums()
    hubs = np.flatnonzero(np.isclose(rows, 1.0))
    assert len(hubs) == 20
    non_hub = np.setdiff1d(np.arange(100), hubs)
    hub_set = set(hubs.tolist())
    assert all(d in hub_set for s, d in zip(h.src.tolist(), h.dst.tolist()) if s in set(non_hub.tolist()))
    with pytest.raises(ValidationError):
        generate_traffic("clique", 0.01, 100, seed=1)
    with pytest.raises(ValidationError):
        generate_traffic("ring", 0.5, 100, seed=1)


@settings(max_examples=40, deadline=None)
@given(pattern=st.sampled_from(["matching", "clique", "hubs"]), f=st.floats(0.05, 1.0),
       n=st.integers(20, 120), seed=st.integers(0, 10**6))
def test_traffic_is_doubly_substochastic(pattern, f, n, seed):
    if f * n < 2:
        return
    m = generate_traffic(pattern, f, n, seed)
    assert m.is_substochastic()
    assert m.row_sums().max() <= 1 + 1e-9 and m.col_sums().max() <= 1 + 1e-9
    assert not np.any(m.src == m.dst)


def test_flow_on_hand_built_paths():
    # path 0-1-2 and 3-1-4: both pairs forced through node 1 but on different arcs
    topo = Topology(5, 2, np.array([(0, 1), (1, 2), (3, 1), (1, 4), (2, 4)]), simple=True)
    lone = ExplicitPaths(topo, {(0, 2): [[0, 1, 2]]})
    m = generate_traffic("matching", 1.0, 2, seed=0)
    single = type(m)(5, np.array([0]), np.array([2]), np.array([1.0]))
    assert max_concurrent_flow(topo, lone, single, node_capacity=1).r == pytest.approx(1.0, rel=0.05)

    shared = ExplicitPaths(topo, {(0, 2): [[0, 1, 2]], (3, 2): [[3, 1, 2]]})
    both = type(m)(5, np.array([0, 3]), np.array([2, 2]), np.array([1.0, 1.0]))
    res = max_concurrent_flow(topo, shared, both, node_capacity=1)
    assert res.r == pytest.approx(2.0, rel=0.05)
    assert res.lam == pytest.approx(0.5, rel=0.05)
    with pytest.raises(NoPath):
        max_concurrent_flow(topo, ExplicitPaths(topo, {}), single)


def test_flow_results_are_consistent(small_topo):
    prov = SpraypointPaths(small_topo, 2, 2, 1)
    for i in range(3):
        res = max_concurrent_flow(small_topo, prov, random_matching(200, seed=i), eps=0.05)
        assert check_flow_result(res) == []
        assert res.r >= oversub_length_lower_bound(res.delta) - res.eps * res.r
        assert res.max_utilization() <= 1 + res.eps


def test_single_matching_report(small_topo):
    rep = oversubscription(small_topo, 2, 2, 1, 1, 0.05, seed=9)
    assert rep.worst == rep.best == rep.values[0]
    assert rep.spread == 0


def test_ksp_examples():
    topo = Topology(4, 2, np.array([(0, 1), (1, 3), (0, 2), (2, 3)]))
    assert ksp_paths(topo, 0, 3, 2) == [[0, 1, 3], [0, 2, 3]]
    g = build_configuration_graph(100, 8, seed=2)
    paths = ksp_paths(g, 3, 50, 8)
    assert len(paths) == 8
    assert [len(p) for p in paths] == sorted(len(p) for p in paths)
    with pytest.raises(ValidationError):
        ksp_paths(g, 3, 50, 0)
    assert KShortestPaths(g, 8).paths(3, 50) == paths


def test_spraypoint_beats_shortest_paths_on_diversity(default_topo):
    cmp = compare_routing(default_topo, 4, 2, 1, ["spraypoint", "ksp8"], 10, seed=3)
    assert cmp.median("spraypoint") > cmp.median("ksp8")
    assert len(cmp.edp("ksp8")) == 10
    assert np.all(cmp.edp("ksp8") <= 8)


def test_h_two_beats_h_one(small_topo):
    one = oversubscription(small_topo, 4, 1, 1, 2, 0.05, seed=1).worst
    two = oversubscription(small_topo, 4, 2, 1, 2, 0.05, seed=1).worst
    assert two < one
