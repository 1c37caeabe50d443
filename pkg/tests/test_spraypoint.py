import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expanderlab.errors import ValidationError
from expanderlab.graph_core import Topology, build_configuration_graph
from expanderlab.spraypoint import (DestinationTables, build_pointing_graph, compute_levels, default_level_count,
                                    enumerate_paths, path_length_distribution, spray_set)

from oracles import check_levels, check_pointing


def test_default_level_count_examples():
    assert default_level_count(1000, 64, 4) == 1
    assert default_level_count(2 * 30 ** 2, 30, 3) == 1
    assert default_level_count(10000, 28, 2) == 3
    with pytest.raises(ValidationError):
        default_level_count(1000, 64, 1)


def test_ring_example_levels(ring_example):
    topo, ids, score = ring_example
    lv = compute_levels(topo, ids["t"], 2, 1, key=5, score=score)
    by_tag = {}
    for name, u in ids.items():
        by_tag.setdefault(lv.tag(u), set()).add(name)
    assert by_tag["WP0"] == {f"v{i}" for i in range(1, 5)}
    assert by_tag["WP1"] == {f"w{i}" for i in range(1, 9)}
    assert by_tag["IR"] == {f"r{i}" for i in range(1, 16)}
    assert by_tag["OR"] == {"o1", "o2", "o3"}


def test_ring_example_forwarding(ring_example):
    topo, ids, score = ring_example
    name = {u: k for k, u in ids.items()}
    t = ids["t"]
    lv = compute_levels(topo, t, 2, 1, key=5, score=score)
    pg = build_pointing_graph(topo, lv, 1, key=5)
    chain, u = [], ids["o1"]
    while u != t:
        u = pg.parents_of(u)[0]
        chain.append(name[u])
    assert chain == ["r6", "w5", "v3", "t"]
    assert pg.parents_of(ids["v1"]) == [t]
    assert {name[u] for u in spray_set(topo, ids["v2"])} == {"t", "w3", "w4", "o1"}
    paths = {tuple(name[x] for x in path) for path, _ in enumerate_paths(topo, lv, pg, ids["v2"], t)}
    assert ("v2", "w3", "v2", "t") in paths
    assert ("v2", "t") in paths
    assert ("v2", "o1", "r6", "w5", "v3", "t") in paths


def test_complete_graph_has_only_first_level():
    edges = [(u, v) for u in range(6) for v in range(u + 1, 6)]
    topo = Topology(6, 5, np.array(edges))
    lv = compute_levels(topo, 0, 2, 1, key=1)
    assert np.all(lv.level_of[1:] == 0)
    assert len(lv.waypoint_levels[1]) == len(lv.inner_ring) == len(lv.outer_ring) == 0
    assert set(spray_set(topo, 3).tolist()) == {0, 1, 2, 4, 5}


def test_first_level_size_matches_random_choice(default_topo):
    ours = [len(compute_levels(default_topo, t, 2, 1, key=1).waypoint_levels[1]) for t in range(20)]
    # independent oracle: each WP0 node samples two fresh neighbours with the stdlib RNG
    rng = random.Random(5)
    nbrs = [set(default_topo.neighbors(u).tolist()) for u in range(default_topo.n)]
    theirs = []
    for t in range(20):
        for _ in range(10):
            chosen = set()
            for v in nbrs[t]:
                fresh = sorted(nbrs[v] - nbrs[t] - {t})
                chosen.update(rng.sample(fresh, min(2, len(fresh))))
            theirs.append(len(chosen))
    assert np.mean(ours) == pytest.approx(np.mean(theirs), rel=0.02)
    assert 0.9 * 128 < np.mean(ours) <= 128


def test_default_pointing_graphs_are_clean(default_topo):
    tables = DestinationTables(default_topo, 4, 2, 1, 1)
    for t in range(0, 1000, 50):
        lv, pg = tables.get(t)
        assert check_levels(default_topo, lv) == []
        assert check_pointing(default_topo, lv, pg) == []


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**9), p=st.integers(2, 5), h=st.integers(1, 4), key=st.integers(0, 2**32),
       t=st.integers(0, 199), ell=st.integers(1, 2))
def test_structure_holds_for_any_key(seed, p, h, key, t, ell):
    topo = build_configuration_graph(200, 12, seed=seed)
    lv = compute_levels(topo, t, p, ell, key)
    pg = build_pointing_graph(topo, lv, h, key)
    assert check_levels(topo, lv) == []
    assert check_pointing(topo, lv, pg) == []
    s = (t + 1 + seed % 199) % 200
    for path, _ in enumerate_paths(topo, lv, pg, s, t):
        assert 1 <= len(path) - 1 <= ell + 4
        assert path[-1] == t and path.count(s) <= 2


def test_levels_are_pure_functions(small_topo):
    a = compute_levels(small_topo, 3, 2, 1, key=9)
    b = compute_levels(small_topo, 3, 2, 1, key=9)
    c = compute_levels(small_topo, 3, 2, 1, key=10)
    assert a.dump() == b.dump()
    assert not np.array_equal(a.level_of, c.level_of)
    assert check_levels(small_topo, c) == []


def test_ir_parent_rules_agree_with_one_level(small_topo):
    lv = compute_levels(small_topo, 0, 2, 1, key=1)
    a = build_pointing_graph(small_topo, lv, 2, 1, ir_parent_rule="last_level")
    b = build_pointing_graph(small_topo, lv, 2, 1, ir_parent_rule="any_waypoint")
    assert np.array_equal(a.parents, b.parents)


def test_path_length_histogram(default_topo):
    hist = path_length_distribution(default_topo, 2, 2, None, 1, 20000, seed=4)
    assert sum(hist.values()) == pytest.approx(1.0)
    assert all(v >= 0 for v in hist.values())
    assert hist[1] < 0.003
    assert hist[2] == pytest.approx(0.064, abs=0.01)
    assert hist.get(5, 0.0) <= 0.001


def test_sampled_histogram_is_seeded(small_topo):
    a = path_length_distribution(small_topo, 2, 2, 1, 1, 500, seed=2)
    b = path_length_distribution(small_topo, 2, 2, 1, 1, 500, seed=2)
    assert a == b
