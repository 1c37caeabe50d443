import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expanderlab.errors import LayoutInfeasible, UnplacedNode, ValidationError
from expanderlab.flow_analysis import SpraypointPaths, pair_edge_disjoint, sample_pairs
from expanderlab.graph_core import build_configuration_graph
from expanderlab.latency import (Geometry, LatencyParams, biased_levels, even_rooms, fat_tree_hop_counts,
                                 fat_tree_latency_baseline, latency_distribution, layout_plan, pair_latencies,
                                 path_latency, place_routers)
from expanderlab.spraypoint import DestinationTables, compute_levels, enumerate_paths


@pytest.fixture(scope="module")
def fabric():
    topo = build_configuration_graph(300, 24, seed=5)
    geom = Geometry()
    return topo, geom, place_routers(geom, even_rooms(topo.n, geom.rooms))


def test_co_located_paths_cost_only_hops():
    geom = Geometry(span=1e-9, rooms=1, room_depth=0.0, cable_drop=0.0)
    place = place_routers(geom, [0] * 5)
    params = LatencyParams(per_hop_switch=120.0)
    assert path_latency([0, 3, 1, 4], place, params) == pytest.approx(3 * 820.0, rel=1e-9)
    assert path_latency([2], place, params) == 0.0


@settings(max_examples=30, deadline=None)
@given(path=st.lists(st.integers(0, 99), min_size=2, max_size=6), extra=st.tuples(st.integers(0, 99),
                                                                                 st.integers(0, 99)))
def test_two_more_hops_cost_at_most_the_quoted_bound(path, extra):
    # with no room depth or drops every hop stays within the 300 m span
    geom = Geometry(span=300.0, rooms=10, room_depth=0.0, cable_drop=0.0)
    place = place_routers(geom, even_rooms(100, 10))
    params = LatencyParams()
    base = path_latency(path, place, params)
    longer = path_latency(path + list(extra), place, params)
    assert longer - base <= 4400.0 + 1e-6
    # additivity
    parts = sum(path_latency(path[i:i + 2], place, params) for i in range(len(path) - 1))
    assert base == pytest.approx(parts)


def test_same_room_hops_are_shorter():
    geom = Geometry()
    place = place_routers(geom, even_rooms(100, 10))
    params = LatencyParams()
    assert path_latency([0, 1], place, params) < path_latency([0, 99], place, params)


def test_unplaced_nodes():
    geom = Geometry()
    place = place_routers(geom, [0, 1, 2])
    with pytest.raises(UnplacedNode):
        path_latency([0, 5], place, LatencyParams())
    with pytest.raises(UnplacedNode):
        place_routers(geom, [0, 11])
    with pytest.raises(ValidationError):
        LatencyParams(propagation=-1)


def test_flow_weighted_latency_matches_path_enumeration(fabric):
    topo, geom, place = fabric
    params = LatencyParams()
    tables = DestinationTables(topo, 4, 2, 1, 1)
    pairs = np.array([(0, 150), (7, 299), (123, 4)])
    got = pair_latencies(topo, tables, pairs, place, params)
    for (s, t), value in zip(pairs.tolist(), got):
        lv, pg = tables.get(t)
        # probability of a path: uniform spray, then an even split at every parent choice
        total = 0.0
        for path, _ in enumerate_paths(topo, lv, pg, s, t):
            prob = 1.0 / topo.d
            for u in path[1:-1]:
                prob /= len(pg.parents_of(u))
            total += prob * path_latency(path, place, params)
        assert value == pytest.approx(total, rel=1e-9)


def test_single_room_bias_changes_nothing(fabric):
    topo, _, _ = fabric
    geom = Geometry(rooms=1)
    place = place_routers(geom, [0] * topo.n)
    for t in (0, 50, 200):
        a = biased_levels(topo, t, 4, 1, 3, place)
        b = compute_levels(topo, t, 4, 1, 3)
        assert np.array_equal(a.level_of, b.level_of)


def test_bias_shortens_waypoint_routes(fabric):
    topo, geom, place = fabric
    room = place.room

    def route(lv, t):
        # shortest room-level route from each first-level waypoint through a neighbour of t
        wp0 = set(lv.waypoint_levels[0].tolist())
        out = []
        for w in lv.waypoint_levels[1].tolist():
            vs = [v for v in topo.neighbors(w).tolist() if v in wp0]
            out.append(min(geom.room_dist(room[w], room[v]) + geom.room_dist(room[v], room[t]) for v in vs))
        return np.mean(out)

    near = [route(biased_levels(topo, t, 4, 1, 1, place), t) for t in range(0, 300, 15)]
    plain = [route(compute_levels(topo, t, 4, 1, 1), t) for t in range(0, 300, 15)]
    assert np.mean(near) < 0.9 * np.mean(plain)


def test_bias_keeps_path_diversity(default_topo):
    geom = Geometry()
    place = place_routers(geom, even_rooms(default_topo.n, geom.rooms))
    biased = SpraypointPaths(default_topo, 4, 2, 1, score_factory=lambda t: (
        lambda o, c: geom.room_dist(place.room[c], place.room[o]) + geom.room_dist(place.room[o], place.room[t])))
    plain = SpraypointPaths(default_topo, 4, 2, 1)
    pairs = sample_pairs(default_topo.n, 30, seed=2)
    a = np.median([pair_edge_disjoint(default_topo, biased, s, t) for s, t in pairs])
    b = np.median([pair_edge_disjoint(default_topo, plain, s, t) for s, t in pairs])
    assert abs(a - b) / b <= 0.05


def test_distribution_is_seeded(fabric):
    topo, geom, _ = fabric
    a = latency_distribution(topo, geom, LatencyParams(), 200, seed=1)
    b = latency_distribution(topo, geom, LatencyParams(), 200, seed=1)
    assert np.array_equal(a.samples, b.samples)
    assert a.p10 <= a.p50 <= a.p90
    with pytest.raises(ValidationError):
        latency_distribution(topo, geom, LatencyParams(), 0, seed=1)


def test_biased_cabling_halves_trunks():
    geom = Geometry()
    full = layout_plan(geom, 80, 16, alpha=1.0)
    half = layout_plan(geom, 80, 16, alpha=0.5)
    assert 2 * half.trunk_count() == full.trunk_count()


def test_fat_tree_hops():
    geom = Geometry()
    hops = fat_tree_hop_counts(4000, geom)
    off = hops[~np.eye(4000, dtype=bool)]
    assert np.mean(off == 6) > 0.85
    assert set(np.unique(off).tolist()) == {2, 4, 6}
    # same pod beats different pods
    assert hops[0, 100] < hops[0, 3999]
    with pytest.raises(LayoutInfeasible):
        fat_tree_latency_baseline(5, geom, LatencyParams())


def test_fat_tree_baseline_orders_percentiles():
    table = fat_tree_latency_baseline(1000, Geometry(), LatencyParams(), sample_pairs=2000)
    assert table.p10 <= table.p50 <= table.p90
    assert table.row()["label"] == "fat-tree"
