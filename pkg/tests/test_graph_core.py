import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expanderlab.errors import Disconnected, OddStubCount, DegreeInfeasible, ValidationError
from expanderlab.graph_core import (Topology, build_configuration_graph, load_topology, save_topology,
                                    spectral_gap)


def test_two_regular_graph_is_union_of_cycles():
    g = build_configuration_graph(4, 2, seed=3)
    assert np.all(g.degrees == 2)
    assert g.self_loop_count() == 0 and g.multi_edge_count() == 0
    # a simple 2-regular graph on 4 nodes is the 4-cycle
    assert g.num_edges == 4


def test_default_size_is_regular(default_topo):
    hist = np.bincount(default_topo.degrees)
    assert hist[64] == 1000 and hist.sum() == 1000
    assert default_topo.self_loop_count() == 0
    assert default_topo.multi_edge_count() == 0


def test_multigraph_self_loops_match_configuration_expectation():
    # configuration model: each of the n*d/2 pairings is a loop with prob (d-1)/(n*d-1)
    n, d = 1000, 64
    expected = n * d / 2 * (d - 1) / (n * d - 1)
    loops = [build_configuration_graph(n, d, seed=s, simple=False).self_loop_count() for s in range(100)]
    assert abs(np.mean(loops) - expected) < 3
    assert abs(expected - 31.5) < 0.1


def test_invalid_sizes():
    with pytest.raises(OddStubCount):
        build_configuration_graph(5, 3, seed=0)
    with pytest.raises(DegreeInfeasible):
        build_configuration_graph(4, 4, seed=0)
    with pytest.raises(ValidationError):
        build_configuration_graph(0, 2, seed=0)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(6, 80), d=st.integers(2, 8), seed=st.integers(0, 2**63 - 1))
def test_build_is_deterministic_and_conserves_endpoints(n, d, seed):
    if n * d % 2 or d >= n:
        return
    a = build_configuration_graph(n, d, seed=seed, simple=False)
    b = build_configuration_graph(n, d, seed=seed, simple=False)
    assert a.edge_multiset() == b.edge_multiset()
    assert a.degrees.sum() == n * d == 2 * a.num_edges
    # adjacency symmetry
    adj = a.adjacency_matrix
    assert (adj != adj.T).nnz == 0


def test_complete_graph_gap():
    edges = [(u, v) for u in range(4) for v in range(u + 1, 4)]
    assert spectral_gap(Topology(4, 3, np.array(edges))) == pytest.approx(1 / 3, abs=1e-5)


def test_bipartite_cycle_gap():
    g = Topology(4, 2, np.array([(0, 1), (1, 2), (2, 3), (3, 0)]))
    assert spectral_gap(g) == pytest.approx(1.0, abs=1e-5)


def test_disconnected_graph_is_reported():
    g = Topology(6, 2, np.array([(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]))
    with pytest.raises(Disconnected):
        spectral_gap(g)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_power_iteration_matches_dense_solver(seed):
    g = build_configuration_graph(200, 16, seed=seed)
    a = g.adjacency_matrix.toarray() / 16
    ev = np.sort(np.abs(np.linalg.eigvalsh(a)))
    assert spectral_gap(g, tolerance=1e-9) == pytest.approx(ev[-2], rel=1e-4)


def test_default_gap_near_ramanujan(default_topo):
    bound = 2 * math.sqrt(63) / 64
    assert abs(spectral_gap(default_topo) - bound) < 0.02


@pytest.mark.parametrize("n", [500, 1000])
def test_in_regime_graphs_expand(n):
    d = math.ceil(2 * (math.log(n) + 5))
    d += d % 2
    assert spectral_gap(build_configuration_graph(n, d, seed=11)) < 0.5


def test_roundtrip(tmp_path, small_topo):
    path = tmp_path / "g.txt"
    save_topology(small_topo, path)
    back = load_topology(path)
    assert back.edge_multiset() == small_topo.edge_multiset()
    assert (back.n, back.d, back.seed) == (small_topo.n, small_topo.d, small_topo.seed)


def test_loader_rejects_broken_degree(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("4 2 0 1\n0 1\n1 2\n2 3\n")
    with pytest.raises(ValidationError):
        load_topology(path)
