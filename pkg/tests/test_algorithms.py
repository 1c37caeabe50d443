import networkx as nx
import numpy as np
from hypothesis import given, settings, strategies as st

from expanderlab.algorithms import max_bipartite_matching, max_flow, yen_k_shortest
from expanderlab.graph_core import build_configuration_graph

arc_lists = st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)).filter(lambda a: a[0] != a[1]),
                     max_size=30)


def nx_flow(n, arcs, s, t):
    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    for u, v in arcs:
        if g.has_edge(u, v):
            g[u][v]["capacity"] += 1
        else:
            g.add_edge(u, v, capacity=1)
    return nx.maximum_flow_value(g, s, t)


@settings(max_examples=200, deadline=None)
@given(arcs=arc_lists)
def test_max_flow_agrees_with_networkx(arcs):
    assert max_flow(8, arcs, 0, 7) == nx_flow(8, arcs, 0, 7)


def test_parallel_arcs_add_capacity():
    assert max_flow(2, [(0, 1)] * 3, 0, 1) == 3
    assert max_flow(3, [(0, 1), (1, 2)], 0, 2, caps=[5, 2]) == 2


@settings(max_examples=150, deadline=None)
@given(left=st.integers(1, 12), right=st.integers(1, 12), data=st.data())
def test_matching_agrees_with_networkx(left, right, data):
    adj = [sorted(set(data.draw(st.lists(st.integers(0, right - 1), max_size=4)))) for _ in range(left)]
    size, match = max_bipartite_matching(left, right, adj)
    g = nx.Graph()
    g.add_nodes_from(("L", u) for u in range(left))
    g.add_nodes_from(("R", v) for v in range(right))
    g.add_edges_from((("L", u), ("R", v)) for u in range(left) for v in adj[u])
    ref = nx.bipartite.maximum_matching(g, top_nodes=[("L", u) for u in range(left)])
    assert size == len(ref) // 2
    used = match[match >= 0]
    assert len(used) == size and len(set(used.tolist())) == size
    assert all(match[u] in adj[u] for u in range(left) if match[u] >= 0)


def test_yen_two_parallel_routes():
    nbrs = [[1, 2], [0, 3], [0, 3], [1, 2]]
    assert yen_k_shortest(nbrs, 0, 3, 2) == [[0, 1, 3], [0, 2, 3]]
    assert yen_k_shortest(nbrs, 0, 3, 5) == [[0, 1, 3], [0, 2, 3]]


def test_yen_lengths_match_networkx():
    g = build_configuration_graph(60, 4, seed=3)
    nbrs = [sorted(set(g.neighbors(u).tolist())) for u in range(g.n)]
    ref = nx.Graph()
    ref.add_edges_from(g.edges.tolist())
    for s, t in [(0, 17), (5, 44), (12, 59)]:
        ours = yen_k_shortest(nbrs, s, t, 10)
        theirs = [p for _, p in zip(range(10), nx.shortest_simple_paths(ref, s, t))]
        assert [len(p) for p in ours] == [len(p) for p in theirs]
        assert len({tuple(p) for p in ours}) == len(ours)
        assert all(len(set(p)) == len(p) for p in ours)
        lengths = [len(p) for p in ours]
        assert lengths == sorted(lengths)
