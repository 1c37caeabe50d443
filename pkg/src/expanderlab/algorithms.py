"""Classical graph kernels: Dinic max-flow, Hopcroft-Karp matching, Yen k-shortest paths."""
from __future__ import annotations

import heapq
from collections import deque

import numpy as np

from ._accel import njit


# ---------------------------------------------------------------- max-flow

@njit
def _dinic_kernel(n, tails, heads, caps, s, t):
    m = len(tails)
    # residual arcs: 2k forward, 2k+1 backward
    to = np.empty(2 * m, dtype=np.int64)
    cap = np.empty(2 * m, dtype=np.int64)
    deg = np.zeros(n + 1, dtype=np.int64)
    for k in range(m):
        to[2 * k] = heads[k]
        to[2 * k + 1] = tails[k]
        cap[2 * k] = caps[k]
        cap[2 * k + 1] = 0
        deg[tails[k] + 1] += 1
        deg[heads[k] + 1] += 1
    for u in range(n):
        deg[u + 1] += deg[u]
    adj = np.empty(2 * m, dtype=np.int64)
    fill = deg[:-1].copy()
    for k in range(m):
        adj[fill[tails[k]]] = 2 * k
        fill[tails[k]] += 1
        adj[fill[heads[k]]] = 2 * k + 1
        fill[heads[k]] += 1
    level = np.empty(n, dtype=np.int64)
    it = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)
    via = np.empty(n + 1, dtype=np.int64)
    flow = 0
    while True:
        level[:] = -1
        level[s] = 0
        qh = 0
        qt = 1
        queue[0] = s
        while qh < qt:
            u = queue[qh]
            qh += 1
            for j in range(deg[u], deg[u + 1]):
                a = adj[j]
                if cap[a] > 0 and level[to[a]] < 0:
                    level[to[a]] = level[u] + 1
                    queue[qt] = to[a]
                    qt += 1
        if level[t] < 0:
            break
        for u in range(n):
            it[u] = deg[u]
        # iterative blocking-flow DFS
        while True:
            top = 0
            stack[0] = s
            found = False
            while top >= 0:
                u = stack[top]
                if u == t:
                    found = True
                    break
                advanced = False
                while it[u] < deg[u + 1]:
                    a = adj[it[u]]
                    v = to[a]
                    if cap[a] > 0 and level[v] == level[u] + 1:
                        via[top] = a
                        top += 1
                        stack[top] = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    level[u] = -1
                    top -= 1
                    if top >= 0:
                        it[stack[top]] += 1
            if not found:
                break
            push = cap[via[0]]
            for i in range(top):
                if cap[via[i]] < push:
                    push = cap[via[i]]
            for i in range(top):
                cap[via[i]] -= push
                cap[via[i] ^ 1] += push
            flow += push
    return flow


def max_flow(n: int, arcs, s: int, t: int, caps=None) -> int:
    """Integer max-flow value from ``s`` to ``t`` (Dinic's blocking flows).

    ``arcs`` is a sequence/array of directed ``(tail, head)`` pairs; capacities
    default to 1 per arc, parallel arcs add up.
    """
    arcs = np.asarray(arcs, dtype=np.int64).reshape(-1, 2)
    if caps is None:
        caps = np.ones(len(arcs), dtype=np.int64)
    caps = np.asarray(caps, dtype=np.int64)
    if s == t:
        raise ValueError("source equals sink")
    if len(arcs) == 0:
        return 0
    return int(_dinic_kernel(int(n), arcs[:, 0].copy(), arcs[:, 1].copy(), caps.copy(), int(s), int(t)))


# ------------------------------------------------------- bipartite matching

@njit
def _hopcroft_karp_kernel(n_left, n_right, indptr, indices):
    INF = 1 << 60
    match_l = np.full(n_left, -1, dtype=np.int64)
    match_r = np.full(n_right, -1, dtype=np.int64)
    dist = np.empty(n_left, dtype=np.int64)
    queue = np.empty(n_left, dtype=np.int64)
    it = np.empty(n_left, dtype=np.int64)
    stack = np.empty(n_left + 1, dtype=np.int64)
    size = 0
    while True:
        qh = 0
        qt = 0
        for u in range(n_left):
            if match_l[u] < 0:
                dist[u] = 0
                queue[qt] = u
                qt += 1
            else:
                dist[u] = INF
        limit = INF
        while qh < qt:
            u = queue[qh]
            qh += 1
            if dist[u] >= limit:
                continue
            for j in range(indptr[u], indptr[u + 1]):
                w = match_r[indices[j]]
                if w < 0:
                    if limit == INF:
                        limit = dist[u] + 1
                elif dist[w] == INF:
                    dist[w] = dist[u] + 1
                    queue[qt] = w
                    qt += 1
        if limit == INF:
            break
        for u in range(n_left):
            it[u] = indptr[u]
        for root in range(n_left):
            if match_l[root] >= 0:
                continue
            top = 0
            stack[0] = root
            done = False
            while top >= 0 and not done:
                u = stack[top]
                advanced = False
                while it[u] < indptr[u + 1]:
                    v = indices[it[u]]
                    w = match_r[v]
                    if w < 0:
                        if dist[u] + 1 == limit:
                            # augment along the stack
                            for k in range(top, -1, -1):
                                uu = stack[k]
                                vv = indices[it[uu]]
                                match_l[uu] = vv
                                match_r[vv] = uu
                            size += 1
                            done = True
                            break
                    elif dist[w] == dist[u] + 1:
                        top += 1
                        stack[top] = w
                        advanced = True
                        break
                    it[u] += 1
                if done:
                    break
                if not advanced:
                    dist[u] = INF
                    top -= 1
                    if top >= 0:
                        it[stack[top]] += 1
    return size, match_l


def max_bipartite_matching(n_left: int, n_right: int, adjacency) -> tuple[int, np.ndarray]:
    """Hopcroft-Karp on a bipartite graph given as per-left-node neighbour lists.

    Returns ``(size, match_left)``; ``match_left[u]`` is the matched right node or -1.
    """
    if isinstance(adjacency, tuple):
        indptr, indices = (np.asarray(a, dtype=np.int64) for a in adjacency)
    else:
        lengths = [len(a) for a in adjacency]
        indptr = np.zeros(n_left + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        indices = (np.concatenate([np.asarray(a, dtype=np.int64) for a in adjacency])
                   if indptr[-1] else np.zeros(0, dtype=np.int64))
    if n_left == 0 or n_right == 0:
        return 0, np.full(n_left, -1, dtype=np.int64)
    size, match_l = _hopcroft_karp_kernel(int(n_left), int(n_right), indptr, indices)
    return int(size), match_l


# ------------------------------------------------------ k-shortest paths

class _Graph:
    """Adjacency helper for unit-weight shortest paths with node/arc bans."""

    def __init__(self, nbrs: list[list[int]]):
        self.nbrs = nbrs

    def shortest(self, s: int, t: int, banned_nodes: set, banned_arcs: set):
        """Lexicographically smallest among the shortest ``s -> t`` paths, or None."""
        # distances to t (undirected graph, so search outward from t)
        dist = {t: 0}
        q = deque([t])
        while q and s not in dist:
            u = q.popleft()
            for v in self.nbrs[u]:
                if v in dist or v in banned_nodes or (v, u) in banned_arcs:
                    continue
                dist[v] = dist[u] + 1
                q.append(v)
        if s not in dist:
            return None
        path = [s]
        u = s
        while u != t:
            for v in self.nbrs[u]:  # sorted, so the first fit is the smallest id
                if dist.get(v, -1) == dist[u] - 1 and v not in banned_nodes and (u, v) not in banned_arcs:
                    u = v
                    break
            path.append(u)
        return path


def yen_k_shortest(nbrs: list[list[int]], s: int, t: int, k: int) -> list[list[int]]:
    """Up to ``k`` loopless ``s -> t`` paths in non-decreasing hop count.

    Ties are broken lexicographically by node-id sequence, so results are
    deterministic. ``nbrs[u]`` must be sorted.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    g = _Graph(nbrs)
    first = g.shortest(s, t, set(), set())
    if first is None:
        return []
    found = [first]
    heap: list[tuple[int, list[int]]] = []
    seen = {tuple(first)}
    while len(found) < k:
        prev = found[-1]
        for i in range(len(prev) - 1):
            spur = prev[i]
            root = prev[:i + 1]
            banned_arcs = {(p[i], p[i + 1]) for p in found if p[:i + 1] == root}
            banned_nodes = set(root[:-1])
            tail = g.shortest(spur, t, banned_nodes, banned_arcs)
            if tail is None:
                continue
            cand = root[:-1] + tail
            key = tuple(cand)
            if key not in seen:
                seen.add(key)
                heapq.heappush(heap, (len(cand), cand))
        if not heap:
            break
        found.append(heapq.heappop(heap)[1])
    return found
