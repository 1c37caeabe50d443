"""Per-destination Spraypoint structure: waypoint levels, pointing graph, paths.

Node classes relative to a destination ``t``:

* ``WP0``: neighbours of ``t``;
* ``WP1..WPl``: ``p`` hash-selected fresh neighbours of every node of the
  previous level;
* ``IR``: non-waypoint neighbours of the last waypoint level;
* ``OR``: everything else.

A packet is first sprayed to any neighbour of the source, then follows one of
up to ``h`` parents per node until it reaches ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._accel import njit
from .errors import CycleDetected, UnreachableNode, ValidationError
from .graph_core import Topology
from .randomness import keyed_hash, make_rng

DEST = -1
UNSET = -2

# Context tags mixed into the hash so level and parent selections never share ranks.
_LEVEL_CTX = 0x5750
_PARENT_CTX = 0x5041

ScoreFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def default_level_count(n: int, d: int, p: int) -> int:
    """``max(1, ceil(log_p(n / (2 d^2))))``."""
    if p < 2 or d < 2 or n <= d:
        raise ValidationError("need p >= 2, d >= 2 and n > d")
    ratio = n / (2.0 * d * d)
    if ratio <= 1.0:
        return 1
    val = math.log(ratio) / math.log(p)
    # guard against 2.0000000001 style rounding on exact powers
    r = round(val)
    if abs(val - r) < 1e-12:
        val = r
    return max(1, math.ceil(val))


@dataclass(frozen=True, eq=False)
class LevelAssignment:
    t: int
    p: int
    ell: int
    key: int
    level_of: np.ndarray  # -1 for t, 0..ell for waypoint levels, ell+1 IR, ell+2 OR
    short_selectors: tuple = field(default=(), repr=False)

    @property
    def n(self) -> int:
        return len(self.level_of)

    @property
    def ir_code(self) -> int:
        return self.ell + 1

    @property
    def or_code(self) -> int:
        return self.ell + 2

    @property
    def waypoint_levels(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.level_of == lv) for lv in range(self.ell + 1)]

    @property
    def inner_ring(self) -> np.ndarray:
        return np.flatnonzero(self.level_of == self.ir_code)

    @property
    def outer_ring(self) -> np.ndarray:
        return np.flatnonzero(self.level_of == self.or_code)

    def tag(self, u: int) -> str:
        code = int(self.level_of[u])
        if code == DEST:
            return "T"
        if code <= self.ell:
            return f"WP{code}"
        return "IR" if code == self.ir_code else "OR"

    def dump(self) -> str:
        """One ``node level_tag index`` line per node; index is the rank within its set."""
        lines = []
        counters: dict[str, int] = {}
        for u in range(self.n):
            tag = self.tag(u)
            idx = counters.get(tag, 0)
            counters[tag] = idx + 1
            lines.append(f"{u} {tag} {idx}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class PointingGraph:
    t: int
    h: int
    parents: np.ndarray  # (n, h) parent ids padded with -1
    hops: np.ndarray  # longest parent-chain length to t, -1 for t itself

    def parents_of(self, u: int) -> list[int]:
        row = self.parents[u]
        return row[row >= 0].tolist()

    def as_mapping(self) -> dict[int, list[int]]:
        return {u: self.parents_of(u) for u in range(len(self.parents)) if u != self.t}

    def dump(self) -> str:
        return "".join(f"{u} {' '.join(map(str, self.parents_of(u)))}\n"
                       for u in range(len(self.parents)) if u != self.t)


def _lowest_k_per_group(group: np.ndarray, primary: np.ndarray | None, hashes: np.ndarray,
                        k: int) -> np.ndarray:
    """Boolean mask keeping the ``k`` best entries of each group.

    Entries are ordered by ``(primary, hash)``; ``group`` need not be sorted.
    """
    if len(group) == 0:
        return np.zeros(0, dtype=bool)
    keys = (hashes, group) if primary is None else (hashes, primary, group)
    order = np.lexsort(keys)
    g_sorted = group[order]
    starts = np.r_[0, np.flatnonzero(g_sorted[1:] != g_sorted[:-1]) + 1]
    run_start = np.repeat(starts, np.diff(np.r_[starts, len(g_sorted)]))
    rank = np.arange(len(g_sorted)) - run_start
    keep = np.zeros(len(group), dtype=bool)
    keep[order[rank < k]] = True
    return keep


def _gather_neighbors(topo: Topology, nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    indptr, indices = topo.indptr, topo.indices
    counts = indptr[nodes + 1] - indptr[nodes]
    owner = np.repeat(nodes, counts)
    starts = np.repeat(indptr[nodes], counts)
    offs = np.arange(len(owner)) - np.repeat(np.cumsum(counts) - counts, counts)
    return owner, indices[starts + offs]


def compute_levels(topo: Topology, t: int, p: int, ell: int, key: int,
                   score: ScoreFn | None = None) -> LevelAssignment:
    """Partition ``V - {t}`` into waypoint levels, inner ring and outer ring.

    Each node of ``WP_{l-1}`` picks the ``p`` lowest-ranked fresh neighbours;
    rank is a keyed hash of ``(key, t, level, selector, candidate)``, optionally
    preceded by ``score(selector, candidate)`` for distance-biased variants.
    """
    if p < 2 or ell < 1:
        raise ValidationError("need p >= 2 and ell >= 1")
    n = topo.n
    t = int(t)
    level = np.full(n, UNSET, dtype=np.int64)
    level[t] = DEST
    frontier = topo.neighbors(t)
    level[frontier] = 0
    short = []
    for lv in range(1, ell + 1):
        owner, cand = _gather_neighbors(topo, frontier)
        ok = level[cand] == UNSET
        owner, cand = owner[ok], cand[ok]
        hashes = keyed_hash(key, _LEVEL_CTX, t, lv, owner, cand)
        primary = None if score is None else np.asarray(score(owner, cand), dtype=np.float64)
        keep = _lowest_k_per_group(owner, primary, hashes, p)
        picked_by = np.bincount(owner[keep], minlength=n)[frontier]
        short.extend(frontier[picked_by < p].tolist())
        chosen = np.unique(cand[keep])
        level[chosen] = lv
        frontier = chosen
        if len(frontier) == 0:
            break
    last = np.flatnonzero(level == ell)
    if len(last):
        _, nb = _gather_neighbors(topo, last)
        nb = nb[level[nb] == UNSET]
        level[nb] = ell + 1
    level[level == UNSET] = ell + 2
    return LevelAssignment(t=t, p=int(p), ell=int(ell), key=int(key), level_of=level,
                           short_selectors=tuple(short))


def _bfs_distance(topo: Topology, sources: np.ndarray) -> np.ndarray:
    dist = np.full(topo.n, -1, dtype=np.int64)
    dist[sources] = 0
    frontier = np.asarray(sources, dtype=np.int64)
    step = 0
    while len(frontier):
        step += 1
        _, nb = _gather_neighbors(topo, frontier)
        nb = np.unique(nb[dist[nb] < 0])
        dist[nb] = step
        frontier = nb
    return dist


@njit
def _chain_hops(parents, t):
    """Longest parent-chain length to ``t`` per node; -1 unreachable, -2 on a cycle."""
    n, h = parents.shape
    hops = np.full(n, -3, dtype=np.int64)  # -3 unvisited, -4 on stack
    hops[t] = 0
    stack = np.empty(n + 1, dtype=np.int64)
    for root in range(n):
        if hops[root] != -3:
            continue
        top = 0
        stack[0] = root
        hops[root] = -4
        while top >= 0:
            u = stack[top]
            pushed = False
            best = -1
            dead = False
            for k in range(h):
                q = parents[u, k]
                if q < 0:
                    continue
                hq = hops[q]
                if hq == -4:
                    return hops, q
                if hq == -3:
                    top += 1
                    stack[top] = q
                    hops[q] = -4
                    pushed = True
                    break
                if hq == -1:
                    dead = True
                elif hq + 1 > best:
                    best = hq + 1
            if pushed:
                continue
            if dead or best < 0:
                hops[u] = -1
            else:
                hops[u] = best
            top -= 1
    hops[t] = -1
    return hops, -1


def build_pointing_graph(topo: Topology, levels: LevelAssignment, h: int, key: int,
                         ir_parent_rule: str = "last_level") -> PointingGraph:
    """Choose up to ``h`` parents per node.

    ``ir_parent_rule`` selects where inner-ring nodes point: ``"last_level"``
    (the deepest waypoint level) or ``"any_waypoint"`` (any waypoint outside
    ``WP0``). The two agree when there is a single level.
    """
    if h < 1:
        raise ValidationError("h must be >= 1")
    if ir_parent_rule not in ("last_level", "any_waypoint"):
        raise ValidationError(f"unknown ir_parent_rule {ir_parent_rule!r}")
    n, t, ell = topo.n, levels.t, levels.ell
    lev = levels.level_of
    indptr, indices = topo.indptr, topo.indices
    owner = np.repeat(np.arange(n), np.diff(indptr))
    cand = indices
    lo, lc = lev[owner], lev[cand]

    ir_code, or_code = ell + 1, ell + 2
    dist = _bfs_distance(topo, np.flatnonzero(lev == ir_code))
    elig = (lo >= 0) & (lo <= ell) & (lc == lo - 1)  # WP0 -> t and WP_l -> WP_{l-1}
    if ir_parent_rule == "last_level":
        elig |= (lo == ir_code) & (lc == ell)
    else:
        elig |= (lo == ir_code) & (lc >= 1) & (lc <= ell)
    du, dc = dist[owner], dist[cand]
    elig |= (lo == or_code) & (du > 0) & (dc >= 0) & (dc == du - 1)

    owner_e, cand_e = owner[elig], cand[elig]
    hashes = keyed_hash(key, _PARENT_CTX, t, owner_e, cand_e)
    keep = _lowest_k_per_group(owner_e, None, hashes, h)
    owner_k, cand_k = owner_e[keep], cand_e[keep]
    order = np.lexsort((hashes[keep], owner_k))
    owner_k, cand_k = owner_k[order], cand_k[order]
    parents = np.full((n, h), -1, dtype=np.int64)
    starts = np.searchsorted(owner_k, np.arange(n))
    slot = np.arange(len(owner_k)) - starts[owner_k]
    parents[owner_k, slot] = cand_k

    hops, cyc = _chain_hops(parents, t)
    if cyc >= 0:
        raise CycleDetected(f"parent cycle through node {int(cyc)} for destination {t}")
    bad = np.flatnonzero((hops < 0) & (np.arange(n) != t))
    if len(bad):
        raise UnreachableNode(bad.tolist())
    return PointingGraph(t=t, h=int(h), parents=parents, hops=hops)


def spray_set(topo: Topology, s: int) -> np.ndarray:
    """Every distinct neighbour of ``s``; independent of the destination."""
    return topo.neighbors(s).copy()


def _walk_all(parents: np.ndarray, start: int, t: int) -> list[list[int]]:
    out = []
    stack = [(start, [start])]
    while stack:
        u, path = stack.pop()
        if u == t:
            out.append(path)
            continue
        row = parents[u]
        for q in row[::-1]:
            if q >= 0:
                stack.append((int(q), path + [int(q)]))
    return out


def enumerate_paths(topo: Topology, levels: LevelAssignment, pointing: PointingGraph,
                    s: int, t: int) -> list[tuple[list[int], int]]:
    """All Spraypoint paths from ``s``: one family per spray neighbour."""
    if s == t:
        raise ValidationError("source equals destination")
    if pointing.t != t or levels.t != t:
        raise ValidationError("levels/pointing built for another destination")
    out = []
    for v in spray_set(topo, s).tolist():
        if v == t:
            out.append(([s, t], v))
            continue
        if pointing.hops[v] < 0:
            raise UnreachableNode([v])
        for tail in _walk_all(pointing.parents, v, t):
            out.append(([s] + tail, v))
    return out


@dataclass
class DestinationTables:
    """Levels and pointing graphs for a set of destinations of one topology."""

    topo: Topology
    p: int
    h: int
    ell: int
    key: int
    levels: dict = field(default_factory=dict)
    pointing: dict = field(default_factory=dict)
    ir_parent_rule: str = "last_level"
    score_factory: Callable[[int], ScoreFn] | None = None

    def get(self, t: int) -> tuple[LevelAssignment, PointingGraph]:
        t = int(t)
        if t not in self.pointing:
            score = None if self.score_factory is None else self.score_factory(t)
            lv = compute_levels(self.topo, t, self.p, self.ell, self.key, score=score)
            self.levels[t] = lv
            self.pointing[t] = build_pointing_graph(self.topo, lv, self.h, self.key,
                                                    ir_parent_rule=self.ir_parent_rule)
        return self.levels[t], self.pointing[t]

    def parents(self, t: int) -> np.ndarray:
        return self.get(t)[1].parents


def path_length_distribution(topo: Topology, p: int, h: int, ell: int | None, key: int,
                             sample_pairs: int, seed: int,
                             tables: DestinationTables | None = None) -> dict[int, float]:
    """Empirical path-length histogram over random (source, spray, destination) triples.

    After the spray hop each node forwards to one of its parents uniformly at
    random, as ECMP would.
    """
    if sample_pairs < 1:
        raise ValidationError("sample_pairs must be >= 1")
    if ell is None:
        ell = default_level_count(topo.n, topo.d, p)
    tables = tables or DestinationTables(topo, p, h, ell, key)
    rng = make_rng(seed, "path-lengths")
    n = topo.n
    t_all = rng.integers(0, n, size=sample_pairs)
    s_all = (t_all + rng.integers(1, n, size=sample_pairs)) % n
    u_all = rng.random(sample_pairs)
    counts = np.zeros(2 * ell + 2 * topo.n + 8, dtype=np.int64)
    order = np.argsort(t_all, kind="stable")
    for t in np.unique(t_all):
        idx = order[np.searchsorted(t_all[order], t):np.searchsorted(t_all[order], t, side="right")]
        parents = tables.parents(int(t))
        for i in idx:
            nb = topo.neighbors(int(s_all[i]))
            v = int(nb[int(u_all[i] * len(nb))])
            length = 1
            while v != t:
                row = parents[v]
                row = row[row >= 0]
                v = int(row[rng.integers(len(row))])
                length += 1
            counts[length] += 1
    total = counts.sum()
    top = max(ell + 4, int(np.flatnonzero(counts)[-1]))
    return {i: counts[i] / total for i in range(1, top + 1)}


def sample_path_length_counts(topo: Topology, tables: DestinationTables, pairs: Sequence[tuple[int, int]],
                              ) -> dict[int, int]:
    """Exact path-length counts over every path of the given pairs (for audits)."""
    counts: dict[int, int] = {}
    for s, t in pairs:
        lv, pg = tables.get(t)
        for path, _ in enumerate_paths(topo, lv, pg, s, t):
            counts[len(path) - 1] = counts.get(len(path) - 1, 0) + 1
    return counts
