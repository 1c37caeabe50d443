"""Throughput analysis: Spraypoint graphs, edge-disjoint paths, traffic, oversubscription."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from ._accel import njit
from .algorithms import max_bipartite_matching, max_flow, yen_k_shortest
from .concurrent_flow import PathSystem, solve_min_congestion
from .errors import NoPath, PremiseViolated, ValidationError
from .graph_core import Topology
from .models import oversub_length_lower_bound
from .randomness import child_seed, make_rng
from .spraypoint import DestinationTables, LevelAssignment, PointingGraph, default_level_count


# ------------------------------------------------------------ path kernels

@njit
def _arc_lookup(indptr, indices, u, v):
    lo = indptr[u]
    hi = indptr[u + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        if indices[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    if lo < indptr[u + 1] and indices[lo] == v:
        return lo
    return -1


@njit
def _spray_paths(indptr, indices, parents, s, t, fill, hops_out, arcs_out):
    """Enumerate Spraypoint paths ``s -> t`` as arc-id sequences.

    With ``fill`` false only counts are returned; otherwise the caller-sized
    buffers are filled. Returns ``(num_paths, num_arcs)``.
    """
    n, h = parents.shape
    node_st = np.empty(n + 2, dtype=np.int64)
    slot_st = np.empty(n + 2, dtype=np.int64)
    arc_st = np.empty(n + 2, dtype=np.int64)
    npaths = 0
    narcs = 0
    for j in range(indptr[s], indptr[s + 1]):
        v = indices[j]
        arc_st[0] = j
        if v == t:
            if fill:
                hops_out[npaths] = 1
                arcs_out[narcs] = j
            npaths += 1
            narcs += 1
            continue
        depth = 0
        node_st[0] = v
        slot_st[0] = 0
        while depth >= 0:
            u = node_st[depth]
            if u == t:
                if fill:
                    hops_out[npaths] = depth + 1
                    for k in range(depth + 1):
                        arcs_out[narcs + k] = arc_st[k]
                npaths += 1
                narcs += depth + 1
                depth -= 1
                continue
            k = slot_st[depth]
            if k >= h or parents[u, k] < 0:
                depth -= 1
                continue
            slot_st[depth] = k + 1
            q = parents[u, k]
            a = _arc_lookup(indptr, indices, u, q)
            if a < 0:
                return -1, -1
            depth += 1
            node_st[depth] = q
            slot_st[depth] = 0
            arc_st[depth] = a
    return npaths, narcs


def spraypoint_path_arcs(topo: Topology, parents: np.ndarray, s: int, t: int) -> tuple[np.ndarray, np.ndarray]:
    """All Spraypoint paths ``s -> t`` as ``(hop_counts, flat_arc_ids)``."""
    indptr, indices = topo.indptr, topo.indices
    dummy = np.zeros(0, dtype=np.int64)
    npaths, narcs = _spray_paths(indptr, indices, parents, int(s), int(t), False, dummy, dummy)
    if npaths < 0:
        raise ValidationError("parent arc missing from topology")
    hops = np.empty(npaths, dtype=np.int64)
    arcs = np.empty(narcs, dtype=np.int64)
    _spray_paths(indptr, indices, parents, int(s), int(t), True, hops, arcs)
    return hops, arcs


def arc_endpoints(topo: Topology) -> np.ndarray:
    """``(num_arcs, 2)`` array of (tail, head) for the CSR arc ids."""
    tails = np.repeat(np.arange(topo.n), np.diff(topo.indptr))
    return np.column_stack([tails, topo.indices])


# ------------------------------------------------------ path providers

class SpraypointPaths:
    """Spraypoint path sets for one topology and parameter choice."""

    scheme = "spraypoint"

    def __init__(self, topo: Topology, p: int, h: int, key: int, ell: int | None = None,
                 ir_parent_rule: str = "last_level", score_factory=None):
        self.topo = topo
        self.ell = default_level_count(topo.n, topo.d, p) if ell is None else ell
        self.tables = DestinationTables(topo, p, h, self.ell, key, ir_parent_rule=ir_parent_rule,
                                        score_factory=score_factory)

    def arcs(self, s: int, t: int) -> tuple[np.ndarray, np.ndarray]:
        return spraypoint_path_arcs(self.topo, self.tables.parents(t), s, t)

    def paths(self, s: int, t: int) -> list[list[int]]:
        hops, arcs = self.arcs(s, t)
        return _arcs_to_node_paths(self.topo, hops, arcs)


class KShortestPaths:
    """Yen's k shortest loopless paths, deterministic tie-breaking."""

    scheme = "ksp"

    def __init__(self, topo: Topology, k: int):
        self.topo = topo
        self.k = int(k)
        self._nbrs = [topo.neighbors(u).tolist() for u in range(topo.n)]

    def paths(self, s: int, t: int) -> list[list[int]]:
        return yen_k_shortest(self._nbrs, int(s), int(t), self.k)

    def arcs(self, s: int, t: int) -> tuple[np.ndarray, np.ndarray]:
        return _node_paths_to_arcs(self.topo, self.paths(s, t))


def _node_paths_to_arcs(topo: Topology, paths: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    hops = np.array([len(p) - 1 for p in paths], dtype=np.int64)
    flat = []
    for p in paths:
        for u, v in zip(p[:-1], p[1:]):
            a = topo.arc_id(u, v)
            if a < 0:
                raise ValidationError(f"path uses missing edge {u}-{v}")
            flat.append(a)
    return hops, np.asarray(flat, dtype=np.int64)


def _arcs_to_node_paths(topo: Topology, hops: np.ndarray, arcs: np.ndarray) -> list[list[int]]:
    ends = arc_endpoints(topo)
    out = []
    pos = 0
    for k in hops.tolist():
        seg = arcs[pos:pos + k]
        out.append([int(ends[seg[0], 0])] + ends[seg, 1].tolist())
        pos += k
    return out


class ExplicitPaths:
    """Caller-supplied node paths per pair, e.g. for hand-built test cases."""

    scheme = "explicit"

    def __init__(self, topo: Topology, table: dict):
        self.topo = topo
        self.table = table

    def paths(self, s: int, t: int):
        return [list(p) for p in self.table.get((s, t), [])]

    def arcs(self, s: int, t: int):
        return _node_paths_to_arcs(self.topo, self.paths(s, t))


# ------------------------------------------------------- Spraypoint graph

def build_spraypoint_graph(topo: Topology, levels: LevelAssignment, pointing: PointingGraph,
                           s: int, t: int) -> np.ndarray:
    """Directed unit-capacity arcs: ``s`` to each neighbour plus every parent arc reachable from them."""
    if s == t:
        raise ValidationError("source equals destination")
    arcs = set()
    seen = set()
    stack = []
    for v in topo.neighbors(s).tolist():
        arcs.add((int(s), v))
        if v != t and v not in seen:
            seen.add(v)
            stack.append(v)
    while stack:
        u = stack.pop()
        for q in pointing.parents_of(u):
            arcs.add((u, q))
            if q != t and q not in seen:
                seen.add(q)
                stack.append(q)
    return np.array(sorted(arcs), dtype=np.int64).reshape(-1, 2)


def edge_disjoint_count(arcs: np.ndarray, s: int, t: int, n: int | None = None) -> int:
    """Unit-capacity max-flow value, i.e. the number of edge-disjoint ``s -> t`` paths."""
    arcs = np.asarray(arcs, dtype=np.int64).reshape(-1, 2)
    if n is None:
        n = int(max(arcs.max(initial=0), s, t)) + 1
    return max_flow(n, arcs, int(s), int(t))


def pair_edge_disjoint(topo: Topology, provider, s: int, t: int) -> int:
    """Edge-disjoint path count within the union of a provider's paths for one pair."""
    hops, flat = provider.arcs(s, t)
    ends = arc_endpoints(topo)[np.unique(flat)]
    return edge_disjoint_count(ends, s, t, topo.n)


def descendant_graph(topo: Topology, levels: LevelAssignment, pointing: PointingGraph,
                     S: Iterable[int]) -> list[list[int]]:
    """For each node of ``S``, the indices (into ``WP0``) of its pointing-graph ancestors in ``WP0``."""
    wp0 = levels.waypoint_levels[0]
    pos = {int(v): i for i, v in enumerate(wp0.tolist())}
    out = []
    for x in S:
        reach = set()
        stack = [int(x)]
        seen = {int(x)}
        while stack:
            u = stack.pop()
            if u in pos:
                reach.add(pos[u])
                continue
            for q in pointing.parents_of(u):
                if q not in seen and q != levels.t:
                    seen.add(q)
                    stack.append(q)
        out.append(sorted(reach))
    return out


def matching_mincut_oracle(topo: Topology, levels: LevelAssignment, pointing: PointingGraph,
                           S: Sequence[int], t: int) -> int:
    """Largest matching between ``S`` (inner-ring nodes) and the neighbours of ``t``."""
    S = [int(x) for x in S]
    if levels.ell != 1:
        raise PremiseViolated("matching oracle requires a single waypoint level")
    lv = levels.level_of
    bad = [x for x in S if lv[x] != levels.ir_code]
    if bad:
        raise PremiseViolated(f"nodes outside the inner ring: {bad[:10]}")
    if not S:
        return 0
    adj = descendant_graph(topo, levels, pointing, S)
    size, _ = max_bipartite_matching(len(S), len(levels.waypoint_levels[0]), adj)
    return size


def synthetic_source_flow(topo: Topology, levels: LevelAssignment, pointing: PointingGraph,
                          S: Sequence[int], t: int) -> int:
    """Max-flow from an extra node wired to exactly ``S`` through the pointing graph."""
    src = topo.n
    arcs = {(src, int(x)) for x in S}
    stack = [int(x) for x in S]
    seen = set(stack)
    while stack:
        u = stack.pop()
        for q in pointing.parents_of(u):
            arcs.add((u, q))
            if q != t and q not in seen:
                seen.add(q)
                stack.append(q)
    if not arcs:
        return 0
    return max_flow(topo.n + 1, sorted(arcs), src, int(t))


# ---------------------------------------------------------------- traffic

@dataclass(frozen=True, eq=False)
class TrafficMatrix:
    """Sparse demand matrix in units of node capacity."""

    n: int
    src: np.ndarray
    dst: np.ndarray
    rate: np.ndarray
    pattern: str = "custom"

    def __post_init__(self):
        if np.any(self.src == self.dst):
            raise ValidationError("self-demands are not allowed")
        if np.any(self.rate < 0):
            raise ValidationError("negative demand")

    @property
    def demands(self) -> dict[tuple[int, int], float]:
        return {(int(a), int(b)): float(r) for a, b, r in zip(self.src, self.dst, self.rate)}

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.src, weights=self.rate, minlength=self.n)

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.dst, weights=self.rate, minlength=self.n)

    def is_substochastic(self, tol: float = 1e-9) -> bool:
        return bool(self.row_sums().max(initial=0) <= 1 + tol and self.col_sums().max(initial=0) <= 1 + tol)

    def __len__(self) -> int:
        return len(self.src)


def random_derangement(k: int, rng: np.random.Generator) -> np.ndarray:
    if k < 2:
        raise ValidationError("a derangement needs at least two elements")
    for _ in range(10000):
        perm = rng.permutation(k)
        if not np.any(perm == np.arange(k)):
            return perm
    raise RuntimeError("failed to sample a derangement")


def generate_traffic(pattern: str, f: float, n: int, seed: int) -> TrafficMatrix:
    """Demand matrices where each active node's row and column sum to one."""
    if not 0 < f <= 1:
        raise ValidationError("active fraction must lie in (0, 1]")
    rng = make_rng(seed, f"traffic-{pattern}")
    k = math.ceil(f * n - 1e-9)
    active = np.sort(rng.choice(n, size=k, replace=False))
    if pattern == "matching":
        if k < 2:
            raise ValidationError("matching needs at least two active nodes")
        perm = random_derangement(k, rng)
        return TrafficMatrix(n, active, active[perm], np.ones(k), "matching")
    if pattern == "clique":
        if k < 2:
            raise ValidationError("clique needs at least two members")
        a, b = np.meshgrid(active, active, indexing="ij")
        mask = a != b
        return TrafficMatrix(n, a[mask], b[mask], np.full(mask.sum(), 1.0 / (k - 1)), "clique")
    if pattern == "hubs":
        if k < 1 or n < 2:
            raise ValidationError("hubs pattern needs at least one hub")
        is_hub = np.zeros(n, dtype=bool)
        is_hub[active] = True
        a, b = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        mask = (a != b) & (is_hub[a] | is_hub[b])
        return TrafficMatrix(n, a[mask], b[mask], np.full(mask.sum(), 1.0 / (n - 1)), "hubs")
    raise ValidationError(f"unknown traffic pattern {pattern!r}")


def random_matching(n: int, seed: int) -> TrafficMatrix:
    """Full permutation traffic: every node sends its whole capacity to one other node."""
    return generate_traffic("matching", 1.0, n, seed)


# ------------------------------------------------------- concurrent flow

@dataclass
class ConcurrentFlowResult:
    lam: float
    r: float
    r_lower: float
    per_edge_load: np.ndarray  # feasible flow per CSR arc, capacities in arc units
    delta: dict[int, float]
    eps: float
    iterations: int
    arc_capacity: np.ndarray = field(repr=False, default=None)

    def max_utilization(self) -> float:
        return float(np.max(self.per_edge_load / self.arc_capacity, initial=0.0))

    def load_by_arc(self, topo: Topology) -> dict[tuple[int, int], float]:
        ends = arc_endpoints(topo)
        nz = np.flatnonzero(self.per_edge_load)
        return {(int(ends[a, 0]), int(ends[a, 1])): float(self.per_edge_load[a]) for a in nz}


def build_path_system(topo: Topology, provider, matrix: TrafficMatrix,
                      node_capacity: float | None = None) -> PathSystem:
    node_capacity = topo.d if node_capacity is None else node_capacity
    cp = [0]
    ap_parts = []
    arc_parts = []
    for s, t in zip(matrix.src.tolist(), matrix.dst.tolist()):
        hops, arcs = provider.arcs(s, t)
        if len(hops) == 0:
            raise NoPath(f"no path for pair ({s}, {t})")
        cp.append(cp[-1] + len(hops))
        ap_parts.append(hops)
        arc_parts.append(arcs)
    hops_all = np.concatenate(ap_parts) if ap_parts else np.zeros(0, dtype=np.int64)
    ap = np.zeros(len(hops_all) + 1, dtype=np.int64)
    np.cumsum(hops_all, out=ap[1:])
    return PathSystem(cap=topo.multiplicity.astype(np.float64),
                      dem=matrix.rate.astype(np.float64) * node_capacity,
                      cp=np.asarray(cp, dtype=np.int64), ap=ap,
                      arcs=np.concatenate(arc_parts) if arc_parts else np.zeros(0, dtype=np.int64))


def max_concurrent_flow(topo: Topology, path_provider, matrix: TrafficMatrix, eps: float = 0.05,
                        node_capacity: float | None = None, max_iter: int = 20000) -> ConcurrentFlowResult:
    """(1 - eps)-approximate concurrent flow restricted to the provider's paths.

    Demands are in units of node capacity (``topo.d`` uplinks by default) and
    each directed arc carries one unit per parallel link, so a non-blocking
    fabric reports ``r = 1``. ``r_lower`` is the certified lower bound on the
    optimum.
    """
    system = build_path_system(topo, path_provider, matrix, node_capacity)
    res = solve_min_congestion(system, eps=eps, max_iter=max_iter)
    if res.congestion <= 0:
        return ConcurrentFlowResult(np.inf, 0.0, 0.0, np.zeros_like(system.cap), {}, eps, 0, system.cap)
    hops = system.hop_counts
    by_len = np.bincount(hops, weights=res.path_flow)
    total = by_len.sum()
    delta = {int(i): float(by_len[i] / total) for i in np.flatnonzero(by_len)}
    return ConcurrentFlowResult(lam=1.0 / res.congestion, r=res.congestion, r_lower=res.lower_bound,
                                per_edge_load=res.load / res.congestion, delta=delta, eps=eps,
                                iterations=res.iterations, arc_capacity=system.cap)


@dataclass
class OversubReport:
    worst: float
    values: list[float]
    deltas: list[dict[int, float]]
    results: list[ConcurrentFlowResult] = field(repr=False, default_factory=list)

    @property
    def best(self) -> float:
        return min(self.values)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def spread(self) -> float:
        """(max - min) / mean."""
        return (max(self.values) - min(self.values)) / self.mean


def oversubscription(topo: Topology, p: int, h: int, key: int, num_matchings: int, eps: float,
                     seed: int, provider=None, keep_results: bool = False) -> OversubReport:
    """Worst concurrent-flow oversubscription over random full matchings."""
    if num_matchings < 1:
        raise ValidationError("num_matchings must be >= 1")
    provider = provider or SpraypointPaths(topo, p, h, key)
    values, deltas, results = [], [], []
    for i in range(num_matchings):
        matrix = random_matching(topo.n, child_seed(seed, "matching", i))
        res = max_concurrent_flow(topo, provider, matrix, eps=eps)
        values.append(res.r)
        deltas.append(res.delta)
        if keep_results:
            results.append(res)
    return OversubReport(worst=max(values), values=values, deltas=deltas, results=results)


def sample_pairs(n: int, count: int, seed: int) -> list[tuple[int, int]]:
    rng = make_rng(seed, "pairs")
    s = rng.integers(0, n, size=count)
    t = (s + rng.integers(1, n, size=count)) % n
    return list(zip(s.tolist(), t.tolist()))


def ksp_paths(topo: Topology, s: int, t: int, k: int) -> list[list[int]]:
    """``k`` loopless shortest paths (fewer if the graph has fewer)."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    return KShortestPaths(topo, k).paths(s, t)


@dataclass
class RoutingComparison:
    rows: list[tuple[int, int, str, int]]  # (src, dst, scheme, edp)
    oversub: dict[str, float]

    def edp(self, scheme: str) -> np.ndarray:
        return np.array([r[3] for r in self.rows if r[2] == scheme])

    def median(self, scheme: str) -> float:
        return float(np.median(self.edp(scheme)))


def compare_routing(topo: Topology, p: int, h: int, key: int, schemes: Sequence[str], sample_count: int,
                    seed: int, num_matchings: int = 0, eps: float = 0.05) -> RoutingComparison:
    """EDP per sampled pair for each scheme, plus optional oversubscription on shared matchings.

    Schemes are ``"spraypoint"`` or ``"ksp<k>"`` (e.g. ``"ksp8"``).
    """
    providers = {}
    for name in schemes:
        if name == "spraypoint":
            providers[name] = SpraypointPaths(topo, p, h, key)
        elif name.startswith("ksp") and name[3:].isdigit():
            providers[name] = KShortestPaths(topo, int(name[3:]))
        else:
            raise ValidationError(f"unknown scheme {name!r}")
    pairs = sample_pairs(topo.n, sample_count, seed)
    rows = []
    for name, prov in providers.items():
        for s, t in pairs:
            rows.append((s, t, name, pair_edge_disjoint(topo, prov, s, t)))
    over = {}
    if num_matchings:
        for name, prov in providers.items():
            over[name] = oversubscription(topo, p, h, key, num_matchings, eps, seed, provider=prov).worst
    return RoutingComparison(rows=rows, oversub=over)


def check_flow_result(res: ConcurrentFlowResult, full_matching: bool = True, tol: float = 1e-9) -> list[str]:
    """Structural checks on a solved instance; returns the list of violations."""
    issues = []
    if res.max_utilization() > 1 + res.eps + tol:
        issues.append(f"arc utilisation {res.max_utilization():.4f} exceeds capacity")
    if abs(sum(res.delta.values()) - 1) > 1e-6:
        issues.append("length fractions do not sum to one")
    if full_matching:
        lb = oversub_length_lower_bound(res.delta)
        if res.r < lb - res.eps * res.r - tol:
            issues.append(f"r={res.r:.4f} below length bound {lb:.4f}")
    if res.r < res.r_lower - tol:
        issues.append("primal below dual bound")
    return issues
