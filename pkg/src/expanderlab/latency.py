"""Layout-based latency estimates for Spraypoint fabrics and a 4-tier fat tree.

Rooms sit side by side along the x axis, each ``span / rooms`` wide and
``room_depth`` deep. Racks fill a uniform grid inside their room; shuffle
panels and fat-tree pod switches sit at room centres. Cables follow trays,
so every run is rectilinear, and each cable pays ``cable_drop`` metres to
climb into the tray and back down.

A Spraypoint hop from router ``u`` to router ``v`` is the run
``u -> panel(u) -> panel(v) -> v``; the panel-to-panel leg is a trunk and
vanishes when both routers share a room.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cabling import PhysicalPlan, land_routers, plan_datacenter, resolve_topology
from .errors import LayoutInfeasible, UnplacedNode, ValidationError
from .graph_core import Topology
from .randomness import child_seed, make_rng
from .spraypoint import DestinationTables, LevelAssignment, compute_levels, default_level_count


@dataclass(frozen=True)
class Geometry:
    span: float = 300.0
    rooms: int = 10
    room_depth: float = 165.0
    cable_drop: float = 3.0

    def __post_init__(self):
        if self.rooms < 1 or self.span <= 0:
            raise ValidationError("need a positive span and at least one room")
        if self.room_depth < 0 or self.cable_drop < 0:
            raise ValidationError("room depth and cable drop must be non-negative")

    @property
    def room_width(self) -> float:
        return self.span / self.rooms

    def room_center(self, room) -> np.ndarray:
        """x coordinate of each room's centre (its panel and pod switches)."""
        return (np.asarray(room, dtype=np.float64) + 0.5) * self.room_width

    def room_dist(self, room_a, room_b) -> np.ndarray:
        """Centre-to-centre distance between rooms, in metres."""
        return np.abs(self.room_center(room_a) - self.room_center(room_b))

    @property
    def middle_room(self) -> int:
        return self.rooms // 2


@dataclass(frozen=True)
class LatencyParams:
    propagation: float = 5.0  # ns per metre
    per_hop_switch: float = 0.0  # ns
    transmission: float = 700.0  # ns per hop for the reference packet

    def __post_init__(self):
        if min(self.propagation, self.per_hop_switch, self.transmission) < 0:
            raise ValidationError("latency constants must be non-negative")

    @property
    def per_hop(self) -> float:
        return self.per_hop_switch + self.transmission


@dataclass(frozen=True)
class Placement:
    """Physical position of every router."""

    room: np.ndarray
    x: np.ndarray
    y: np.ndarray
    geometry: Geometry

    @property
    def n(self) -> int:
        return len(self.room)

    def to_panel(self, nodes) -> np.ndarray:
        """Tray run from each router to its room's panel, drops included."""
        nodes = np.asarray(nodes)
        g = self.geometry
        cx = g.room_center(self.room[nodes])
        return np.abs(self.x[nodes] - cx) + np.abs(self.y[nodes] - g.room_depth / 2) + 2 * g.cable_drop

    def hop_length(self, u, v) -> np.ndarray:
        """Cable length of a fabric hop ``u -> v`` through the shuffle panels."""
        u = np.asarray(u)
        v = np.asarray(v)
        g = self.geometry
        trunk = g.room_dist(self.room[u], self.room[v])
        trunk = np.where(self.room[u] == self.room[v], 0.0, trunk + 2 * g.cable_drop)
        return self.to_panel(u) + trunk + self.to_panel(v)

    def direct_distance(self, u, v) -> np.ndarray:
        u = np.asarray(u)
        v = np.asarray(v)
        return np.abs(self.x[u] - self.x[v]) + np.abs(self.y[u] - self.y[v])


def place_routers(geometry: Geometry, router_room: Sequence[int]) -> Placement:
    """Lay each room's racks on a uniform grid, in router-id order."""
    room = np.asarray(router_room, dtype=np.int64)
    if len(room) and (room.min() < 0 or room.max() >= geometry.rooms):
        bad = np.flatnonzero((room < 0) | (room >= geometry.rooms))
        raise UnplacedNode(f"routers outside the layout's rooms: {bad[:10].tolist()}")
    x = np.empty(len(room))
    y = np.empty(len(room))
    w, depth = geometry.room_width, geometry.room_depth
    for r in np.unique(room):
        members = np.flatnonzero(room == r)
        k = len(members)
        rows = max(1, round(math.sqrt(k * depth / w))) if depth > 0 else 1
        rows = min(rows, k)
        cols = math.ceil(k / rows)
        idx = np.arange(k)
        x[members] = r * w + (idx % cols + 0.5) * w / cols
        y[members] = (idx // cols + 0.5) * depth / rows
    return Placement(room=room, x=x, y=y, geometry=geometry)


def even_rooms(n: int, rooms: int) -> np.ndarray:
    """Spread ``n`` routers over ``rooms`` rooms in contiguous id blocks."""
    return (np.arange(n) * rooms) // n


def path_latency(path: Sequence[int], placement: Placement, params: LatencyParams) -> float:
    """One-way latency of a node sequence in nanoseconds."""
    path = np.asarray(path, dtype=np.int64)
    if len(path) and (path.min() < 0 or path.max() >= placement.n):
        raise UnplacedNode(f"path visits nodes without a position: {path.tolist()}")
    if len(path) < 2:
        return 0.0
    lengths = placement.hop_length(path[:-1], path[1:])
    return float(np.sum(params.propagation * lengths + params.per_hop))


@dataclass(frozen=True)
class LatencyTable:
    """Percentiles of per-pair latency in nanoseconds."""

    label: str
    p10: float
    p50: float
    p90: float
    mean: float
    pairs: int
    samples: np.ndarray

    def row(self) -> dict:
        return {"label": self.label, "p10_ns": self.p10, "p50_ns": self.p50, "p90_ns": self.p90,
                "mean_ns": self.mean, "pairs": self.pairs}


def _table(label: str, values: np.ndarray) -> LatencyTable:
    p10, p50, p90 = np.percentile(values, [10, 50, 90])
    return LatencyTable(label, float(p10), float(p50), float(p90), float(values.mean()), len(values), values)


def expected_latency_to(topo: Topology, parents: np.ndarray, hops: np.ndarray, t: int,
                        placement: Placement, params: LatencyParams) -> np.ndarray:
    """Flow-weighted latency from every node to ``t`` along its pointing graph.

    ECMP splits traffic evenly over a node's parents, so the expected
    latency is the mean over parents of hop cost plus the parent's value.
    """
    n = topo.n
    lat = np.zeros(n)
    valid = parents >= 0
    count = valid.sum(axis=1)
    safe = np.where(valid, parents, 0)
    order = np.argsort(hops, kind="stable")
    for level in np.unique(hops[hops > 0]):
        nodes = order[np.searchsorted(hops[order], level, "left"):np.searchsorted(hops[order], level, "right")]
        par = safe[nodes]
        cost = params.propagation * placement.hop_length(np.repeat(nodes, par.shape[1]), par.ravel())
        cost = cost.reshape(par.shape) + params.per_hop + lat[par]
        lat[nodes] = np.where(valid[nodes], cost, 0.0).sum(axis=1) / count[nodes]
    lat[t] = 0.0
    return lat


def pair_latencies(topo: Topology, tables: DestinationTables, pairs: np.ndarray, placement: Placement,
                   params: LatencyParams) -> np.ndarray:
    """Expected latency per ``(s, t)`` pair with uniform spraying over uplinks."""
    out = np.empty(len(pairs))
    indptr, indices, mult = topo.indptr, topo.indices, topo.multiplicity
    for t in np.unique(pairs[:, 1]):
        _, pg = tables.get(int(t))
        lat = expected_latency_to(topo, pg.parents, pg.hops, int(t), placement, params)
        for row in np.flatnonzero(pairs[:, 1] == t):
            s = int(pairs[row, 0])
            nb = indices[indptr[s]:indptr[s + 1]]
            w = mult[indptr[s]:indptr[s + 1]]
            hop = params.propagation * placement.hop_length(np.full(len(nb), s), nb) + params.per_hop
            out[row] = float(np.dot(w, hop + lat[nb]) / w.sum())
    return out


def _sample_pairs(n: int, count: int, seed: int) -> np.ndarray:
    rng = make_rng(seed, "latency-pairs")
    s = rng.integers(0, n, size=count)
    t = (s + rng.integers(1, n, size=count)) % n
    return np.column_stack([s, t])


def biased_levels(topo: Topology, t: int, p: int, ell: int, key: int, placement: Placement) -> LevelAssignment:
    """Waypoint levels that prefer candidates in rooms close to the destination.

    Each selector ``v`` ranks candidate ``w`` by
    ``room_dist(w, v) + room_dist(v, t)``, then by the usual keyed hash.
    """
    g = placement.geometry
    room = placement.room
    if len(room) != topo.n:
        raise UnplacedNode("placement does not cover every node")
    t_room = room[int(t)]

    def score(owner, cand):
        return g.room_dist(room[cand], room[owner]) + g.room_dist(room[owner], t_room)

    return compute_levels(topo, t, p, ell, key, score=score)


def _biased_score_factory(placement: Placement):
    g = placement.geometry
    room = placement.room

    def factory(t):
        t_room = room[int(t)]

        def score(owner, cand):
            return g.room_dist(room[cand], room[owner]) + g.room_dist(room[owner], t_room)
        return score
    return factory


def latency_distribution(source: Topology | PhysicalPlan, geometry: Geometry, params: LatencyParams,
                         sample_pairs: int, seed: int, p: int = 4, h: int = 2, key: int = 1,
                         ell: int | None = None, router_room: Sequence[int] | None = None,
                         biased: bool = False, label: str | None = None) -> LatencyTable:
    """P10/P50/P90 of flow-weighted Spraypoint latency over sampled router pairs.

    ``source`` is either a resolved topology (then ``router_room`` places its
    routers, defaulting to even contiguous blocks) or a landed plan.
    """
    if sample_pairs < 1:
        raise ValidationError("sample_pairs must be >= 1")
    if isinstance(source, PhysicalPlan):
        topo = resolve_topology(source).topology
        router_room = source.router_room
    else:
        topo = source
        if router_room is None:
            router_room = even_rooms(topo.n, geometry.rooms)
    if len(router_room) != topo.n:
        raise UnplacedNode(f"{topo.n} routers but {len(router_room)} room assignments")
    placement = place_routers(geometry, router_room)
    if ell is None:
        ell = default_level_count(topo.n, int(topo.degrees.max()), p)
    factory = _biased_score_factory(placement) if biased else None
    tables = DestinationTables(topo, p, h, ell, key, score_factory=factory)
    pairs = _sample_pairs(topo.n, sample_pairs, seed)
    values = pair_latencies(topo, tables, pairs, placement, params)
    return _table(label or ("spraypoint-biased" if biased else "spraypoint"), values)


def layout_plan(geometry: Geometry, routers_per_room: int, uplinks: int, alpha: float = 1.0,
                seed: int = 0) -> PhysicalPlan:
    """Fully landed plan with one panel per room, sized to fit its routers."""
    from .cabling import make_shufflebox

    spec = make_shufflebox()
    ports = routers_per_room * uplinks // spec.f_r
    boxes = math.ceil(ports / spec.d_r)
    plan = plan_datacenter(geometry.rooms, boxes, spec=spec, alpha=alpha, seed=child_seed(seed, "plan"))
    for r in range(geometry.rooms):
        land_routers(plan, r, routers_per_room, uplinks, seed=child_seed(seed, "land", r))
    return plan


# ------------------------------------------------------------ fat tree

@dataclass(frozen=True)
class FatTreeLayout:
    """4-tier tree: ToRs, two pod tiers at each room centre, spines in the middle room.

    ToRs under the same bottom-tier group meet after 2 hops, ToRs of the same
    pod after 4, everything else climbs to the spine (6 hops).
    """

    tors: int
    tors_per_group: int = 32

    def hop_count(self, a: np.ndarray, b: np.ndarray, room: np.ndarray, group: np.ndarray) -> np.ndarray:
        return np.where(room[a] != room[b], 6, np.where(group[a] != group[b], 4, 2))


def fat_tree_latency_baseline(tors: int, geometry: Geometry, params: LatencyParams, sample_pairs: int = 20000,
                              seed: int = 0, tors_per_group: int = 32) -> LatencyTable:
    """Latency percentiles for ECMP shortest paths in a 4-tier fat tree.

    ToRs are spread evenly over the rooms with the same rack grid as the
    Spraypoint fabric. Pod switches sit at their room's centre (the pod's
    internal cables are drop-only), spines at the middle room's centre.
    Every shortest path between two ToRs has the same length here, so ECMP
    weighting does not change the per-pair value.
    """
    if tors < geometry.rooms:
        raise LayoutInfeasible(f"{tors} ToRs cannot fill {geometry.rooms} pods")
    if tors_per_group < 1:
        raise LayoutInfeasible("pod groups need at least one ToR")
    if sample_pairs < 1:
        raise ValidationError("sample_pairs must be >= 1")
    room = even_rooms(tors, geometry.rooms)
    placement = place_routers(geometry, room)
    local = np.arange(tors) - np.searchsorted(room, room)
    group = room * tors + local // tors_per_group
    pairs = _sample_pairs(tors, sample_pairs, seed)
    a, b = pairs[:, 0], pairs[:, 1]
    hops = FatTreeLayout(tors, tors_per_group).hop_count(a, b, room, group)
    drop = 2 * geometry.cable_drop
    spine_x = geometry.room_center(geometry.middle_room)
    up = placement.to_panel(a) + placement.to_panel(b)
    pod = np.where(hops >= 4, 2 * drop, 0.0)
    spine = np.where(hops == 6, np.abs(geometry.room_center(room[a]) - spine_x)
                     + np.abs(geometry.room_center(room[b]) - spine_x) + 2 * drop, 0.0)
    values = params.propagation * (up + pod + spine) + hops * params.per_hop
    return _table("fat-tree", values)


def fat_tree_hop_counts(tors: int, geometry: Geometry, tors_per_group: int = 32) -> np.ndarray:
    """Hop count for every ordered ToR pair (diagonal zero)."""
    room = even_rooms(tors, geometry.rooms)
    local = np.arange(tors) - np.searchsorted(room, room)
    group = room * tors + local // tors_per_group
    a, b = np.meshgrid(np.arange(tors), np.arange(tors), indexing="ij")
    out = FatTreeLayout(tors, tors_per_group).hop_count(a, b, room, group)
    np.fill_diagonal(out, 0)
    return out
