"""Physical cabling: ShuffleBoxes, shuffle panels, trunks and incremental landing.

Port and fiber-pair (FP) numbering is global. Box ``b`` owns r-ports
``b*d_r .. b*d_r+d_r-1`` and c-ports ``b*d_c .. b*d_c+d_c-1``; r-port ``g``
owns FPs ``g*f_r .. g*f_r+f_r-1``.

Port states live in two integer arrays. A c-port is ``OPEN``,
``SHUFFLEBACK`` or holds the global id of the c-port it is trunked to. An
r-port is ``OPEN``, ``SHUFFLEBACK`` or ``ATTACHED`` (a router port occupies
all of its FPs).
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ._accel import njit
from .errors import (CapacityExceeded, CycleDetected, EmptyPhase, MalformedPlan, ProductMismatch,
                     ValidationError)
from .graph_core import Topology
from .models import incremental_avg_degree
from .randomness import child_seed, make_rng

OPEN = -2
SHUFFLEBACK = -1
ATTACHED = 0

CONNECTOR_LIMIT = 7

# trace outcomes
MATCHED, UNMATCHED, DISABLED, SELF_EDGE = 0, 1, 2, 3


# ------------------------------------------------------------ ShuffleBox

@dataclass(frozen=True, eq=False)
class ShuffleBoxSpec:
    d_r: int
    d_c: int
    f_r: int
    f_c: int
    r_to_c: np.ndarray = field(repr=False)  # j*f_r + k -> c*f_c + i
    c_to_r: np.ndarray = field(repr=False)

    @property
    def full_bipartite(self) -> bool:
        return self.d_c == self.f_r

    @property
    def fps(self) -> int:
        return self.d_r * self.f_r

    def c_side(self, rport: int, fp: int) -> tuple[int, int]:
        x = int(self.r_to_c[rport * self.f_r + fp])
        return divmod(x, self.f_c)

    def r_side(self, cport: int, fp: int) -> tuple[int, int]:
        x = int(self.c_to_r[cport * self.f_c + fp])
        return divmod(x, self.f_r)

    def is_bijection(self) -> bool:
        n = self.fps
        return (sorted(self.r_to_c.tolist()) == list(range(n))
                and bool(np.all(self.c_to_r[self.r_to_c] == np.arange(n))))


def make_shufflebox(d_r: int = 32, d_c: int = 4, f_r: int = 4, f_c: int = 32) -> ShuffleBoxSpec:
    """Build a ShuffleBox mapping.

    With ``d_c == f_r`` r-port ``j`` FP ``k`` is wired to c-port ``k`` FP
    ``j``, so every r-port reaches every c-port. Otherwise r-port FPs are
    dealt round-robin over c-ports, FP index outermost, which spreads each
    r-port's FPs over as many c-ports as possible.
    """
    if min(d_r, d_c, f_r, f_c) < 1:
        raise ValidationError("port and FP counts must be positive")
    if d_r * f_r != d_c * f_c:
        raise ProductMismatch(f"d_r*f_r = {d_r * f_r} but d_c*f_c = {d_c * f_c}")
    n = d_r * f_r
    r_to_c = np.empty(n, dtype=np.int64)
    if d_c == f_r:
        for j in range(d_r):
            for k in range(f_r):
                r_to_c[j * f_r + k] = k * f_c + j
    else:
        pos = 0
        for k in range(f_r):
            for j in range(d_r):
                c, i = pos % d_c, pos // d_c
                r_to_c[j * f_r + k] = c * f_c + i
                pos += 1
    c_to_r = np.empty(n, dtype=np.int64)
    c_to_r[r_to_c] = np.arange(n)
    r_to_c.setflags(write=False)
    c_to_r.setflags(write=False)
    return ShuffleBoxSpec(d_r, d_c, f_r, f_c, r_to_c, c_to_r)


# ------------------------------------------------------------ the plan

@dataclass
class Panel:
    index: int
    room: int
    phase: int
    boxes: np.ndarray
    active: bool = False


@dataclass
class PhysicalPlan:
    spec: ShuffleBoxSpec
    alpha: float = 1.0
    panels: list[Panel] = field(default_factory=list)
    rooms: list[list[int]] = field(default_factory=list)
    box_panel: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    cport: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    rport: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    rfp_uplink: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    uplink_router: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    uplink_rfp: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    router_room: list[int] = field(default_factory=list)

    # --- sizes
    @property
    def num_boxes(self) -> int:
        return len(self.box_panel)

    @property
    def num_routers(self) -> int:
        return len(self.router_room)

    @property
    def num_uplinks(self) -> int:
        return len(self.uplink_router)

    @property
    def num_panels(self) -> int:
        return len(self.panels)

    def copy(self) -> "PhysicalPlan":
        return copy.deepcopy(self)

    # --- port views
    def panel_cports(self, pid: int) -> np.ndarray:
        d_c = self.spec.d_c
        return (self.panels[pid].boxes[:, None] * d_c + np.arange(d_c)).ravel()

    def panel_rports(self, pid: int) -> np.ndarray:
        d_r = self.spec.d_r
        return (self.panels[pid].boxes[:, None] * d_r + np.arange(d_r)).ravel()

    def cport_panel(self, gc) -> np.ndarray:
        return self.box_panel[np.asarray(gc) // self.spec.d_c]

    @property
    def trunk_links(self) -> set[tuple[int, int]]:
        a = np.flatnonzero(self.cport >= 0)
        b = self.cport[a]
        keep = a < b
        return set(zip(a[keep].tolist(), b[keep].tolist()))

    @property
    def shufflebacks(self) -> set[tuple[str, int]]:
        return ({("c", int(g)) for g in np.flatnonzero(self.cport == SHUFFLEBACK)}
                | {("r", int(g)) for g in np.flatnonzero(self.rport == SHUFFLEBACK)})

    @property
    def attachments(self) -> dict[int, tuple[int, int, int]]:
        """Uplink id -> (box, r-port within box, FP index)."""
        f_r, d_r = self.spec.f_r, self.spec.d_r
        out = {}
        for u, g in enumerate(self.uplink_rfp.tolist()):
            rp, k = divmod(g, f_r)
            b, j = divmod(rp, d_r)
            out[u] = (b, j, k)
        return out

    def trunk_matrix(self) -> np.ndarray:
        """Trunked c-port count between each pair of panels."""
        a = np.flatnonzero(self.cport >= 0)
        pa = self.cport_panel(a)
        pb = self.cport_panel(self.cport[a])
        mat = np.zeros((self.num_panels, self.num_panels), dtype=np.int64)
        np.add.at(mat, (pa, pb), 1)
        return mat

    def trunk_count(self) -> int:
        """Number of trunk connections (each joins two c-ports)."""
        return int(np.count_nonzero(self.cport >= 0) // 2)

    def free_rports(self, pid: int) -> np.ndarray:
        rp = self.panel_rports(pid)
        return rp[self.rport[rp] != ATTACHED]

    def room_capacity_routers(self, room: int, uplinks: int) -> int:
        ports = sum(len(self.panel_rports(p)) for p in self.rooms[room])
        return ports // (uplinks // self.spec.f_r)

    def validate(self) -> None:
        """Check port exclusivity and reference integrity."""
        s = self.spec
        nb = self.num_boxes
        if len(self.cport) != nb * s.d_c or len(self.rport) != nb * s.d_r or len(self.rfp_uplink) != nb * s.fps:
            raise MalformedPlan("port arrays do not match box count")
        t = np.flatnonzero(self.cport >= 0)
        if len(t) and (self.cport[t].max() >= len(self.cport) or np.any(self.cport[self.cport[t]] != t)):
            raise MalformedPlan("trunk references are not symmetric")
        if np.any(self.cport[t] == t):
            raise MalformedPlan("c-port trunked to itself")
        if np.any(self.cport < OPEN) or np.any((self.rport < OPEN) | (self.rport > ATTACHED)):
            raise MalformedPlan("unknown port state")
        occupied = (self.rfp_uplink.reshape(-1, s.f_r) >= 0)
        attached = self.rport == ATTACHED
        if np.any(occupied.any(axis=1) != attached):
            raise MalformedPlan("r-port attachment state disagrees with FP occupancy")
        if len(self.uplink_rfp) and np.any(self.rfp_uplink[self.uplink_rfp] != np.arange(self.num_uplinks)):
            raise MalformedPlan("uplink attachment table is inconsistent")


def empty_plan(spec: ShuffleBoxSpec | None = None, alpha: float = 1.0) -> PhysicalPlan:
    if not 0 < alpha <= 1:
        raise ValidationError("alpha must lie in (0, 1]")
    return PhysicalPlan(spec=spec or make_shufflebox(), alpha=float(alpha))


def _new_panel(plan: PhysicalPlan, room: int, boxes: int, phase: int = 0) -> int:
    if boxes < 1:
        raise ValidationError("a panel needs at least one ShuffleBox")
    s = plan.spec
    pid = plan.num_panels
    first = plan.num_boxes
    ids = np.arange(first, first + boxes, dtype=np.int64)
    plan.panels.append(Panel(pid, room, phase, ids))
    plan.box_panel = np.concatenate([plan.box_panel, np.full(boxes, pid, dtype=np.int64)])
    plan.cport = np.concatenate([plan.cport, np.full(boxes * s.d_c, SHUFFLEBACK, dtype=np.int64)])
    plan.rport = np.concatenate([plan.rport, np.full(boxes * s.d_r, SHUFFLEBACK, dtype=np.int64)])
    plan.rfp_uplink = np.concatenate([plan.rfp_uplink, np.full(boxes * s.fps, -1, dtype=np.int64)])
    return pid


def pair_targets(sizes: dict[int, int], alpha: float, rng: np.random.Generator) -> dict[tuple[int, int], int]:
    """Trunk count per panel pair, proportional to the product of c-port counts.

    Each pair gets ``alpha * c_i * c_j / sum(c)`` rounded down; the rounding
    remainder is handed out one by one to pairs with the largest fractional
    parts, ties broken in seeded order. A panel never receives more than the
    ceiling of its own exact share, so small panels cannot be overbooked.
    """
    ids = sorted(sizes)
    total = sum(sizes.values())
    pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1:]]
    if not pairs:
        return {}
    exact = np.array([alpha * sizes[a] * sizes[b] / total for a, b in pairs])
    base = np.floor(exact + 1e-9).astype(np.int64)
    extra = int(round(exact.sum())) - int(base.sum())
    frac = exact - base
    share = {p: alpha * sizes[p] * (total - sizes[p]) / total for p in ids}
    room = {p: math.ceil(share[p] - 1e-9) for p in ids}
    for (a, b), v in zip(pairs, base.tolist()):
        room[a] -= v
        room[b] -= v
    order = np.lexsort((rng.permutation(len(pairs)), -np.round(frac, 12)))
    for k in order:
        if extra <= 0:
            break
        a, b = pairs[k]
        if room[a] > 0 and room[b] > 0:
            base[k] += 1
            room[a] -= 1
            room[b] -= 1
            extra -= 1
    return {p: int(v) for p, v in zip(pairs, base)}


def _break_trunk(plan: PhysicalPlan, gc: int) -> int:
    other = int(plan.cport[gc])
    plan.cport[gc] = SHUFFLEBACK
    plan.cport[other] = SHUFFLEBACK
    return other


def _activate(plan: PhysicalPlan, pid: int, rng: np.random.Generator) -> None:
    """Bring a panel into the trunk mesh, rebalancing existing trunks."""
    old = [p.index for p in plan.panels if p.active]
    panel = plan.panels[pid]
    if panel.active:
        return
    panel.active = True
    if not old:
        return
    d_c = plan.spec.d_c
    sizes = {p: len(plan.panels[p].boxes) * d_c for p in old + [pid]}
    targets = pair_targets(sizes, plan.alpha, rng)
    current = plan.trunk_matrix()

    # shed excess trunks between old panels, chosen at random
    for (a, b), want in targets.items():
        if pid in (a, b):
            continue
        excess = int(current[a, b]) - want
        if excess <= 0:
            continue
        ca = plan.panel_cports(a)
        links = ca[(plan.cport[ca] >= 0) & (plan.cport_panel(np.maximum(plan.cport[ca], 0)) == b)]
        for gc in rng.choice(links, size=excess, replace=False):
            _break_trunk(plan, int(gc))

    # old-side c-ports that will face the new panel
    old_side = []
    for a in old:
        need = targets[(min(a, pid), max(a, pid))]
        if need == 0:
            continue
        ca = plan.panel_cports(a)
        free = ca[plan.cport[ca] == SHUFFLEBACK]
        if len(free) < need:
            trunked = ca[plan.cport[ca] >= 0]
            trunked = trunked[plan.cport_panel(plan.cport[trunked]) != pid]
            for gc in rng.choice(trunked, size=need - len(free), replace=False):
                _break_trunk(plan, int(gc))
            free = ca[plan.cport[ca] == SHUFFLEBACK]
        old_side.append(rng.choice(free, size=need, replace=False))
    old_side = np.concatenate(old_side) if old_side else np.zeros(0, dtype=np.int64)
    rng.shuffle(old_side)

    # new side: whole bridged c-port pairs where possible, so an empty r-port
    # in the new panel joins two trunks rather than a trunk and a local port
    cn = plan.panel_cports(pid)
    need = len(old_side)
    pairs = cn.reshape(-1, 2) if d_c % 2 == 0 else cn[:, None]
    chosen = pairs[rng.permutation(len(pairs))]
    flat = chosen.ravel()[:need]
    if len(flat) < need:
        raise MalformedPlan("new panel has too few c-ports for its trunk allocation")
    _separate_pairs(old_side, d_c, rng)
    for x, y in zip(flat.tolist(), old_side.tolist()):
        plan.cport[x] = y
        plan.cport[y] = x


def _separate_pairs(side: np.ndarray, d_c: int, rng: np.random.Generator, tries: int = 20) -> None:
    """Reorder so consecutive entries (one bridged pair) come from different boxes.

    Otherwise an empty r-port on the new panel would loop a trunk straight
    back into the box it came from, joining a router port to itself.
    """
    n = len(side) - len(side) % 2
    for t in range(0, n, 2):
        for _ in range(tries):
            if side[t] // d_c != side[t + 1] // d_c:
                break
            k = int(rng.integers(len(side)))
            if k in (t, t + 1):
                continue
            side[t + 1], side[k] = side[k], side[t + 1]


def add_room(plan: PhysicalPlan, boxes: int, seed: int) -> PhysicalPlan:
    """Install a new room's shuffle panel and rebalance trunks toward it."""
    room = len(plan.rooms)
    pid = _new_panel(plan, room, boxes)
    plan.rooms.append([pid])
    _activate(plan, pid, make_rng(seed, "add-room", room))
    return plan


def plan_datacenter(rooms: int, boxes_per_room, spec: ShuffleBoxSpec | None = None, alpha: float = 1.0,
                    seed: int = 0) -> PhysicalPlan:
    """All rooms' panels installed, trunks balanced, no routers landed yet."""
    if rooms < 1:
        raise ValidationError("need at least one room")
    sizes = [boxes_per_room] * rooms if np.isscalar(boxes_per_room) else list(boxes_per_room)
    if len(sizes) != rooms:
        raise ValidationError("boxes_per_room length must equal the room count")
    plan = empty_plan(spec, alpha)
    for r, b in enumerate(sizes):
        add_room(plan, int(b), child_seed(seed, "room", r))
    return plan


def phased_first_room(plan: PhysicalPlan, phase_fractions: Sequence[float], seed: int) -> PhysicalPlan:
    """Split the (still empty) first room's panel into landing phases.

    Returns a new plan whose first room consists of one panel per phase. Only
    phase 1 starts active; each later phase joins the trunk mesh when the
    previous one fills up.
    """
    fr = [float(x) for x in phase_fractions]
    if not fr or any(x <= 0 for x in fr) or abs(sum(fr) - 1) > 1e-9:
        raise ValidationError("phase fractions must be positive and sum to 1")
    if len(plan.rooms) != 1 or plan.num_routers:
        raise ValidationError("phasing applies to a single, empty first room")
    total = plan.num_boxes
    cuts = np.round(np.cumsum(fr) * total).astype(int)
    sizes = np.diff(np.concatenate([[0], cuts]))
    if np.any(sizes < 1):
        raise EmptyPhase(f"phase sizes {sizes.tolist()} leave a phase without boxes")
    out = empty_plan(plan.spec, plan.alpha)
    out.rooms.append([])
    for k, b in enumerate(sizes.tolist()):
        out.rooms[0].append(_new_panel(out, 0, b, phase=k))
    _activate(out, out.rooms[0][0], make_rng(seed, "phase", 0))
    return out


def _landing_panel(plan: PhysicalPlan, room: int, ports: int, seed: int) -> int:
    for k, pid in enumerate(plan.rooms[room]):
        if len(plan.free_rports(pid)) >= ports:
            if not plan.panels[pid].active:
                _activate(plan, pid, make_rng(seed, "phase", k))
            return pid
    raise CapacityExceeded(f"room {room} has no panel with {ports} free r-ports")


def _pick_ports(free: np.ndarray, ports: int, d_r: int, rng: np.random.Generator) -> np.ndarray:
    """Random free r-ports, one per ShuffleBox while distinct boxes remain."""
    order = rng.permutation(free)
    _, first = np.unique(order // d_r, return_index=True)
    lead = order[np.sort(first)]
    if len(lead) >= ports:
        return lead[:ports]
    rest = np.setdiff1d(order, lead)
    return np.concatenate([lead, rng.choice(rest, size=ports - len(lead), replace=False)])


def land_routers(plan: PhysicalPlan, room: int, count: int, uplinks_per_router: int, seed: int,
                 spread: bool = True) -> PhysicalPlan:
    """Attach ``count`` routers to random free r-ports of the room's landing panel.

    A router's uplinks come in groups of ``f_r`` breakout lanes of one
    physical port, so each group occupies a whole r-port (its ShuffleBack is
    removed). With ``spread`` a router's ports go to distinct ShuffleBoxes
    while that is possible, which keeps two of its own uplinks from meeting
    through one box. Within a phased room the routers fill phase after phase.
    """
    s = plan.spec
    if not 0 <= room < len(plan.rooms):
        raise ValidationError(f"unknown room {room}")
    if uplinks_per_router < 1 or uplinks_per_router % s.f_r:
        raise ValidationError(f"uplinks per router must be a positive multiple of f_r={s.f_r}")
    ports = uplinks_per_router // s.f_r
    free_total = sum(len(plan.free_rports(p)) for p in plan.rooms[room])
    if count * ports > free_total:
        raise CapacityExceeded(f"room {room} has {free_total} free r-ports, need {count * ports}")
    rng = make_rng(seed, "land", room)
    new_uplinks = []
    new_routers = []
    for _ in range(count):
        pid = _landing_panel(plan, room, ports, seed)
        free = plan.free_rports(pid)
        picks = np.sort(_pick_ports(free, ports, s.d_r, rng) if spread
                        else rng.choice(free, size=ports, replace=False))
        router = plan.num_routers + len(new_routers)
        new_routers.append(room)
        base = plan.num_uplinks + len(new_uplinks)
        fps = (picks[:, None] * s.f_r + np.arange(s.f_r)).ravel()
        plan.rport[picks] = ATTACHED
        plan.rfp_uplink[fps] = base + np.arange(len(fps))
        new_uplinks.extend((router, int(g)) for g in fps)
        # a filled phase hands over to the next one
        if len(plan.free_rports(pid)) < ports:
            later = plan.rooms[room][plan.rooms[room].index(pid) + 1:]
            if later and not plan.panels[later[0]].active:
                _activate(plan, later[0], make_rng(seed, "phase", plan.panels[later[0]].phase))
    plan.router_room.extend(new_routers)
    if new_uplinks:
        arr = np.array(new_uplinks, dtype=np.int64)
        plan.uplink_router = np.concatenate([plan.uplink_router, arr[:, 0]])
        plan.uplink_rfp = np.concatenate([plan.uplink_rfp, arr[:, 1]])
    return plan


# ------------------------------------------------------------ resolution

@njit
def _trace_uplinks(uplink_rfp, rport, cport, rfp_uplink, r_to_c, c_to_r, d_r, d_c, f_r, f_c, limit,
                   partner, connectors, outcome, trunks, bridges):
    max_steps = 4 * len(cport) + 4 * len(rport) + 8
    for u in range(len(uplink_rfp)):
        g = uplink_rfp[u]
        rp = g // f_r
        k = g % f_r
        box = rp // d_r
        j = rp % d_r
        count = 1
        nt = 0
        nb = 0
        partner[u] = -1
        outcome[u] = 1
        steps = 0
        while True:
            steps += 1
            if steps > max_steps:
                outcome[u] = 4
                break
            x = r_to_c[j * f_r + k]
            c = x // f_c
            i = x % f_c
            count += 1
            if count > limit:
                outcome[u] = 2
                break
            st = cport[box * d_c + c]
            if st == -1:
                i = i ^ 1
                if i >= f_c:
                    break
            elif st >= 0:
                box = st // d_c
                c = st % d_c
                count += 1
                nt += 1
                if count > limit:
                    outcome[u] = 2
                    break
            else:
                break
            y = c_to_r[c * f_c + i]
            j = y // f_r
            k = y % f_r
            count += 1
            if count > limit:
                outcome[u] = 2
                break
            rp = box * d_r + j
            v = rfp_uplink[rp * f_r + k]
            if v >= 0:
                if v == u:
                    outcome[u] = 4
                else:
                    partner[u] = v
                    outcome[u] = 0
                break
            if rport[rp] == -1:
                k = k ^ 1
                nb += 1
                if k >= f_r:
                    break
                continue
            break
        connectors[u] = count
        trunks[u] = nt
        bridges[u] = nb


@dataclass
class Resolution:
    """Logical fabric resolved from a plan.

    Unpacks as ``(topology, unmatched, disabled)``.
    """

    topology: Topology
    unmatched: list[int]
    disabled: list[tuple[int, int]]  # (uplink, connectors counted when the trace gave up)
    edge_connectors: np.ndarray
    edge_trunks: np.ndarray
    edge_bridges: np.ndarray
    self_edges: int
    num_uplinks: int

    @property
    def edge_pattern(self) -> np.ndarray:
        """Connectivity pattern per edge: "a", "b", "c" or "other"."""
        return np.array([_pattern(c, t, b) for c, t, b in zip(self.edge_connectors.tolist(),
                         self.edge_trunks.tolist(), self.edge_bridges.tolist())], dtype=object)

    def __iter__(self) -> Iterator:
        return iter((self.topology, self.unmatched, self.disabled))

    @property
    def matched_fraction(self) -> float:
        if self.num_uplinks == 0:
            return 0.0
        return 2 * self.topology.num_edges / self.num_uplinks

    @property
    def unmatched_fraction(self) -> float:
        return 1.0 - self.matched_fraction if self.num_uplinks else 0.0


def _pattern(connectors: int, trunks: int, bridges: int) -> str:
    if trunks == 0 and bridges == 0 and connectors == 3:
        return "a"
    if trunks == 1 and bridges == 0 and connectors == 4:
        return "b"
    if trunks == 2 and bridges == 1 and connectors == 7:
        return "c"
    return "other"


def resolve_topology(plan: PhysicalPlan, connector_limit: int = CONNECTOR_LIMIT) -> Resolution:
    """Trace every uplink FP through the passive optics to its far end."""
    plan.validate()
    s = plan.spec
    nu = plan.num_uplinks
    partner = np.empty(nu, dtype=np.int64)
    conn = np.empty(nu, dtype=np.int64)
    outcome = np.empty(nu, dtype=np.int64)
    trunks = np.empty(nu, dtype=np.int64)
    bridges = np.empty(nu, dtype=np.int64)
    if nu:
        _trace_uplinks(plan.uplink_rfp, plan.rport, plan.cport, plan.rfp_uplink, s.r_to_c, s.c_to_r,
                       s.d_r, s.d_c, s.f_r, s.f_c, int(connector_limit), partner, conn, outcome, trunks, bridges)
    if np.any(outcome == 4):
        raise CycleDetected(f"trace loops back for uplinks {np.flatnonzero(outcome == 4)[:10].tolist()}")
    matched = np.flatnonzero(outcome == MATCHED)
    if np.any(partner[partner[matched]] != matched):
        raise MalformedPlan("asymmetric FP trace")
    routers = plan.uplink_router
    first = matched[matched < partner[matched]]
    a = routers[first]
    b = routers[partner[first]]
    loop = a == b
    keep = first[~loop]
    edges = np.column_stack([routers[keep], routers[partner[keep]]])
    local = _local_uplink_index(plan)
    slots = np.column_stack([local[keep], local[partner[keep]]])
    per_router = np.bincount(routers, minlength=plan.num_routers)
    d = int(per_router.max(initial=0))
    topo = Topology(n=plan.num_routers, d=d, edges=edges, seed=0, simple=False, slots=slots)
    self_ups = np.concatenate([first[loop], partner[first[loop]]])
    unmatched = sorted(np.flatnonzero(outcome == UNMATCHED).tolist() + self_ups.tolist())
    dis = np.flatnonzero(outcome == DISABLED)
    return Resolution(topology=topo, unmatched=unmatched,
                      disabled=list(zip(dis.tolist(), conn[dis].tolist())),
                      edge_connectors=conn[keep], edge_trunks=trunks[keep], edge_bridges=bridges[keep],
                      self_edges=int(loop.sum()), num_uplinks=nu)


def _local_uplink_index(plan: PhysicalPlan) -> np.ndarray:
    r = plan.uplink_router
    if len(r) == 0:
        return r.copy()
    starts = np.r_[0, np.flatnonzero(np.diff(r)) + 1]
    counts = np.diff(np.r_[starts, len(r)])
    return np.arange(len(r)) - np.repeat(starts, counts)


# ------------------------------------------------------------ timeline

@dataclass(frozen=True)
class RoomEvent:
    boxes: int
    phases: tuple[float, ...] | None = None


@dataclass(frozen=True)
class LandEvent:
    room: int
    count: int
    uplinks: int


@dataclass
class Timeline:
    routers: np.ndarray       # routers landed after each recorded event
    matched: np.ndarray       # matched-uplink fraction after each recorded event
    fraction: np.ndarray      # routers / total routers in the schedule
    model: np.ndarray         # incremental-degree model / d at the same points
    stages: list[tuple[float, float]]

    def max_model_gap(self) -> float:
        return float(np.max(np.abs(self.matched - self.model), initial=0.0))


def standard_schedule(rooms: int, routers_per_room: int, uplinks: int, batch: int = 1,
                      spec: ShuffleBoxSpec | None = None, phases: Sequence[float] | None = None) -> list:
    """Rooms opened one at a time, each filled in batches before the next opens."""
    spec = spec or make_shufflebox()
    ports = routers_per_room * uplinks // spec.f_r
    if uplinks % spec.f_r or ports % spec.d_r:
        raise ValidationError("routers and uplinks must fill whole ShuffleBoxes")
    boxes = ports // spec.d_r
    events: list = []
    for r in range(rooms):
        events.append(RoomEvent(boxes, tuple(phases) if (phases and r == 0) else None))
        left = routers_per_room
        while left:
            step = min(batch, left)
            events.append(LandEvent(r, step, uplinks))
            left -= step
    return events


def deployment_timeline(schedule: Sequence, seed: int, spec: ShuffleBoxSpec | None = None,
                        alpha: float = 1.0) -> Timeline:
    """Replay a landing schedule, resolving the fabric after every landing."""
    spec = spec or make_shufflebox()
    plan = empty_plan(spec, alpha)
    total = sum(e.count for e in schedule if isinstance(e, LandEvent))
    if total == 0:
        raise ValidationError("schedule lands no routers")
    # stage boundaries follow panel capacities in landing order
    stage_sizes = []
    routers, matched = [], []
    for idx, ev in enumerate(schedule):
        if isinstance(ev, RoomEvent):
            if ev.phases and len(plan.rooms) == 0:
                tmp = add_room(empty_plan(spec, alpha), ev.boxes, child_seed(seed, "room", 0))
                plan = phased_first_room(tmp, ev.phases, child_seed(seed, "phases", 0))
            else:
                if ev.phases:
                    raise ValidationError("only the first room can be phased")
                add_room(plan, ev.boxes, child_seed(seed, "room", len(plan.rooms)))
        elif isinstance(ev, LandEvent):
            if ev.room >= len(plan.rooms) or (ev.room != len(plan.rooms) - 1):
                raise ValidationError("landing must target the most recently opened room")
            land_routers(plan, ev.room, ev.count, ev.uplinks, child_seed(seed, "land", idx))
            routers.append(plan.num_routers)
            matched.append(resolve_topology(plan).matched_fraction)
        else:
            raise ValidationError(f"unknown schedule event {ev!r}")
    # stages from the routers each panel actually received
    per_panel = np.bincount(plan.box_panel[plan.uplink_rfp // (spec.d_r * spec.f_r)] if plan.num_uplinks else [],
                            minlength=plan.num_panels)
    uplinks_per_router = np.bincount(plan.uplink_router, minlength=plan.num_routers)
    order = [p for room in plan.rooms for p in room]
    sizes = [per_panel[p] / uplinks_per_router.mean() for p in order if per_panel[p] > 0]
    edges = np.cumsum([0.0] + sizes) / total
    stages = [(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]
    stages[-1] = (stages[-1][0], 1.0)
    frac = np.asarray(routers, dtype=float) / total
    model = np.array([incremental_avg_degree(t, stages, 1.0) for t in frac])
    return Timeline(np.asarray(routers), np.asarray(matched), frac, model, stages)


# ------------------------------------------------------------ bookkeeping

def endpoint_pair_count(plan: PhysicalPlan) -> int:
    """Routers plus one endpoint pair per pair of shuffle panels."""
    p = sum(1 for x in plan.panels if x.active)
    return plan.num_routers + p * (p - 1) // 2


def count_cabled_pairs(plan: PhysicalPlan) -> int:
    """Direct recount: distinct (router, panel) and (panel, panel) cable endpoints."""
    s = plan.spec
    rp = plan.uplink_rfp // (s.d_r * s.f_r)
    router_panel = {(int(r), int(plan.box_panel[b])) for r, b in zip(plan.uplink_router, rp)}
    mat = plan.trunk_matrix()
    panel_pairs = int(np.count_nonzero(np.triu(mat, 1)))
    return len(router_panel) + panel_pairs


# ------------------------------------------------------------ serialization

def save_plan(plan: PhysicalPlan, path) -> None:
    s = plan.spec
    out = ["# expanderlab cabling plan", "[spec]", f"{s.d_r} {s.d_c} {s.f_r} {s.f_c} {plan.alpha!r}", "[rooms]"]
    out += [f"{p.index} {p.room} {p.phase} {int(p.active)}" for p in plan.panels]
    out.append("[boxes]")
    out += [f"{b} {p}" for b, p in enumerate(plan.box_panel.tolist())]
    out.append("[trunks]")
    out += [f"{a} {b}" for a, b in sorted(plan.trunk_links)]
    out.append("[shufflebacks]")
    out += [f"{kind} {g}" for kind, g in sorted(plan.shufflebacks)]
    out.append("[attachments]")
    out += [f"{u} {r} {g}" for u, (r, g) in enumerate(zip(plan.uplink_router.tolist(), plan.uplink_rfp.tolist()))]
    out.append("[routers]")
    out += [f"{r} {room}" for r, room in enumerate(plan.router_room)]
    Path(path).write_text("\n".join(out) + "\n")


def load_plan(path) -> PhysicalPlan:
    sections: dict[str, list[list[str]]] = {}
    cur = None
    for ln in Path(path).read_text().splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if ln.startswith("[") and ln.endswith("]"):
            cur = ln[1:-1]
            sections[cur] = []
        elif cur is None:
            raise MalformedPlan("content before first section")
        else:
            sections[cur].append(ln.split())
    try:
        d_r, d_c, f_r, f_c = (int(x) for x in sections["spec"][0][:4])
        alpha = float(sections["spec"][0][4])
        spec = make_shufflebox(d_r, d_c, f_r, f_c)
        plan = empty_plan(spec, alpha)
        box_panel = np.array([int(r[1]) for r in sorted(sections.get("boxes", []), key=lambda r: int(r[0]))],
                             dtype=np.int64)
        nb = len(box_panel)
        plan.box_panel = box_panel
        for idx, room, phase, active in (map(int, r) for r in sections.get("rooms", [])):
            plan.panels.append(Panel(idx, room, phase, np.flatnonzero(box_panel == idx), bool(active)))
            while len(plan.rooms) <= room:
                plan.rooms.append([])
            plan.rooms[room].append(idx)
        plan.cport = np.full(nb * d_c, OPEN, dtype=np.int64)
        plan.rport = np.full(nb * d_r, OPEN, dtype=np.int64)
        plan.rfp_uplink = np.full(nb * spec.fps, -1, dtype=np.int64)
        for a, b in (map(int, r) for r in sections.get("trunks", [])):
            plan.cport[a] = b
            plan.cport[b] = a
        for kind, g in sections.get("shufflebacks", []):
            (plan.cport if kind == "c" else plan.rport)[int(g)] = SHUFFLEBACK
        att = np.array([[int(x) for x in r] for r in sections.get("attachments", [])], dtype=np.int64).reshape(-1, 3)
        att = att[np.argsort(att[:, 0])]
        plan.uplink_router = att[:, 1].copy()
        plan.uplink_rfp = att[:, 2].copy()
        plan.rfp_uplink[plan.uplink_rfp] = att[:, 0]
        plan.rport[plan.uplink_rfp // f_r] = ATTACHED
        plan.router_room = [int(r[1]) for r in sorted(sections.get("routers", []), key=lambda r: int(r[0]))]
    except (KeyError, IndexError, ValueError) as exc:
        raise MalformedPlan(f"cannot parse plan: {exc}") from exc
    plan.validate()
    return plan
