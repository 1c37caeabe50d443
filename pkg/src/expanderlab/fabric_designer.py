"""Sizing a Spraypoint fabric for a server count, and comparing it to a fat tree.

The designer looks for the smallest fabric degree ``d`` that still meets
the oversubscription targets: smaller ``d`` leaves more ports for servers and
therefore needs fewer ToRs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import Infeasible, InfeasibleRatio, NotModeled, ValidationError
from .models import RegimeWarning, model_oversub

DEFAULT_ECMP_MEMORY = 16000


def max_h(n: int, d: int, mem_entries: int) -> int:
    """Largest ECMP fan-out the forwarding memory can hold.

    Two table layouts compete: one group per destination (``n * h`` entries)
    or every possible group predefined (``h * d^h`` entries). The better one
    wins; the result never exceeds ``d`` and never drops below 1.
    """
    if n < 1 or d < 1:
        raise ValidationError("n and d must be positive")
    best = 1
    for h in range(1, d + 1):
        per_dest = n * h
        # d^h overflows quickly; stop computing it once it is clearly too large
        shared = h * d ** h if h * math.log(d) < 64 else math.inf
        if min(per_dest, shared) <= mem_entries:
            best = h
    return best


def regime_bound(n: int, rule: str = "strict") -> float:
    """Smallest degree inside the modelled regime for ``n`` ToRs.

    ``"strict"`` is ``2 (ln n + 5)``; ``"loose"`` is ``2 ln n + 5``.
    """
    if rule == "strict":
        return 2 * (math.log(n) + 5)
    if rule == "loose":
        return 2 * math.log(n) + 5
    raise ValidationError("regime rule must be 'strict' or 'loose'")


def tor_oversub(P: int, d: int) -> float:
    """Server-facing over fabric-facing ports of a ToR."""
    return (P - d) / d


@dataclass
class DesignSpec:
    s: int
    P: int
    r_e: float
    r_t: float
    d: int | None = None
    n: int | None = None
    h: int | None = None
    p: int | None = None
    predicted_mesh_oversub: float | None = None
    mesh_target: float | None = None
    feasible: bool = False
    regime: str = "strict"
    audit: list[str] = field(default_factory=list)

    @property
    def result(self) -> tuple:
        return (self.d, self.n, self.h, self.p, self.predicted_mesh_oversub)

    def check(self) -> None:
        """Re-verify the three sizing constraints on a feasible design."""
        if not self.feasible:
            return
        d, n, P = self.d, self.n, self.P
        if d < math.ceil(P / (self.r_t + 1)):
            raise Infeasible("ToR oversubscription", f"d={d} below ceil(P/(r_t+1))")
        if d < regime_bound(n, self.regime):
            raise Infeasible("regime", f"d={d} below the {self.regime} regime bound")
        if d >= P:
            raise Infeasible("server ports", f"d={d} leaves no server port")
        if n != math.ceil(self.s / (P - d)):
            raise Infeasible("ToR count", f"n={n} does not match ceil(s/(P-d))")

    def as_text(self) -> str:
        lines = [f"servers = {self.s}", f"ports = {self.P}", f"r_e = {self.r_e}", f"r_t = {self.r_t}",
                 f"feasible = {self.feasible}"]
        if self.feasible:
            lines += [f"d = {self.d}", f"n = {self.n}", f"h = {self.h}", f"p = {self.p}",
                      f"mesh_target = {self.mesh_target:.4f}",
                      f"predicted_mesh_oversub = {self.predicted_mesh_oversub:.4f}"]
        lines += [f"# {a}" for a in self.audit]
        return "\n".join(lines) + "\n"


def _oversub_by_p(n: int, d: int, h: int) -> dict[int, float]:
    """Model oversubscription for every integer ``p`` in ``[n/d^2, d]`` that the model covers."""
    lo = max(2, math.ceil(n / d ** 2))
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        for p in range(lo, d + 1):
            try:
                out[p] = model_oversub(n, d, p, h).oversub
            except (NotModeled, ValidationError):
                continue
    return out


def _evaluate(s: int, P: int, r_e: float, d: int, mem: int, mesh_target_fn):
    n = math.ceil(s / (P - d))
    h = max_h(n, d, mem)
    table = _oversub_by_p(n, d, h)
    target = mesh_target_fn(d)
    ok = [p for p, r in table.items() if r <= target]
    if not table:
        return n, h, target, None, None, "no p covered by the model"
    lo, hi = min(table.values()), max(table.values())
    if not ok:
        return n, h, target, None, None, f"mesh oversub range [{lo:.3f}, {hi:.3f}] misses target {target:.3f}"
    p = max(ok)
    return n, h, target, p, table[p], f"range [{lo:.3f}, {hi:.3f}] reaches target {target:.3f}"


def design_fabric(s: int, P: int, r_e: float, r_t: float, ecmp_mem: int = DEFAULT_ECMP_MEMORY,
                  mesh_target: str = "tor", regime: str = "strict") -> DesignSpec:
    """Fewest ToRs that connect ``s`` servers within both oversubscription targets.

    ``mesh_target`` picks how much oversubscription the mesh may add:
    ``"ratio"`` uses ``r_e / r_t``; ``"tor"`` (default) uses ``r_e`` over the
    ToR layer's actual ratio ``(P - d) / d``, which equals ``r_e / r_t`` at the
    smallest allowed ``d`` and lets ToRs with spare fabric ports carry a
    more oversubscribed mesh.
    """
    if P < 4:
        raise ValidationError("need at least 4 ports per switch")
    if not 0 < r_t <= r_e:
        raise ValidationError("need 0 < r_t <= r_e")
    if s < 1:
        raise ValidationError("need at least one server")
    if mesh_target not in ("tor", "ratio"):
        raise ValidationError("mesh_target must be 'tor' or 'ratio'")
    regime_bound(2, regime)
    spec = DesignSpec(s=s, P=P, r_e=r_e, r_t=r_t, regime=regime)
    if mesh_target == "ratio":
        def target_fn(d):
            return r_e / r_t
    else:
        def target_fn(d):
            return r_e / tor_oversub(P, d)

    d_tor = math.ceil(P / (r_t + 1))
    if d_tor >= P:
        raise Infeasible("ToR oversubscription", f"r_t={r_t} needs d >= {d_tor} but P={P}")
    if r_t < 1:
        raise ValidationError("need 1 <= r_t")
    # both sides of the regime bound grow with d, so scan up from the ToR bound
    d_lo = d_tor
    while d_lo < P and d_lo < regime_bound(math.ceil(s / (P - d_lo)), regime):
        d_lo += 1
    if d_lo >= P:
        raise Infeasible("regime", f"no d < {P} stays inside the {regime} regime bound for s={s}")
    spec.audit.append(f"d range [{d_lo}, {P - 1}] (ToR bound {d_tor}, regime bound applied)")

    cache = {}

    def viable(d):
        if d not in cache:
            cache[d] = _evaluate(s, P, r_e, d, ecmp_mem, target_fn)
            spec.audit.append(f"d={d}: n={cache[d][0]} h={cache[d][1]} {cache[d][5]}")
        return cache[d][3] is not None

    lo, hi = d_lo, P - 1
    if not viable(hi):
        # targets are usually monotone in d; fall back to a scan before giving up
        found = [d for d in range(d_lo, P - 1) if viable(d)]
        if not found:
            raise Infeasible("mesh oversubscription", f"no d in [{d_lo}, {P - 1}] reaches r_e={r_e}")
        hi = found[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if viable(mid):
            hi = mid
        else:
            lo = mid + 1
    d = lo
    viable(d)
    n, h, target, p, r, _ = cache[d]
    spec.d, spec.n, spec.h, spec.p = d, n, h, p
    spec.predicted_mesh_oversub = r
    spec.mesh_target = target
    spec.feasible = True
    spec.check()
    return spec


@dataclass(frozen=True)
class FatTreeCounts:
    tor: int
    agg: int
    spine: int

    @property
    def total(self) -> int:
        return self.tor + self.agg + self.spine


def _split_ports(P: int, oversub: float, lanes: int = 3) -> tuple[Fraction, Fraction]:
    """Down and up port budget of an aggregation switch for a given ratio."""
    ratio = Fraction(oversub).limit_denominator(1000)
    down = Fraction(P) * ratio / (ratio + 1)
    up = Fraction(P) - down
    if (down * lanes).denominator != 1:
        raise InfeasibleRatio(f"{oversub}:1 cannot split {P} ports even with {lanes}-way breakout")
    return down, up


def fat_tree_design(s: int, P: int, oversub: float) -> FatTreeCounts:
    """Switch counts of a 3-tier fat tree with non-oversubscribed ToRs.

    ToRs use half their ports for servers. Aggregation switches carry the
    oversubscription (``oversub`` times more ports down than up); spines use
    every port downward. Each layer is rounded up on its own.
    """
    if P < 4 or P % 2:
        raise ValidationError("need an even port count >= 4")
    if oversub < 1:
        raise InfeasibleRatio("oversubscription below 1:1")
    if s < 1:
        raise ValidationError("need at least one server")
    down, up = _split_ports(P, oversub)
    tor = math.ceil(s / (P // 2))
    tor_up = tor * (P // 2)
    agg = math.ceil(tor_up / down)
    spine = math.ceil(agg * up / P)
    return FatTreeCounts(tor, agg, spine)


def max_fat_tree_servers(P: int) -> int:
    """Servers of the largest non-blocking 3-tier fat tree."""
    return P ** 3 // 4


def cost_reduction(s: int, P: int, oversub: float, ecmp_mem: int = DEFAULT_ECMP_MEMORY,
                   regime: str = "strict") -> float:
    """Percent fewer switches for the Spraypoint fabric than the fat tree."""
    tree = fat_tree_design(s, P, oversub)
    mesh = design_fabric(s, P, oversub, 1.0, ecmp_mem, regime=regime)
    return 100.0 * (1.0 - mesh.n / tree.total)


def cost_curve(P: int, oversubs=(1, 2, 3, 5), fractions=(1.0, 0.5, 0.25),
               ecmp_mem: int = DEFAULT_ECMP_MEMORY, regime: str = "strict") -> list[dict]:
    """Reduction for each oversubscription at full, half and quarter fat-tree scale."""
    rows = []
    full = max_fat_tree_servers(P)
    for frac in fractions:
        s = int(full * frac)
        for r in oversubs:
            tree = fat_tree_design(s, P, r)
            mesh = design_fabric(s, P, r, 1.0, ecmp_mem, regime=regime)
            rows.append({"ports": P, "servers": s, "oversub": r, "fat_tree": tree.total, "tor": tree.tor,
                         "agg": tree.agg, "spine": tree.spine, "mesh_tors": mesh.n, "d": mesh.d,
                         "h": mesh.h, "p": mesh.p,
                         "reduction_pct": 100.0 * (1.0 - mesh.n / tree.total)})
    return rows
