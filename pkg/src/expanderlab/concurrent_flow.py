"""Path-restricted maximum concurrent flow.

The solver minimises the largest arc congestion needed to route every demand
in full over its allowed paths; the concurrent-flow fraction is the inverse.

It treats the problem as a bilinear game: the router picks, per commodity, a
split of its demand over its paths (a point in a simplex) and an adversary
picks a probability distribution over arcs. The payoff is the adversary's
expected arc utilisation. Primal-dual (Chambolle-Pock) steps with Euclidean
simplex projections drive both sides toward the saddle point, with periodic
restarts from the running average.

Both sides are certified independently at every check:

* the router's split gives a feasible routing, so its max utilisation is an
  upper bound on the optimum;
* any arc distribution ``y`` gives the weak-duality lower bound
  ``sum_j dem_j * dist_j(y / cap)``.

The loop stops once ``upper * (1 - eps) <= lower``. No LP solver is involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit
from .errors import NonConvergence, NoPath, ValidationError


@njit
def _project_blocks(v, bounds, out):
    """Euclidean projection of each block ``v[bounds[j]:bounds[j+1]]`` onto the unit simplex."""
    for j in range(len(bounds) - 1):
        a = bounds[j]
        b = bounds[j + 1]
        s = np.sort(v[a:b])
        css = 0.0
        theta = 0.0
        for k in range(b - a):
            val = s[b - a - 1 - k]
            css += val
            cand = (css - 1.0) / (k + 1)
            if val > cand:
                theta = cand
        for k in range(a, b):
            z = v[k] - theta
            out[k] = z if z > 0.0 else 0.0


@njit
def _utilisation(cp, ap, arcs, dem, cap, f, u):
    """Arc utilisation ``load / cap`` when commodity ``j`` splits ``dem[j]`` by ``f``."""
    u[:] = 0.0
    for j in range(len(dem)):
        for p in range(cp[j], cp[j + 1]):
            flow = dem[j] * f[p]
            if flow != 0.0:
                for k in range(ap[p], ap[p + 1]):
                    u[arcs[k]] += flow
    for e in range(len(u)):
        u[e] /= cap[e]


@njit
def _path_prices(cp, ap, arcs, dem, cap, y, g):
    """Adjoint of ``_utilisation``: price of each path under arc weights ``y``."""
    for j in range(len(dem)):
        for p in range(cp[j], cp[j + 1]):
            s = 0.0
            for k in range(ap[p], ap[p + 1]):
                e = arcs[k]
                s += y[e] / cap[e]
            g[p] = dem[j] * s


@njit
def _dual_bound(cp, ap, arcs, dem, cap, length):
    """Weak-duality lower bound on the optimal congestion for arc lengths ``length``."""
    num = 0.0
    for j in range(len(dem)):
        bestlen = np.inf
        for p in range(cp[j], cp[j + 1]):
            l = 0.0
            for k in range(ap[p], ap[p + 1]):
                l += length[arcs[k]]
            if l < bestlen:
                bestlen = l
        num += dem[j] * bestlen
    den = 0.0
    for e in range(len(cap)):
        den += cap[e] * length[e]
    if den <= 0.0:
        return 0.0
    return num / den


@dataclass
class PathSystem:
    """Flat description of commodities and their candidate paths.

    Commodity ``j`` owns paths ``cp[j]:cp[j+1]``; path ``p`` uses arcs
    ``arcs[ap[p]:ap[p+1]]`` (indices into ``cap``).
    """

    cap: np.ndarray
    dem: np.ndarray
    cp: np.ndarray
    ap: np.ndarray
    arcs: np.ndarray

    @property
    def hop_counts(self) -> np.ndarray:
        return np.diff(self.ap)

    @property
    def num_paths(self) -> int:
        return len(self.ap) - 1

    def validate(self) -> None:
        if np.any(self.cap <= 0):
            raise ValidationError("arc capacities must be positive")
        if np.any(self.dem < 0):
            raise ValidationError("demands must be non-negative")
        empty = np.flatnonzero(np.diff(self.cp) == 0)
        if len(empty):
            raise NoPath(f"commodities without paths: {empty[:10].tolist()}")

    def utilisation(self, path_flow: np.ndarray) -> np.ndarray:
        """Arc utilisation for absolute per-path flows."""
        load = np.bincount(self.arcs, weights=np.repeat(path_flow, self.hop_counts), minlength=len(self.cap))
        return load / self.cap


@dataclass
class SolveResult:
    congestion: float
    lower_bound: float
    path_flow: np.ndarray
    load: np.ndarray
    iterations: int
    converged: bool


def _operator_norm(system: PathSystem, iters: int = 30) -> float:
    cp, ap, arcs, dem, cap = system.cp, system.ap, system.arcs, system.dem, system.cap
    f = np.random.default_rng(12345).random(system.num_paths)
    u = np.empty(len(cap))
    g = np.empty(system.num_paths)
    est = 0.0
    for _ in range(iters):
        nf = np.linalg.norm(f)
        if nf == 0:
            break
        f /= nf
        _utilisation(cp, ap, arcs, dem, cap, f, u)
        _path_prices(cp, ap, arcs, dem, cap, u, g)
        est = math.sqrt(np.linalg.norm(g))
        f = g.copy()
    return est


def solve_min_congestion(system: PathSystem, eps: float = 0.05, max_iter: int = 20000,
                         step_ratio: float | None = None, check_every: int = 50,
                         raise_on_stall: bool = True) -> SolveResult:
    """Route all demands over their paths minimising the worst arc congestion.

    Stops when ``congestion * (1 - eps) <= lower_bound``. ``step_ratio`` sets
    the router-to-adversary step balance; the default scales with the square
    root of (commodities x arcs), which keeps both sides moving at comparable
    relative speed.
    """
    if not 0 < eps <= 0.2:
        raise ValidationError("eps must lie in (0, 0.2]")
    system.validate()
    cap = system.cap.astype(np.float64)
    dem = system.dem.astype(np.float64)
    cp, ap, arcs = system.cp, system.ap, system.arcs
    m = len(cap)
    num_paths = system.num_paths
    f = np.repeat(1.0 / np.diff(cp), np.diff(cp))
    u = np.empty(m)
    if dem.sum() <= 0:
        return SolveResult(0.0, 0.0, np.zeros(num_paths), np.zeros(m), 0, True)

    best_c = np.inf
    best_lb = 0.0
    best_f = f.copy()

    def certify(ff, yy):
        nonlocal best_c, best_lb, best_f
        _utilisation(cp, ap, arcs, dem, cap, ff, u)
        c = float(u.max())
        lb = _dual_bound(cp, ap, arcs, dem, cap, yy / cap)
        if c < best_c:
            best_c = c
            best_f = ff.copy()
        best_lb = max(best_lb, lb)
        return c, lb

    def finish(it, ok):
        flow = best_f * np.repeat(dem, np.diff(cp))
        load = system.utilisation(flow) * cap
        return SolveResult(best_c, min(best_lb, best_c), flow, load, it, ok)

    # every path has one or more hops, so the router's uniform start is also a
    # cheap first certificate
    y = np.full(m, 1.0 / m)
    certify(f, y)
    if best_c * (1 - eps) <= best_lb:
        return finish(0, True)

    norm = 1.1 * _operator_norm(system)
    ratio = step_ratio if step_ratio is not None else 0.15 * math.sqrt(len(dem) * m)
    tau = ratio / norm
    sigma = 1.0 / (ratio * norm)
    simplex = np.array([0, m], dtype=np.int64)
    g = np.empty(num_paths)
    f_next = np.empty(num_paths)
    y_next = np.empty(m)
    f_sum = np.zeros(num_paths)
    y_sum = np.zeros(m)
    count = 0
    for it in range(1, max_iter + 1):
        _path_prices(cp, ap, arcs, dem, cap, y, g)
        _project_blocks(f - tau * g, cp, f_next)
        f_bar = 2.0 * f_next - f
        f, f_next = f_next, f
        _utilisation(cp, ap, arcs, dem, cap, f_bar, u)
        _project_blocks(y + sigma * u, simplex, y_next)
        y, y_next = y_next, y
        f_sum += f
        y_sum += y
        count += 1
        if it % check_every == 0:
            c_last, lb_last = certify(f, y)
            f_avg, y_avg = f_sum / count, y_sum / count
            c_avg, lb_avg = certify(f_avg, y_avg)
            if best_c * (1 - eps) <= best_lb:
                return finish(it, True)
            # restart from whichever point has the smaller gap
            if c_avg - lb_avg < c_last - lb_last:
                f, y = f_avg, y_avg
            f_sum[:] = 0.0
            y_sum[:] = 0.0
            count = 0
    if raise_on_stall:
        raise NonConvergence(f"congestion {best_c:.4f} vs bound {best_lb:.4f} after {max_iter} iterations")
    return finish(max_iter, False)
