"""Closed-form predictions for Spraypoint fabrics and incremental cabling.

Everything here is a pure function of its arguments. Out-of-regime inputs
produce a ``RegimeWarning`` and a best-effort number.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .algorithms import max_bipartite_matching
from .errors import NoRoot, NotModeled, ValidationError
from .randomness import make_rng
from .spraypoint import default_level_count


class RegimeWarning(UserWarning):
    """Parameters fall outside the range where the models are expected to hold."""


@dataclass(frozen=True)
class ModelParams:
    n: int
    d: int
    p: int
    h: int
    ell: int | None = None

    def __post_init__(self):
        if self.ell is None:
            object.__setattr__(self, "ell", default_level_count(self.n, self.d, self.p))

    @property
    def lam(self) -> float:
        """Expected number of inner-ring hits per node, ``p^ell d^2 / n``."""
        return self.p ** self.ell * self.d ** 2 / self.n

    def regime_issues(self) -> list[str]:
        issues = []
        if self.d < 2 * (math.log(self.n) + 5):
            issues.append(f"d={self.d} below 2(ln n + 5)={2 * (math.log(self.n) + 5):.1f}")
        if self.d * 4 > self.n:
            issues.append(f"d={self.d} not much smaller than n={self.n}")
        if self.p < (self.n / self.d ** 2) ** (1.0 / self.ell):
            issues.append(f"p={self.p} below (n/d^2)^(1/ell)")
        if self.h >= self.d:
            issues.append(f"h={self.h} not below d={self.d}")
        return issues

    def warn_if_outside(self) -> None:
        for msg in self.regime_issues():
            warnings.warn(msg, RegimeWarning, stacklevel=3)


def model_edge_disjoint(d: float, p: float, h: float, source_is_neighbor: bool) -> float:
    """Predicted number of edge-disjoint Spraypoint paths between a pair."""
    if not 0 <= p < d or h < 1:
        raise ValidationError("need 0 <= p < d and h >= 1")
    if not source_is_neighbor:
        return d * (1.0 - math.exp(-h))
    return min(d - p, d * (1.0 - math.exp(-(1.0 - p / d) * h)))


def model_path_length(n: int, d: int, p: int, ell: int | None = None) -> dict[int, float]:
    """Fraction of Spraypoint paths of each length ``1..ell+4``."""
    if ell is None:
        ell = default_level_count(n, d, p)
    ModelParams(n, d, p, 1, ell).warn_if_outside()
    frac = {1: 1.0 / n}
    for i in range(2, ell + 3):
        frac[i] = p ** (i - 2) * d / n
    frac[ell + 4] = math.exp(-(p ** ell) * d * d / n)
    frac[ell + 3] = 1.0 - sum(frac.values())
    if frac[ell + 3] < 0:
        frac[ell + 3] = 0.0
    total = sum(frac.values())
    return {i: frac[i] / total for i in sorted(frac)}


@dataclass(frozen=True)
class OversubBreakdown:
    mu2: float
    mu3: float
    mu4: float
    mu5: float
    phi3: float
    kappa3: float
    sigma4: float
    sigma5: float
    beta: float
    oversub: float

    def as_text(self) -> str:
        return "".join(f"{k} = {v:.6g}\n" for k, v in asdict(self).items())


def kappa3_body(phi3: float) -> float:
    return (1 - phi3) ** 6 / 2 + (1 - phi3 ** 2) ** 3 / 6 + 1.0 / 3


def kappa3_expanded(phi3: float) -> float:
    a = (1 - phi3) ** 6
    b = (1 - phi3 ** 2) ** 3
    return a + (b - a) / 2 + (1 - b) / 3


def model_oversub(n: int, d: int, p: int, h: int, ell: int | None = None,
                  mu5_prefactor: str = "sigma5") -> OversubBreakdown:
    """Oversubscription estimate for single-level fabrics.

    ``mu5_prefactor`` picks the factor in front of the length-5 share:
    ``"sigma5"`` (``exp(-p d^2 / n)``, the default) or ``"sigma4"``.
    """
    if ell is None:
        ell = default_level_count(n, d, p)
    if ell != 1:
        raise NotModeled(f"oversubscription model covers ell = 1 only (got {ell})")
    if mu5_prefactor not in ("sigma5", "sigma4"):
        raise ValidationError("mu5_prefactor must be 'sigma5' or 'sigma4'")
    ModelParams(n, d, p, h, ell).warn_if_outside()
    mu2 = d / n
    # (4d/n)^h is meant to be a small correction; far outside the regime the
    # base passes 1, so cap it there rather than let the power blow up
    miss = min(4 * mu2, 1.0) ** h
    phi3 = min(p * mu2, 1 - mu2) * (1 - mu2) * (1 - miss)
    kappa3 = kappa3_body(phi3)
    mu3 = phi3 * kappa3
    sigma4 = 1 - (p + 1) * d / n - math.exp(-p * d * d / n)
    sigma5 = math.exp(-p * d * d / n)
    beta = 1 - (1 - (1 - 2 * mu2) * (1 - miss)) ** h
    mu4 = sigma4 * beta * (1 - mu2 - 2 * mu3) / 4
    pref = sigma5 if mu5_prefactor == "sigma5" else sigma4
    mu5 = pref * (1 - mu2 - 2 * mu3 - 3 * mu4) / 5
    total = sum(max(m, 0.0) for m in (mu2, mu3, mu4, mu5))
    return OversubBreakdown(mu2=mu2, mu3=mu3, mu4=mu4, mu5=mu5, phi3=phi3, kappa3=kappa3,
                            sigma4=sigma4, sigma5=sigma5, beta=beta, oversub=1.0 / total)


def oversub_shortcut_h2(n: int, d: int, p: int) -> float:
    """``log_d(n/p) + 2``, a quick stand-in for the full model when ``h = 2``."""
    return math.log(n / p) / math.log(d) + 2


def _fm_equation(z: float, h: int) -> float:
    return (z / h) ** (1.0 / (h - 1)) + math.exp(-z) - 1.0


def frieze_mellsted_root(h: int, tol: float = 1e-14) -> float:
    """Largest non-negative root of ``(z/h)^(1/(h-1)) + exp(-z) - 1 = 0``."""
    if h < 2:
        raise ValidationError("h must be >= 2")
    hi = float(h)  # the equation is positive from z = h onwards
    if _fm_equation(hi, h) <= 0:
        raise NoRoot(f"no sign change above z = {hi} for h = {h}")
    # walk down to the last point where the function is negative
    grid = np.linspace(0.0, hi, 4001)[1:]
    vals = np.array([_fm_equation(z, h) for z in grid])
    neg = np.flatnonzero(vals < 0)
    if len(neg) == 0:
        raise NoRoot(f"equation never negative on (0, {hi}] for h = {h}")
    lo = grid[neg[-1]]
    hi = grid[neg[-1] + 1]
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _fm_equation(mid, h) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def frieze_mellsted_fraction(h: int) -> float:
    """Asymptotic maximum-matching fraction for h random choices per left node."""
    z = frieze_mellsted_root(h)
    ez = math.exp(-z)
    return 2 - (1 - ez) ** h - (1 + z) * ez


def random_matching_mu(left: int, right: int, h: int, trials: int, seed: int) -> float:
    """Monte-Carlo mean of (maximum matching size / right).

    Each left node draws ``h`` right neighbours uniformly with replacement.
    """
    if left < 1 or right < 1 or trials < 1 or h < 1:
        raise ValidationError("sizes, h and trials must be >= 1")
    total = 0.0
    for i in range(trials):
        rng = make_rng(seed, "random-matching", i)
        picks = rng.integers(0, right, size=(left, h))
        indptr = np.arange(0, left * h + 1, h, dtype=np.int64)
        size, _ = max_bipartite_matching(left, right, (indptr, picks.ravel()))
        total += size / right
    return total / trials


def _check_stages(stages) -> list[tuple[float, float]]:
    st = sorted((float(a), float(b)) for a, b in stages)
    if not st or st[0][0] != 0.0 or abs(st[-1][1] - 1.0) > 1e-12:
        raise ValidationError("stages must partition (0, 1]")
    for (a, b), (c, _) in zip(st, st[1:]):
        if abs(b - c) > 1e-12:
            raise ValidationError("stages must be contiguous")
    if any(b <= a for a, b in st):
        raise ValidationError("empty stage")
    return st


def incremental_avg_degree(t: float, stages, d: float) -> float:
    """Average router degree when a fraction ``t`` of routers has landed."""
    st = _check_stages(stages)
    for t1, t2 in st:
        if t1 < t <= t2 + 1e-12:
            if t1 == 0.0:
                return d * t / t2
            return d * (t1 / t + (t - t1) / t2)
    raise ValidationError(f"t={t} lies outside every stage")


def stage_min_degree(t1: float, t2: float, d: float) -> float:
    """Lowest average degree inside stage ``(t1, t2]``."""
    if not 0 < t1 <= t2 <= 1:
        raise ValidationError("need 0 < t1 <= t2 <= 1")
    x = t1 / t2
    return d * (2 * math.sqrt(x) - x)


def optimal_two_phase(alpha: float) -> tuple[float, float]:
    """Earliest compliance point and first-phase size for a two-phase first room."""
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    phase1 = (1 - math.sqrt(1 - alpha)) ** 2
    return alpha * phase1, phase1


def oversub_length_lower_bound(delta) -> float:
    """``sum_i i * delta_i`` for flow fractions ``delta`` keyed by path length."""
    items = delta.items() if isinstance(delta, dict) else enumerate(delta)
    items = [(int(i), float(x)) for i, x in items]
    if any(x < -1e-12 for _, x in items):
        raise ValidationError("negative flow fraction")
    total = sum(x for _, x in items)
    if abs(total - 1.0) > 1e-6:
        raise ValidationError(f"fractions sum to {total}, not 1")
    return sum(i * x for i, x in items)
