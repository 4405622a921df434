"""Entropy-accumulation rate machinery: the crossover function g and its
tangent construction, the finite-size certified rate and its optimization
over the tangent point, completeness error, rate-vs-n curves, and
min-entropy of seed-source histograms.

All logarithms and entropies are base 2; rates are bits per trial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

LOG2_13 = math.log2(13.0)
# upper edge of the entropy branch of g: p/q = (2 + sqrt 2)/4
G_UPPER = (2.0 + math.sqrt(2.0)) / 4.0
G_LOWER = 0.75

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def binary_entropy(x: float) -> float:
    """Base-2 binary entropy, with h(0) = h(1) = 0."""
    if x < 0.0 or x > 1.0:
        raise ValueError(f"binary entropy argument outside [0,1]: {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -(x * math.log2(x) + (1.0 - x) * math.log2(1.0 - x))


def _ratio(p: float, q: float) -> float:
    if not (0.0 < q <= 1.0):
        raise ValueError(f"q must lie in (0, 1], got {q}")
    u = p / q
    if u < G_LOWER - 1e-12 or u > 1.0 + 1e-12:
        raise ValueError(f"p/q = {u} outside the g domain [3/4, 1]")
    return min(max(u, G_LOWER), 1.0)


def g_fn(p: float, q: float) -> float:
    """Per-trial entropy crossover at winning probability ``p`` with test
    probability ``q``: ``1 - h(1/2 + 1/2*sqrt(16 u (u-1) + 3))`` for
    u = p/q up to (2+sqrt 2)/4, and exactly 1 beyond."""
    u = _ratio(p, q)
    if u >= G_UPPER:
        return 1.0
    rad = 16.0 * u * (u - 1.0) + 3.0
    if rad < 0.0:  # float fuzz just above u = 3/4
        rad = 0.0
    return 1.0 - binary_entropy(0.5 + 0.5 * math.sqrt(rad))


def g_prime(p: float, q: float) -> float:
    """Analytic derivative dg/dp.  Finite at u = 3/4 (limit 8(2u-1)/(q ln 2)),
    zero on the flat branch, and diverging as u approaches (2+sqrt 2)/4."""
    u = _ratio(p, q)
    if u >= G_UPPER:
        return 0.0
    rad = 16.0 * u * (u - 1.0) + 3.0
    if rad < 0.0:
        rad = 0.0
    v = math.sqrt(rad)
    if v == 0.0:
        return 8.0 * (2.0 * u - 1.0) / (q * math.log(2.0))
    # d/du of 1 - h((1+v)/2) = log2((1+v)/(1-v)) * 4(2u-1)/v
    return (4.0 * (2.0 * u - 1.0) / (v * q)) * (math.log1p(v) - math.log1p(-v)) / math.log(2.0)


def f_min_fn(p: float, p_t: float, q: float) -> float:
    """Min-tradeoff crossover: ``g`` below the tangent point ``p_t`` and the
    tangent line of g at ``p_t`` above it."""
    if p <= p_t:
        return g_fn(p, q)
    slope = g_prime(p_t, q)
    return slope * p + (g_fn(p_t, q) - slope * p_t)


@dataclass(frozen=True)
class RateParams:
    """Inputs to the certified-rate computation."""

    n: int
    q: float
    omega_win: float
    eps_s: float
    eps_ea: float
    delta_est: float
    t_e: int = 100

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not (0.0 < self.q <= 1.0):
            raise ValueError(f"q must lie in (0, 1], got {self.q}")
        if not (0.0 <= self.omega_win <= 1.0):
            raise ValueError(f"omega_win must lie in [0, 1], got {self.omega_win}")
        for name in ("eps_s", "eps_ea", "delta_est"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.t_e < 1:
            raise ValueError(f"t_e must be positive, got {self.t_e}")
        p = self.omega_win * self.q - self.delta_est
        if not (p <= self.q):
            raise ValueError("omega_win*q - delta_est exceeds q")
        if 1.0 - 2.0 * math.log2(self.eps_s * self.eps_ea) <= 0.0:
            raise ValueError("eps_s*eps_ea too large: 1 - 2 log2(eps_s*eps_ea) <= 0")

    @classmethod
    def from_jbar(cls, n: int, jbar: float, *, q: float = 1.0, eps_s: float,
                  eps_ea: float, delta_est: float, t_e: int = 100) -> "RateParams":
        return cls(n=n, q=q, omega_win=jbar + 0.75, eps_s=eps_s, eps_ea=eps_ea,
                   delta_est=delta_est, t_e=t_e)

    @property
    def p_observed(self) -> float:
        """Winning-probability argument fed to the rate: omega_win*q - delta_est."""
        return self.omega_win * self.q - self.delta_est

    @property
    def soundness(self) -> float:
        return self.eps_s + self.eps_ea + 2.0 ** (-self.t_e)


@dataclass(frozen=True)
class RateResult:
    """Output of the rate optimization."""

    rate: float
    p_t_star: float
    hmin_bound: float
    extractable_bits: int
    soundness: float

    def __post_init__(self):
        if not (0.0 <= self.rate <= 1.0):
            raise ValueError(f"rate outside [0, 1]: {self.rate}")
        if self.extractable_bits > self.hmin_bound:
            raise ValueError("extractable_bits exceeds hmin_bound")


def rate_fn(p: float, p_t: float, params: RateParams) -> float:
    """Finite-size certified rate at winning probability ``p`` and tangent
    point ``p_t``.  May be negative; callers clamp for planning."""
    correction = (2.0 / math.sqrt(params.n)) * (LOG2_13 + g_prime(p_t, params.q)) \
        * math.sqrt(1.0 - 2.0 * math.log2(params.eps_s * params.eps_ea))
    return f_min_fn(p, p_t, params.q) - correction


def r_opt(params: RateParams, *, tol: float = 1e-9) -> RateResult:
    """Maximize the finite-size rate over the tangent point.

    The tangent point ranges over the open interval
    ``3/4 < p_t/q < (2+sqrt 2)/4``; a 1024-point grid seeds a golden-section
    refinement to absolute tolerance ``tol`` in p_t/q.  Negative optima
    clamp to rate 0.
    """
    p = params.p_observed
    q = params.q
    if p <= G_LOWER * q:
        # no violation beyond the classical bound: nothing certifiable
        return RateResult(rate=0.0, p_t_star=math.nan, hmin_bound=0.0,
                          extractable_bits=0, soundness=params.soundness)

    lo, hi = G_LOWER * q, G_UPPER * q
    span = hi - lo
    grid = np.linspace(lo + span * 1e-6, hi - span * 1e-6, 1024)
    vals = [rate_fn(p, pt, params) for pt in grid]
    k = int(np.argmax(vals))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, len(grid) - 1)]

    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = rate_fn(p, c, params)
    fd = rate_fn(p, d, params)
    while b - a > tol * q:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = rate_fn(p, c, params)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = rate_fn(p, d, params)
    p_t_star = 0.5 * (a + b)
    best = rate_fn(p, p_t_star, params)

    rate = max(0.0, best)
    hmin = params.n * rate
    extractable = max(0, math.floor(hmin) - params.t_e)
    return RateResult(rate=rate, p_t_star=float(p_t_star), hmin_bound=hmin,
                      extractable_bits=extractable, soundness=params.soundness)


def asymptotic_rate(params: RateParams) -> float:
    """Infinite-trial rate limit ``g(omega_win * q)`` (all finite-size
    corrections and the confidence width vanish)."""
    p = params.omega_win * params.q
    if p <= G_LOWER * params.q:
        return 0.0
    return g_fn(p, params.q)


def completeness_error(n: int, delta_est: float) -> float:
    """Upper bound exp(-2 n delta_est^2) on the honest-abort probability."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not (0.0 <= delta_est < 1.0):
        raise ValueError(f"delta_est must lie in [0, 1), got {delta_est}")
    return math.exp(-2.0 * n * delta_est * delta_est)


@dataclass(frozen=True)
class RateCurvePoint:
    n: int
    rate: float
    total_bits: int


def rate_curve(params: RateParams, n_list: Sequence[int]) -> list[RateCurvePoint]:
    """Certified total bits versus trial count with the finite-data scaling
    rules eps_s = eps_ea = 1/sqrt(n) and delta_est = sqrt(10/n)."""
    if len(n_list) == 0:
        raise ValueError("n_list must be non-empty")
    points = []
    for n in n_list:
        n = int(n)
        eps = 1.0 / math.sqrt(n)
        scaled = RateParams(n=n, q=params.q, omega_win=params.omega_win,
                            eps_s=eps, eps_ea=eps,
                            delta_est=math.sqrt(10.0 / n), t_e=params.t_e)
        res = r_opt(scaled)
        points.append(RateCurvePoint(n=n, rate=res.rate, total_bits=res.extractable_bits))
    return points


def min_entropy_from_histogram(hist: Mapping | Sequence | np.ndarray) -> float:
    """Min-entropy ``-log2(max frequency)`` of an observed symbol histogram."""
    if isinstance(hist, Mapping):
        counts = np.fromiter(hist.values(), dtype=np.float64)
    else:
        counts = np.asarray(hist, dtype=np.float64)
    if counts.size == 0:
        raise ValueError("empty histogram")
    if (counts < 0).any():
        raise ValueError("histogram counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("histogram total must be positive")
    return float(-math.log2(counts.max() / total)) + 0.0
