"""Exact one-dimensional Wasserstein-1 distances and log-log rate fits.

In one dimension W1 is the L1 distance between CDFs, so the distance from an
empirical sample to a centered Gaussian is an explicit piecewise integral:
between consecutive order statistics the empirical CDF is constant and
|c - Phi| integrates in closed form through the Gaussian CDF primitive.
The Gaussian CDF/quantile come from scipy.special (Cephes erfc rational
approximations, relative error ~1e-15), keeping thresholds bit-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, ndtri

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _cdf_primitive(x: np.ndarray, sigma: float) -> np.ndarray:
    """P(a) = integral of Phi_sigma from -inf to a = sigma*(phi(z) + z*Phi(z))."""
    z = x / sigma
    return sigma * (np.exp(-0.5 * z * z) / _SQRT2PI + z * ndtr(z))


def w1_to_gaussian(sample, sigma2: float) -> float:
    """Exact W1 between the empirical law of the sample and N(0, sigma2)."""
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    x = np.sort(np.asarray(sample, dtype=np.float64))
    n = len(x)
    if n == 0:
        raise ValueError("empty sample")
    sigma = math.sqrt(sigma2)
    z_first, z_last = x[0] / sigma, x[-1] / sigma
    left = sigma * (math.exp(-0.5 * z_first * z_first) / _SQRT2PI
                    + z_first * ndtr(z_first))
    right = sigma * (math.exp(-0.5 * z_last * z_last) / _SQRT2PI
                     - z_last * ndtr(-z_last))
    if n == 1:
        return left + right
    a, b = x[:-1], x[1:]
    c = np.arange(1, n) / n
    q = sigma * ndtri(c)
    Pa, Pb, Pq = (_cdf_primitive(a, sigma), _cdf_primitive(b, sigma),
                  _cdf_primitive(q, sigma))
    above = Pb - Pa - c * (b - a)          # Phi >= c on the whole piece
    below = c * (b - a) - (Pb - Pa)        # Phi <= c on the whole piece
    split = (c * (q - a) - (Pq - Pa)) + (Pb - Pq - c * (b - q))
    pieces = np.where(q <= a, above, np.where(q >= b, below, split))
    return float(left + right + pieces.sum())


def w1_empirical(a, b) -> float:
    """W1 between two empirical samples: mean absolute difference of order
    statistics (quantile-interpolated when the sizes differ)."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty sample")
    if len(a) != len(b):
        n = max(len(a), len(b))
        grid = (np.arange(n) + 0.5) / n
        a = np.quantile(a, grid)
        b = np.quantile(b, grid)
    return float(np.mean(np.abs(a - b)))


def bootstrap_se(sample, sigma2: float, n_boot: int = 200,
                 seed: int = 0) -> float:
    """Bootstrap standard error of the plug-in W1 estimate."""
    x = np.asarray(sample, dtype=np.float64)
    rng = np.random.default_rng(seed)
    vals = np.empty(n_boot)
    n = len(x)
    for k in range(n_boot):
        vals[k] = w1_to_gaussian(x[rng.integers(0, n, n)], sigma2)
    return float(vals.std(ddof=1))


@lru_cache(maxsize=1)
def _floor_constant() -> float:
    # E W1(F_n, Phi) ~ c0/sqrt(n) for standard normal samples:
    # c0 = integral of sqrt(2 Phi(z)(1-Phi(z)) / pi) dz
    val, _ = quad(lambda z: math.sqrt(2.0 * ndtr(z) * ndtr(-z) / math.pi),
                  -12.0, 12.0, epsabs=1e-12, epsrel=1e-12)
    return val


def gaussian_w1_floor(n: int, sigma2: float) -> float:
    """Asymptotic mean of the plug-in estimate when the sample IS the target:
    the resolution floor of a rate experiment with n replications."""
    return math.sqrt(sigma2) * _floor_constant() / math.sqrt(n)


@dataclass(frozen=True)
class RateFit:
    """Weighted log-log fit of distance against horizon."""

    points: tuple[tuple[float, float, float], ...]   # (horizon, dw, se)
    slope: float
    slope_se: float
    intercept: float

    @property
    def c_estimate(self) -> float:
        return math.exp(self.intercept)


def fit_rate(points) -> RateFit:
    """Weighted least squares of log(distance) on log(horizon).

    Weights are the delta-method variances (se/d)^-2; exact synthetic inputs
    (se = 0) fall back to an unweighted fit.
    """
    pts = tuple((float(h), float(d), float(se)) for h, d, se in points)
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(d <= 0.0 for _, d, _ in pts):
        raise ValueError("distances must be positive")
    x = np.log([h for h, _, _ in pts])
    y = np.log([d for _, d, _ in pts])
    se = np.array([s for _, _, s in pts])
    d = np.array([dd for _, dd, _ in pts])
    if np.any(se <= 0.0):
        w = np.ones_like(x)
    else:
        w = (d / se) ** 2
    sw, swx, swxx = w.sum(), (w * x).sum(), (w * x * x).sum()
    swy, swxy = (w * y).sum(), (w * x * y).sum()
    det = sw * swxx - swx * swx
    intercept = (swxx * swy - swx * swxy) / det
    slope = (sw * swxy - swx * swy) / det
    slope_se = math.sqrt(max(sw / det, 0.0))
    return RateFit(pts, float(slope), float(slope_se), float(intercept))
