"""Kernels, link functions and the Hawkes model variants.

Specs are declarative and immutable; ``validate`` returns violations as data
(it never raises on bad parameters), and ``derived_constants`` computes the
Gaussian target variance where a closed form exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import quad


# ---------------------------------------------------------------------------
# polynomials on [0, 1] (used by the locally stationary baseline/reproduction)

def poly_eval(coeffs: tuple[float, ...], x: float) -> float:
    v = 0.0
    for c in reversed(coeffs):
        v = v * x + c
    return v


def poly_range_01(coeffs: tuple[float, ...]) -> tuple[float, float]:
    """Exact (min, max) of a polynomial over [0, 1] via stationary points."""
    cand = [poly_eval(coeffs, 0.0), poly_eval(coeffs, 1.0)]
    if len(coeffs) > 2:
        deriv = [k * c for k, c in enumerate(coeffs)][1:]
        for r in np.roots(list(reversed(deriv))):
            if abs(r.imag) < 1e-12 and 0.0 < r.real < 1.0:
                cand.append(poly_eval(coeffs, float(r.real)))
    return min(cand), max(cand)


def _signed_poly_integral(coeffs, lo, hi, weight_t=False, absolute=True):
    """integral of |p| (or t|p|) over [lo, hi], splitting at real roots."""
    if hi <= lo:
        return 0.0
    roots = sorted(
        float(r.real) for r in np.roots(list(reversed(coeffs)) or [0.0])
        if abs(r.imag) < 1e-12 and lo < r.real < hi
    ) if any(coeffs) else []
    anti = [0.0] + [c / (k + 1) for k, c in enumerate(coeffs)]
    anti_t = [0.0, 0.0] + [c / (k + 2) for k, c in enumerate(coeffs)]
    prim = anti_t if weight_t else anti

    def seg(a, b):
        val = poly_eval(tuple(prim), b) - poly_eval(tuple(prim), a)
        if absolute and poly_eval(coeffs, 0.5 * (a + b)) < 0:
            return -val
        return val

    pts = [lo] + roots + [hi]
    return sum(seg(a, b) for a, b in zip(pts[:-1], pts[1:]))


# ---------------------------------------------------------------------------
# kernels

@dataclass(frozen=True)
class Kernel:
    """A memory kernel phi with certified integrability data.

    ``l1_norm`` and ``first_moment`` are exact for the named families;
    ``bound_on`` gives certified (lower, upper) envelopes of phi over a lag
    interval, which is what the thinning ceiling logic consumes.
    """

    family: str
    params: tuple[float, ...]
    l1_norm: float
    first_moment: float
    support_hint: Optional[float]
    nonnegative: bool

    # -- constructors -------------------------------------------------------

    @staticmethod
    def exponential(scale: float, rate: float) -> "Kernel":
        """phi(t) = scale * rate * exp(-rate t); ||phi||_1 = |scale|."""
        if rate <= 0:
            raise ValueError("rate must be positive")
        return Kernel("exponential", (scale, rate), abs(scale),
                      abs(scale) / rate, None, scale >= 0.0)

    @staticmethod
    def power_law(scale: float, exponent: float, t0: float = 1.0) -> "Kernel":
        """phi(t) = scale * (1 + t/t0)^(-exponent), exponent > 2."""
        if exponent <= 2.0 or t0 <= 0:
            raise ValueError("need exponent > 2 and t0 > 0 for a finite first moment")
        l1 = abs(scale) * t0 / (exponent - 1.0)
        m = abs(scale) * t0 * t0 / ((exponent - 1.0) * (exponent - 2.0))
        return Kernel("power_law", (scale, exponent, t0), l1, m, None, scale >= 0.0)

    @staticmethod
    def compact_poly(coeffs: tuple[float, ...], support: float) -> "Kernel":
        """phi(t) = polynomial(t) on [0, support], zero beyond."""
        if support <= 0:
            raise ValueError("support must be positive")
        l1 = _signed_poly_integral(coeffs, 0.0, support)
        m = _signed_poly_integral(coeffs, 0.0, support, weight_t=True)
        lo, _ = _poly_extrema(coeffs, 0.0, support)
        return Kernel("compact_poly", tuple(coeffs) + (support,), l1, m,
                      support, lo >= 0.0)

    @staticmethod
    def tabulated(dt: float, values: tuple[float, ...]) -> "Kernel":
        """Piecewise-constant phi: values[k] on [k dt, (k+1) dt), zero beyond."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        vals = tuple(float(v) for v in values)
        l1 = dt * sum(abs(v) for v in vals)
        m = sum(abs(v) * (k + 0.5) * dt * dt for k, v in enumerate(vals))
        return Kernel("tabulated", (dt,) + vals, l1, m, dt * len(vals),
                      all(v >= 0.0 for v in vals))

    @staticmethod
    def zero() -> "Kernel":
        return Kernel.exponential(0.0, 1.0)

    # -- evaluation ---------------------------------------------------------

    def __call__(self, t: float) -> float:
        if t < 0.0:
            return 0.0
        if self.family == "exponential":
            scale, rate = self.params
            return scale * rate * math.exp(-rate * t)
        if self.family == "power_law":
            scale, p, t0 = self.params
            return scale * (1.0 + t / t0) ** (-p)
        if self.family == "compact_poly":
            *coeffs, support = self.params
            if t >= support:
                return 0.0
            return poly_eval(tuple(coeffs), t)
        dt, *vals = self.params
        k = int(t / dt)
        return vals[k] if k < len(vals) else 0.0

    def bound_on(self, lo: float, hi: float) -> tuple[float, float]:
        """Certified (min, max) of phi over lags [lo, hi] (hi may be inf)."""
        lo = max(lo, 0.0)
        if hi <= lo:
            v = self(lo)
            return v, v
        if self.family in ("exponential", "power_law"):
            a, b = self(lo), (0.0 if math.isinf(hi) else self(hi))
            return min(a, b), max(a, b)
        if self.family == "compact_poly":
            *coeffs, support = self.params
            mn, mx = _poly_extrema(tuple(coeffs), lo, min(hi, support))
            if hi > support or lo >= support:
                mn, mx = min(mn, 0.0), max(mx, 0.0)
            return mn, mx
        dt, *vals = self.params
        k0 = int(lo / dt)
        k1 = len(vals) if math.isinf(hi) else min(len(vals), int(hi / dt) + 1)
        window = vals[k0:k1] if k0 < len(vals) else []
        mn = min(window, default=0.0)
        mx = max(window, default=0.0)
        if hi > (self.support_hint or math.inf):
            mn, mx = min(mn, 0.0), max(mx, 0.0)
        return mn, mx

    def tail_l1(self, b: float) -> float:
        """integral of |phi| over [b, inf), exact per family."""
        if b <= 0.0:
            return self.l1_norm
        if self.family == "exponential":
            scale, rate = self.params
            return abs(scale) * math.exp(-rate * b)
        if self.family == "power_law":
            scale, p, t0 = self.params
            return abs(scale) * t0 / (p - 1.0) * (1.0 + b / t0) ** (-(p - 1.0))
        if self.family == "compact_poly":
            *coeffs, support = self.params
            return _signed_poly_integral(tuple(coeffs), b, support)
        dt, *vals = self.params
        k = int(b / dt)
        if k >= len(vals):
            return 0.0
        part = abs(vals[k]) * ((k + 1) * dt - b)
        return part + dt * sum(abs(v) for v in vals[k + 1:])


def _poly_extrema(coeffs, lo, hi):
    cand = [poly_eval(tuple(coeffs), lo), poly_eval(tuple(coeffs), hi)]
    if len(coeffs) > 2:
        deriv = [k * c for k, c in enumerate(coeffs)][1:]
        for r in np.roots(list(reversed(deriv))):
            if abs(r.imag) < 1e-12 and lo < r.real < hi:
                cand.append(poly_eval(tuple(coeffs), float(r.real)))
    return min(cand), max(cand)


# ---------------------------------------------------------------------------
# link functions

@dataclass(frozen=True)
class Link:
    """Non-negative alpha-Lipschitz link h applied to the kernel sum."""

    family: str
    lipschitz: float
    monotonicity: str  # 'nondecreasing' | 'nonincreasing' | 'none'
    params: tuple[float, ...] = ()
    table: Optional[tuple[tuple[float, ...], tuple[float, ...]]] = None

    @staticmethod
    def identity() -> "Link":
        return Link("identity", 1.0, "nondecreasing")

    @staticmethod
    def positive_part() -> "Link":
        return Link("positive_part", 1.0, "nondecreasing")

    @staticmethod
    def affine_clipped(slope: float, intercept: float,
                       cap: float = math.inf) -> "Link":
        mono = ("nondecreasing" if slope >= 0 else "nonincreasing")
        return Link("affine_clipped", abs(slope), mono, (slope, intercept, cap))

    @staticmethod
    def sigmoid(scale: float) -> "Link":
        """h(x) = scale / (1 + exp(-x)); Lipschitz constant scale/4."""
        if scale <= 0:
            raise ValueError("scale must be positive")
        return Link("sigmoid", scale / 4.0, "nondecreasing", (scale,))

    @staticmethod
    def from_samples(xs, ys) -> "Link":
        """Piecewise-linear link; Lipschitz constant measured from the grid."""
        xs = tuple(float(x) for x in xs)
        ys = tuple(float(y) for y in ys)
        if len(xs) != len(ys) or len(xs) < 2:
            raise ValueError("need matching sample arrays of length >= 2")
        if any(y < 0 for y in ys):
            raise ValueError("link values must be non-negative")
        slopes = [(y1 - y0) / (x1 - x0)
                  for x0, x1, y0, y1 in zip(xs[:-1], xs[1:], ys[:-1], ys[1:])]
        if all(s >= 0 for s in slopes):
            mono = "nondecreasing"
        elif all(s <= 0 for s in slopes):
            mono = "nonincreasing"
        else:
            mono = "none"
        return Link("tabulated", max(abs(s) for s in slopes), mono,
                    table=(xs, ys))

    def __call__(self, x: float) -> float:
        if self.family == "identity":
            return x
        if self.family == "positive_part":
            return x if x > 0.0 else 0.0
        if self.family == "affine_clipped":
            slope, intercept, cap = self.params
            return min(cap, max(0.0, intercept + slope * x))
        if self.family == "sigmoid":
            (scale,) = self.params
            if x >= 0:
                return scale / (1.0 + math.exp(-x))
            e = math.exp(x)
            return scale * e / (1.0 + e)
        xs, ys = self.table
        return float(np.interp(x, xs, ys))


# ---------------------------------------------------------------------------
# model variants

@dataclass(frozen=True)
class EmptyHistory:
    """Non-linear Hawkes started from an empty past."""

    mu: float
    kernel: Kernel
    link: Link


@dataclass(frozen=True)
class Stationaryized:
    """Empty-history dynamics warmed up on [-burn_in, 0] to approximate the
    two-sided stationary process."""

    mu: float
    kernel: Kernel
    link: Link
    burn_in: float


@dataclass(frozen=True)
class LocallyStationary:
    """Linear Hawkes with baseline mu(t/T) and reproduction gamma(t/T),
    both given as polynomial coefficients (ascending powers) on [0, 1]."""

    mu_coeffs: tuple[float, ...]
    gamma_coeffs: tuple[float, ...]
    kernel: Kernel


@dataclass(frozen=True)
class Discrete:
    """Poisson autoregression: X_k | past ~ Poisson(alpha0 + sum alpha_j X_{k-j})."""

    alpha0: float
    alphas: tuple[float, ...]
    abs_alpha: float
    k_weighted: float

    @staticmethod
    def finite(alpha0: float, alphas) -> "Discrete":
        al = tuple(float(a) for a in alphas)
        return Discrete(alpha0, al, sum(al),
                        sum((k + 1) * a for k, a in enumerate(al)))

    @staticmethod
    def geometric(alpha0: float, first: float, ratio: float,
                  truncate: Optional[int] = None) -> "Discrete":
        """alpha_k = first * ratio^(k-1); |alpha| and sum k alpha_k in closed form."""
        if not 0.0 <= ratio < 1.0:
            raise ValueError("ratio must be in [0, 1)")
        if truncate is not None:
            return Discrete.finite(alpha0,
                                   [first * ratio ** k for k in range(truncate)])
        n = max(1, math.ceil(math.log(1e-16) / math.log(ratio)) if ratio > 0 else 1)
        al = tuple(first * ratio ** k for k in range(n))
        return Discrete(alpha0, al, first / (1.0 - ratio),
                        first / (1.0 - ratio) ** 2)


@dataclass(frozen=True)
class NearlyUnstable:
    """Linear Hawkes with reproduction a_T * phi, ||phi||_1 = 1, T(1-a_T) = 1."""

    mu: float
    kernel: Kernel
    horizon_T: float

    @property
    def a_T(self) -> float:
        return 1.0 - 1.0 / self.horizon_T


ModelSpec = Union[EmptyHistory, Stationaryized, LocallyStationary,
                  Discrete, NearlyUnstable]


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Violation:
    condition: str
    computed: float
    bound: float

    def __str__(self):
        return f"{self.condition}: {self.computed:.6g} (requires {self.bound:.6g})"


def validate(spec: ModelSpec) -> list[Violation]:
    """Every violated stability/integrability condition, as data."""
    bad: list[Violation] = []

    def need(ok, condition, computed, bound):
        if not ok:
            bad.append(Violation(condition, float(computed), float(bound)))

    if isinstance(spec, (EmptyHistory, Stationaryized)):
        rho = spec.link.lipschitz * spec.kernel.l1_norm
        need(rho < 1.0, "alpha*||phi||_1 < 1", rho, 1.0)
        need(math.isfinite(spec.kernel.first_moment),
             "first moment of |phi| finite", spec.kernel.first_moment, math.inf)
        if spec.link.family == "identity":
            need(spec.kernel.nonnegative, "identity link needs phi >= 0",
                 0.0, 1.0)
            need(spec.mu >= 0.0, "identity link needs mu >= 0", spec.mu, 0.0)
        if isinstance(spec, Stationaryized):
            need(spec.burn_in > 0.0, "burn_in > 0", spec.burn_in, 0.0)
    elif isinstance(spec, LocallyStationary):
        g_lo, g_hi = poly_range_01(spec.gamma_coeffs)
        m_lo, _ = poly_range_01(spec.mu_coeffs)
        rho = g_hi * spec.kernel.l1_norm
        need(rho < 1.0, "sup gamma * ||phi||_1 < 1", rho, 1.0)
        need(g_lo >= 0.0, "gamma >= 0 on [0,1]", g_lo, 0.0)
        need(m_lo >= 0.0, "mu >= 0 on [0,1]", m_lo, 0.0)
        need(spec.kernel.nonnegative, "phi >= 0", 0.0, 1.0)
    elif isinstance(spec, Discrete):
        need(spec.alpha0 > 0.0, "alpha0 > 0", spec.alpha0, 0.0)
        need(min(spec.alphas, default=0.0) >= 0.0, "alpha_k >= 0",
             min(spec.alphas, default=0.0), 0.0)
        need(spec.abs_alpha < 1.0, "|alpha| < 1", spec.abs_alpha, 1.0)
        need(math.isfinite(spec.k_weighted), "sum k alpha_k finite",
             spec.k_weighted, math.inf)
    elif isinstance(spec, NearlyUnstable):
        need(spec.mu > 0.0, "mu > 0", spec.mu, 0.0)
        need(abs(spec.kernel.l1_norm - 1.0) < 1e-9, "||phi||_1 = 1",
             spec.kernel.l1_norm, 1.0)
        need(spec.kernel.nonnegative, "phi >= 0", 0.0, 1.0)
        need(spec.horizon_T > 1.0, "T > 1 so that a_T in (0,1)",
             spec.horizon_T, 1.0)
    else:
        raise TypeError(f"not a model spec: {spec!r}")
    return bad


# ---------------------------------------------------------------------------
# derived constants

@dataclass(frozen=True)
class DerivedConstants:
    sigma2_target: Optional[float]
    branching_ratio: float
    stationary_mean_bound: Optional[float]
    needs_simulation: bool = False
    raw_count_variance: Optional[float] = None


def derived_constants(spec: ModelSpec,
                      normalization: str = "unit") -> DerivedConstants:
    """Gaussian target variance and related constants.

    ``normalization='self'`` (variance reduction, f = g) always targets the
    standard Gaussian.  With the default unit normalization the target is the
    stationary mean intensity, in closed form where one exists.
    """
    bad = validate(spec)
    if bad:
        raise ValueError("invalid spec: " + "; ".join(map(str, bad)))
    if normalization in ("self", "deterministic"):
        sigma2 = 1.0
    elif normalization != "unit":
        raise ValueError(f"unknown normalization {normalization!r}")

    if isinstance(spec, (EmptyHistory, Stationaryized)):
        rho = spec.link.lipschitz * spec.kernel.l1_norm
        bound = spec.link(spec.mu) / (1.0 - rho)
        if normalization == "unit":
            if spec.link.family == "identity":
                sigma2 = spec.mu / (1.0 - spec.kernel.l1_norm)
            else:
                return DerivedConstants(None, rho, bound, needs_simulation=True)
        return DerivedConstants(sigma2, rho, bound)
    if isinstance(spec, LocallyStationary):
        _, g_hi = poly_range_01(spec.gamma_coeffs)
        _, m_hi = poly_range_01(spec.mu_coeffs)
        rho = g_hi * spec.kernel.l1_norm
        l1 = spec.kernel.l1_norm
        if normalization == "unit":
            sigma2, _ = quad(
                lambda x: poly_eval(spec.mu_coeffs, x)
                / (1.0 - poly_eval(spec.gamma_coeffs, x) * l1),
                0.0, 1.0, epsabs=1e-12, epsrel=1e-12)
        return DerivedConstants(sigma2, rho, m_hi / (1.0 - rho))
    if isinstance(spec, Discrete):
        varsigma2 = spec.alpha0 / (1.0 - spec.abs_alpha)
        if normalization == "unit":
            sigma2 = varsigma2
        return DerivedConstants(
            sigma2, spec.abs_alpha, varsigma2,
            raw_count_variance=varsigma2 / (1.0 - spec.abs_alpha) ** 2)
    # nearly unstable: the unit-normalized variance grows with T
    if normalization == "unit":
        return DerivedConstants(None, spec.a_T, spec.mu * spec.horizon_T,
                                needs_simulation=True)
    return DerivedConstants(sigma2, spec.a_T, spec.mu * spec.horizon_T)


def suggested_burn_in(kernel: Kernel, alpha: float, tol: float = 1e-6) -> float:
    """Smallest B with alpha * integral_B^inf |phi| < tol (closed form where
    the family allows, bisection otherwise)."""
    if alpha * kernel.l1_norm < tol:
        return 1.0
    if kernel.family == "exponential":
        scale, rate = kernel.params
        return math.log(alpha * abs(scale) / tol) / rate
    if kernel.support_hint is not None:
        return kernel.support_hint
    lo, hi = 0.0, 1.0
    while alpha * kernel.tail_l1(hi) >= tol:
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if alpha * kernel.tail_l1(mid) < tol:
            hi = mid
        else:
            lo = mid
    return hi
