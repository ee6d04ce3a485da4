"""Deterministic Volterra machinery on uniform time grids.

Causal trapezoidal convolution, the Neumann resolvent of a kernel, linear
renewal-type equations L = M + Phi * L solved by forward substitution, and
the expected-intensity curve of the near-critical linear model.  The forward
step treats the current-value term implicitly (a scalar solve per step) so
the scheme stays stable as ||Phi||_1 approaches 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import Kernel, NearlyUnstable, validate


@dataclass(frozen=True)
class GridFunction:
    """Samples values[k] ~ f(k * dt) on a uniform grid starting at 0."""

    dt: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values",
                           np.asarray(self.values, dtype=np.float64))
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.values))

    @property
    def horizon(self) -> float:
        return self.dt * (len(self.values) - 1)

    def __len__(self) -> int:
        return len(self.values)

    def interp(self, t) -> np.ndarray:
        """Linear interpolation, constant extrapolation at the ends."""
        return np.interp(t, self.times, self.values)

    def trapz(self) -> float:
        v = self.values
        return self.dt * (v.sum() - 0.5 * (v[0] + v[-1]))


def sample_kernel(kernel: Kernel, horizon: float, dt: float,
                  absolute: bool = False) -> GridFunction:
    n = int(round(horizon / dt)) + 1
    vals = np.fromiter((kernel(k * dt) for k in range(n)), dtype=np.float64,
                       count=n)
    return GridFunction(dt, np.abs(vals) if absolute else vals)


def convolve(f: GridFunction, g: GridFunction) -> GridFunction:
    """Causal convolution (f*g)(k dt) with trapezoidal end weights.

    Symmetric in its arguments by construction; output length is the shorter
    of the inputs.
    """
    if f.dt != g.dt:
        raise ValueError("grid steps differ")
    n = min(len(f), len(g))
    a, b = f.values[:n], g.values[:n]
    full = np.convolve(a, b)[:n]
    out = f.dt * (full - 0.5 * a[0] * b - 0.5 * b[0] * a)
    out[0] = 0.0
    return GridFunction(f.dt, out)


def solve_volterra(M: GridFunction, Phi: GridFunction) -> GridFunction:
    """Unique grid solution of L = M + Phi * L by forward substitution."""
    if M.dt != Phi.dt:
        raise ValueError("grid steps differ")
    dt = M.dt
    norm = Phi.trapz() if len(Phi) > 1 else 0.0
    if not abs(norm) < 1.0:
        raise ValueError(f"||Phi||_1 = {norm:.6g} >= 1: no stable solution")
    n = min(len(M), len(Phi))
    m, phi = M.values[:n], Phi.values[:n]
    diag = 1.0 - 0.5 * dt * phi[0]
    if diag <= 0.0:
        raise ValueError("dt too coarse: implicit step not solvable")
    L = np.empty(n)
    L[0] = m[0]
    for k in range(1, n):
        inner = float(np.dot(phi[1:k], L[k - 1:0:-1])) if k > 1 else 0.0
        L[k] = (m[k] + dt * (inner + 0.5 * phi[k] * L[0])) / diag
    return GridFunction(dt, L)


@dataclass(frozen=True)
class ResolventGrid:
    """The Neumann resolvent sum_{k>=1} alpha^k |phi|^(*k) on a grid."""

    base: GridFunction
    alpha: float
    l1_tail_bound: float

    @property
    def l1_on_grid(self) -> float:
        return self.base.trapz()

    def __call__(self, t) -> np.ndarray:
        return self.base.interp(t)


def resolvent(kernel: Kernel, alpha: float, horizon: float,
              dt: float = 1e-3) -> ResolventGrid:
    """Solve psi = alpha |phi| + alpha |phi| * psi by causal time stepping.

    The mass of psi beyond the horizon is certified, never extrapolated: the
    first-moment (Markov) bound alpha*m/(H (1-rho)^2), sharpened to the pure
    geometric tail when |phi| has compact support.
    """
    rho = alpha * kernel.l1_norm
    if not rho < 1.0:
        raise ValueError(f"alpha*||phi||_1 = {rho:.6g} >= 1")
    phi_abs = sample_kernel(kernel, horizon, dt, absolute=True)
    scaled = GridFunction(dt, alpha * phi_abs.values)
    n = len(scaled)
    s = scaled.values
    diag = 1.0 - 0.5 * dt * s[0]
    if diag <= 0.0:
        raise ValueError("dt too coarse: implicit step not solvable")
    psi = np.empty(n)
    psi[0] = s[0]
    for k in range(1, n):
        inner = float(np.dot(s[1:k], psi[k - 1:0:-1])) if k > 1 else 0.0
        psi[k] = (s[k] + dt * (inner + 0.5 * s[k] * psi[0])) / diag
    tail = math.inf
    if kernel.first_moment > 0.0 and horizon > 0.0:
        tail = alpha * kernel.first_moment / (horizon * (1.0 - rho) ** 2)
    elif kernel.first_moment == 0.0:
        tail = 0.0
    if kernel.support_hint is not None and kernel.support_hint > 0.0:
        k_min = max(1, math.ceil(horizon / kernel.support_hint))
        tail = min(tail, rho ** k_min / (1.0 - rho) if rho > 0 else 0.0)
    return ResolventGrid(GridFunction(dt, psi), alpha, tail)


def resolvent_series(kernel: Kernel, alpha: float, horizon: float,
                     dt: float = 1e-3, l1_tol: float = 1e-10) -> GridFunction:
    """Truncated Neumann series sum_{k<=K} alpha^k |phi|^(*k); K is chosen so
    the dropped geometric tail sum_{k>K} rho^k is below l1_tol."""
    rho = alpha * kernel.l1_norm
    if not rho < 1.0:
        raise ValueError(f"alpha*||phi||_1 = {rho:.6g} >= 1")
    phi_abs = sample_kernel(kernel, horizon, dt, absolute=True)
    if rho == 0.0:
        return GridFunction(dt, np.zeros(len(phi_abs)))
    K = max(1, math.ceil(math.log(l1_tol * (1.0 - rho)) / math.log(rho)))
    term = GridFunction(dt, alpha * phi_abs.values)
    acc = term.values.copy()
    for _ in range(1, K):
        term = convolve(GridFunction(dt, alpha * phi_abs.values), term)
        acc += term.values
    return GridFunction(dt, acc)


def mean_intensity_nearly_unstable(spec: NearlyUnstable,
                                   dt: float = 1e-3) -> GridFunction:
    """Expected intensity t -> E[lambda_t] on [0, T] for the near-critical
    linear model: the solution of m = mu + a_T phi * m."""
    bad = validate(spec)
    if bad:
        raise ValueError("invalid spec: " + "; ".join(map(str, bad)))
    T = spec.horizon_T
    phi = sample_kernel(spec.kernel, T, dt)
    Phi = GridFunction(dt, spec.a_T * phi.values)
    M = GridFunction(dt, np.full(len(Phi), spec.mu))
    return solve_volterra(M, Phi)
