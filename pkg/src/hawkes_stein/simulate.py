"""Exact thinning simulation over a lazy driving configuration.

Two interchangeable executors produce the same path law on the same
configuration: a compiled scan (single-exponential kernels, affine
baselines) and a pure-Python reference that handles every kernel/link
family via certified per-window intensity bounds.  Both enumerate atoms
column by column under an adaptive mark ceiling; an accepted event raises
the certified bound for the rest of its window and newly exposed strips are
rescanned, so no atom under the intensity graph can be missed.

``completeness_rescan`` re-enumerates every scanned window at its final
ceiling and recomputes the acceptance rule from the finished path; it is the
debug-mode invariant check and is executor-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad

from . import engine
from .driving import Atom, Configuration, DrivingMeasure
from .models import (EmptyHistory, Stationaryized, LocallyStationary,
                     NearlyUnstable, Discrete, ModelSpec, Kernel, Link,
                     poly_eval, validate, _poly_extrema)
from .volterra import GridFunction

DEFAULT_THETA_MAX = 1e9
NEARLY_UNSTABLE_T_CAP = 512.0


# ---------------------------------------------------------------------------
# variant plumbing: lambda(t) = link(B(t) + G(t) * sum phi(t - t_i))

@dataclass(frozen=True)
class _Variant:
    t_start: float
    kernel: Kernel
    link: Link
    b_coeffs: tuple[float, ...]   # polynomial in t * inv_T
    g_coeffs: tuple[float, ...]
    inv_T: float


def _variant(spec: ModelSpec, T: float) -> _Variant:
    if isinstance(spec, EmptyHistory):
        return _Variant(0.0, spec.kernel, spec.link, (spec.mu,), (1.0,), 0.0)
    if isinstance(spec, Stationaryized):
        return _Variant(-spec.burn_in, spec.kernel, spec.link,
                        (spec.mu,), (1.0,), 0.0)
    if isinstance(spec, LocallyStationary):
        return _Variant(0.0, spec.kernel, Link.identity(),
                        tuple(spec.mu_coeffs), tuple(spec.gamma_coeffs),
                        1.0 / T)
    if isinstance(spec, NearlyUnstable):
        if T > NEARLY_UNSTABLE_T_CAP:
            raise ValueError(
                f"nearly unstable horizon {T} exceeds the desk-scale cap "
                f"{NEARLY_UNSTABLE_T_CAP}; the expected intensity grows like T")
        return _Variant(0.0, spec.kernel, Link.identity(),
                        (spec.mu,), (spec.a_T,), 0.0)
    raise TypeError(f"not a continuous-time spec: {spec!r}")


class IntensityEvaluator:
    """Predictable intensity recomputed from a finished event list.

    Independent of the scan that produced the path: it sums the kernel over
    events strictly before t, which is what rescan checks and Malliavin
    probes need.
    """

    def __init__(self, spec: ModelSpec, times: np.ndarray, T: float):
        self.var = _variant(spec, T)
        self.times = np.asarray(times, dtype=np.float64)

    def base(self, t: float) -> float:
        return poly_eval(self.var.b_coeffs, t * self.var.inv_T)

    def reproduction(self, t: float) -> float:
        return poly_eval(self.var.g_coeffs, t * self.var.inv_T)

    def kernel_sum(self, t: float) -> float:
        k = np.searchsorted(self.times, t, side="left")
        lags = t - self.times[:k]
        if self.var.kernel.family == "exponential":
            scale, rate = self.var.kernel.params
            return float(np.sum(scale * rate * np.exp(-rate * lags)))
        return sum(self.var.kernel(lag) for lag in lags)

    def __call__(self, t: float) -> float:
        return self.var.link(self.base(t)
                             + self.reproduction(t) * self.kernel_sum(t))


@dataclass
class EventPath:
    """One realized trajectory: accepted atoms plus pathwise integrals."""

    spec: ModelSpec
    config: Configuration
    t_start: float
    T: float
    times: np.ndarray
    thetas: np.ndarray
    lams: np.ndarray              # predictable intensity at each event
    h_T: int
    compensator: float            # integral of lambda over [0, T]
    comp_sqrt: float              # integral of sqrt(lambda), nan unless asked
    comp_invsqrt: float
    sum_invsqrt_lam: float        # sum over events in (0, T] of lambda^(-1/2)
    ceiling_trace: tuple[int, np.ndarray]   # (first column index, theta used)
    method: str

    @property
    def events(self) -> list[Atom]:
        return [Atom(float(t), float(th))
                for t, th in zip(self.times, self.thetas)]

    def evaluator(self) -> IntensityEvaluator:
        return IntensityEvaluator(self.spec, self.times, self.T)


# ---------------------------------------------------------------------------
# engine dispatch

_LINK_CODES = {"identity": engine.LINK_IDENTITY,
               "positive_part": engine.LINK_POSITIVE_PART,
               "sigmoid": engine.LINK_SIGMOID}


def engine_args(spec: ModelSpec, T: float) -> Optional[dict]:
    """Engine parameterization, or None when the spec needs the slow path."""
    try:
        var = _variant(spec, T)
    except TypeError:
        return None
    if var.kernel.family != "exponential":
        return None
    if var.link.family not in _LINK_CODES:
        return None
    if len(var.b_coeffs) > 2 or len(var.g_coeffs) > 2:
        return None
    b = var.b_coeffs + (0.0,) * (2 - len(var.b_coeffs))
    g = var.g_coeffs + (0.0,) * (2 - len(var.g_coeffs))
    if var.link.family == "positive_part" and (b[1] != 0.0 or g[1] != 0.0):
        return None
    scale, rate = var.kernel.params
    link_scale = var.link.params[0] if var.link.family == "sigmoid" else 0.0
    return dict(t_start=var.t_start, link_code=_LINK_CODES[var.link.family],
                link_scale=link_scale, cb=scale * rate, beta=rate,
                b0=b[0], b1=b[1], g0=g[0], g1=g[1], inv_T=var.inv_T)


def _engine_extra(config: Configuration) -> Optional[float]:
    """Added atoms the engine can represent: at most one, at mark zero."""
    if not config.added:
        return math.nan
    if len(config.added) == 1 and config.added[0].theta == 0.0:
        return config.added[0].t
    return None


def simulate(spec: ModelSpec, config: Configuration, T: float, *,
             want_sqrt: bool = False, method: str = "auto",
             theta_max: float = DEFAULT_THETA_MAX,
             max_events: Optional[int] = None) -> EventPath:
    """Thin the configuration under the spec's intensity on [t_start, T].

    The path is measurable with respect to the configuration: same seed and
    added atoms give the identical path, whichever executor runs.
    """
    bad = validate(spec)
    if bad:
        raise ValueError("invalid spec: " + "; ".join(map(str, bad)))
    args = engine_args(spec, T)
    extra = _engine_extra(config)
    use_engine = (method == "engine" or
                  (method == "auto" and args is not None and extra is not None))
    if method == "engine" and (args is None or extra is None):
        raise ValueError("spec/config not representable by the compiled engine")
    if use_engine:
        return _simulate_engine(spec, config, T, args, extra, want_sqrt,
                                theta_max, max_events)
    return _simulate_python(spec, config, T, want_sqrt, theta_max)


def _simulate_engine(spec, config, T, args, extra, want_sqrt, theta_max,
                     max_events) -> EventPath:
    m = config.measure
    if max_events is None:
        bound = spec.link(spec.mu) if hasattr(spec, "link") else None
        max_events = 4096 + int(8 * T * (bound or T))
    (status, n_ev, h_T, comp, comp_sq, comp_isq, sum_isl, _theta_peak,
     ev_t, ev_th, ev_lam, col_theta) = engine.hawkes_exp_path(
        np.uint64(m.seed), args["t_start"], T, m.cell_dt, m.cell_dtheta,
        args["link_code"], args["link_scale"], args["cb"], args["beta"],
        args["b0"], args["b1"], args["g0"], args["g1"], args["inv_T"],
        extra, theta_max, want_sqrt, True, max_events, True)
    _raise_on_status(status, theta_max)
    i0 = math.floor(args["t_start"] / m.cell_dt)
    return EventPath(spec, config, args["t_start"], T,
                     ev_t[:n_ev].copy(), ev_th[:n_ev].copy(),
                     ev_lam[:n_ev].copy(), int(h_T), comp,
                     comp_sq if want_sqrt else math.nan,
                     comp_isq if want_sqrt else math.nan,
                     sum_isl if want_sqrt else math.nan,
                     (i0, col_theta), "engine")


def _raise_on_status(status, theta_max):
    if status == engine.CEILING_OVERFLOW:
        raise RuntimeError(
            f"mark ceiling exceeded {theta_max:g}: runaway intensity "
            "(is the spec subcritical?)")
    if status == engine.EVENT_OVERFLOW:
        raise RuntimeError("event buffer overflow; raise max_events")
    if status == engine.POSITIVITY_FAULT:
        raise RuntimeError("intensity hit zero under a sqrt-normalized run")


# ---------------------------------------------------------------------------
# the reference executor

def _window_bound(var: _Variant, ev_times, w0, w1, T) -> float:
    """Certified sup of lambda over [w0, w1] given the events so far."""
    x0, x1 = w0 * var.inv_T, w1 * var.inv_T
    b_lo, b_hi = _poly_extrema(var.b_coeffs, x0, x1)
    g_lo, g_hi = _poly_extrema(var.g_coeffs, x0, x1)
    s_lo = s_hi = s_abs = 0.0
    for ti in ev_times:
        lo, hi = var.kernel.bound_on(w0 - ti, w1 - ti)
        s_lo += lo
        s_hi += hi
        s_abs += max(abs(lo), abs(hi))
    link = var.link
    if link.monotonicity == "nondecreasing":
        arg = b_hi + (g_hi * s_hi if s_hi >= 0.0 else g_lo * s_hi)
        return link(arg)
    if link.monotonicity == "nonincreasing":
        arg = b_lo + (g_lo * s_lo if s_lo >= 0.0 else g_hi * s_lo)
        return link(arg)
    scale = max(abs(g_lo), abs(g_hi))
    return link(0.0) + link.lipschitz * (max(abs(b_lo), abs(b_hi))
                                         + scale * s_abs)


def _simulate_python(spec, config, T, want_sqrt, theta_max) -> EventPath:
    var = _variant(spec, T)
    m = config.measure
    dt, dth = m.cell_dt, m.cell_dtheta
    i0 = math.floor(var.t_start / dt)
    i1 = math.ceil(T / dt)
    ev_t: list[float] = []
    ev_th: list[float] = []
    ev_lam: list[float] = []
    thetas_used = np.zeros(max(0, i1 - i0))

    def lam_at(t: float) -> float:
        s = sum(var.kernel(t - ti) for ti in ev_t if ti < t)
        return var.link(poly_eval(var.b_coeffs, t * var.inv_T)
                        + poly_eval(var.g_coeffs, t * var.inv_T) * s)

    for col in range(i1 - i0):
        i = i0 + col
        w0 = max(i * dt, var.t_start)
        w1 = (i + 1) * dt
        bound = _window_bound(var, ev_t, w0, w1, T)
        if bound > theta_max:
            raise RuntimeError(f"mark ceiling exceeded {theta_max:g}")
        jmax = math.ceil(bound / dth) if bound > 0.0 else 0
        theta_col = jmax * dth
        pending = [(a.t, a.theta)
                   for a in config.atoms_in(w0, w1, theta_col)
                   if a.t >= var.t_start]
        p = 0
        while p < len(pending):
            t, th = pending[p]
            p += 1
            if t > T or (th > 0.0 and t >= T):
                continue
            lam = lam_at(t)
            if th > lam:
                continue
            ev_t.append(t)
            ev_th.append(th)
            ev_lam.append(lam)
            rest = _window_bound(var, ev_t, t, w1, T)
            if rest > theta_col:
                theta_new = theta_col if theta_col > 0.0 else dth
                while theta_new < rest:
                    theta_new *= 2.0
                if theta_new > theta_max:
                    raise RuntimeError(f"mark ceiling exceeded {theta_max:g}")
                fresh = [(a.t, a.theta)
                         for a in config.atoms_in(w0, w1, theta_new)
                         if a.theta > theta_col and a.t > t]
                pending = sorted(pending[p:] + fresh)
                p = 0
                jmax = math.ceil(theta_new / dth)
                theta_col = theta_new
        thetas_used[col] = theta_col

    if math.ceil(T / dt) * dt == T:
        # a shifted point sitting exactly on the horizon misses the half-open
        # column windows; it still belongs to (0, T]
        for a in config.added:
            if a.t == T and (a.t, a.theta) not in zip(ev_t, ev_th):
                lam = lam_at(T)
                if a.theta <= lam:
                    ev_t.append(a.t)
                    ev_th.append(a.theta)
                    ev_lam.append(lam)

    times = np.asarray(ev_t)
    comp, comp_sq, comp_isq = _integrals_by_quad(var, times, T, want_sqrt)
    in_win = (times > 0.0) & (times <= T)
    h_T = int(np.sum(in_win))
    lams = np.asarray(ev_lam)
    if want_sqrt:
        if np.any(lams[in_win] <= 0.0):
            raise RuntimeError("intensity hit zero under a sqrt-normalized run")
        sum_isl = float(np.sum(1.0 / np.sqrt(lams[in_win])))
    else:
        sum_isl = math.nan
    return EventPath(spec, config, var.t_start, T, times,
                     np.asarray(ev_th), lams, h_T, comp,
                     comp_sq if want_sqrt else math.nan,
                     comp_isq if want_sqrt else math.nan,
                     sum_isl, (i0, thetas_used), "python")


def _integrals_by_quad(var: _Variant, times, T, want_sqrt,
                       rel_tol: float = 1e-8):
    """Adaptive quadrature of lambda (and optionally its sqrt moments) on
    [0, T], split at event times where the integrand kinks."""

    def lam(t):
        s = 0.0
        k = np.searchsorted(times, t, side="left")
        for ti in times[:k]:
            s += var.kernel(t - ti)
        return var.link(poly_eval(var.b_coeffs, t * var.inv_T)
                        + poly_eval(var.g_coeffs, t * var.inv_T) * s)

    cuts = np.concatenate([[0.0], times[(times > 0) & (times < T)], [T]])
    comp = comp_sq = comp_isq = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        val, _ = quad(lam, a, b, epsrel=rel_tol, epsabs=1e-12, limit=200)
        comp += val
        if want_sqrt:
            v, _ = quad(lambda t: math.sqrt(lam(t)), a, b,
                        epsrel=rel_tol, epsabs=1e-12, limit=200)
            comp_sq += v
            v, _ = quad(lambda t: 1.0 / math.sqrt(lam(t)), a, b,
                        epsrel=rel_tol, epsabs=1e-12, limit=200)
            comp_isq += v
    return comp, comp_sq, comp_isq


# ---------------------------------------------------------------------------
# public helpers

def compensator(path: EventPath) -> float:
    """integral of lambda over [0, T]: exact closed form between events for
    exponential kernels (what both executors store), adaptive quadrature
    otherwise."""
    return path.compensator


def simulate_coupled(spec: ModelSpec, config: Configuration, T: float,
                     shift_point: Atom, **kw) -> tuple[EventPath, EventPath]:
    """(path on config, path on the shifted configuration).

    The shift point must sit at mark zero: the add-one-point derivative of a
    Hawkes functional does not depend on the mark below the intensity, so
    mark zero is the canonical representative.
    """
    if shift_point.theta != 0.0:
        raise ValueError("shift points live at mark zero")
    base = simulate(spec, config, T, **kw)
    shifted = simulate(spec, config.shift(shift_point), T, **kw)
    return base, shifted


@dataclass
class DiscretePath:
    """Discrete chain: counts X_k and their conditional means."""

    spec: Discrete
    seed: int
    counts: np.ndarray
    intensities: np.ndarray

    @property
    def h_n(self) -> float:
        return float(self.counts.sum())

    @property
    def sum_lambda(self) -> float:
        return float(self.intensities.sum())


def simulate_discrete(spec: Discrete, n: int, seed: int) -> DiscretePath:
    bad = validate(spec)
    if bad:
        raise ValueError("invalid spec: " + "; ".join(map(str, bad)))
    alphas = np.asarray(spec.alphas, dtype=np.float64)
    _, _, counts = engine.discrete_path(np.uint64(seed), n, spec.alpha0,
                                        alphas)
    lam = np.full(n, spec.alpha0)
    if n > 1 and len(alphas):
        conv = np.convolve(counts, alphas)[:n - 1]
        lam[1:] += conv
    return DiscretePath(spec, seed, counts, lam)


@dataclass
class InhomogeneousPath:
    """Path thinned against a deterministic grid curve (f = g = curve)."""

    curve: GridFunction
    T: float
    seed: int
    h_T: float
    sum_invsqrt_m: float


def simulate_inhomogeneous(curve: GridFunction, T: float, seed: int, *,
                           cell_dt: float = 1.0, cell_dtheta: float = 1.0,
                           theta_max: float = DEFAULT_THETA_MAX
                           ) -> InhomogeneousPath:
    if curve.horizon < T - 1e-12:
        raise ValueError(f"curve horizon {curve.horizon} < T = {T}")
    status, h, s_inv = engine.det_curve_path(
        np.uint64(seed), T, cell_dt, cell_dtheta, curve.dt, curve.values,
        theta_max)
    _raise_on_status(int(status), theta_max)
    return InhomogeneousPath(curve, T, seed, h, s_inv)


def completeness_rescan(path: EventPath) -> list[str]:
    """Debug-mode invariant: re-enumerate every window at its final ceiling
    and re-derive acceptance from the finished path.  Returns discrepancies
    (empty list = complete and consistent)."""
    ev = path.evaluator()
    accepted = set(zip(path.times.tolist(), path.thetas.tolist()))
    i0, thetas = path.ceiling_trace
    dt = path.config.measure.cell_dt
    problems = []
    for col, theta_col in enumerate(thetas):
        i = i0 + col
        w0 = max(i * dt, path.t_start)
        w1 = (i + 1) * dt
        if w0 >= w1:
            continue
        for a in path.config.atoms_in(w0, w1, float(theta_col)):
            if a.t < path.t_start or a.t >= path.T:
                continue
            should = a.theta <= ev(a.t)
            did = (a.t, a.theta) in accepted
            if should != did:
                problems.append(
                    f"atom ({a.t:.6f}, {a.theta:.6f}): accepted={did} "
                    f"but theta<=lambda is {should}")
    return problems
