"""Compiled thinning kernels.

Everything here mirrors the pure-Python reference exactly: the cell streams
replay :mod:`hawkes_stein.bitstream` bit for bit (pinned by tests), and the
path scan implements the same certified-ceiling column walk as
:mod:`hawkes_stein.simulate`, restricted to single-exponential kernels with
affine baselines so the decayed kernel sum is a scalar Markov state.

All u64 arithmetic keeps both operands unsigned; mixing uint64 with a signed
int would silently promote to float64 under numba's numpy-style rules.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX_A = U64(0xBF58476D1CE4E5B9)
_MIX_B = U64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = U64(30), U64(27), U64(31), U64(11)
_U53 = 1.0 / 9007199254740992.0

LINK_IDENTITY, LINK_POSITIVE_PART, LINK_SIGMOID = 0, 1, 2

# path status codes
OK, EVENT_OVERFLOW, CEILING_OVERFLOW, POSITIVITY_FAULT = 0, 1, 2, 3

_gl_x, _gl_w = np.polynomial.legendre.leggauss(8)
GL8_X = ((_gl_x + 1.0) / 2.0).copy()
GL8_W = (_gl_w / 2.0).copy()


# ---------------------------------------------------------------------------
# counter-based stream (uint64 mirror of bitstream.py)

@njit(cache=True, nogil=True)
def _fmix64(z):
    z = (z ^ (z >> _S30)) * _MIX_A
    z = (z ^ (z >> _S27)) * _MIX_B
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _mix_key(seed, a, b):
    h = _fmix64(seed + _GOLDEN)
    h = _fmix64(h ^ (a * _MIX_A))
    return _fmix64(h ^ (b * _MIX_B))


@njit(cache=True, nogil=True)
def _next_unit(state):
    state = state + _GOLDEN
    x = _fmix64(state)
    return state, np.float64(x >> _S11) * _U53


@njit(cache=True, nogil=True)
def _poisson(state, mean):
    if mean < 10.0:
        if mean <= 0.0:
            return state, 0
        limit = math.exp(-mean)
        k = 0
        state, prod = _next_unit(state)
        while prod > limit:
            state, u = _next_unit(state)
            prod *= u
            k += 1
        return state, k
    log_mean = math.log(mean)
    b = 0.931 + 2.53 * math.sqrt(mean)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        state, u = _next_unit(state)
        u -= 0.5
        state, v = _next_unit(state)
        us = 0.5 - abs(u)
        k = int(math.floor((2.0 * a / us + b) * u + mean + 0.43))
        if us >= 0.07 and v <= v_r:
            return state, k
        if k < 0 or (us < 0.013 and v > us):
            continue
        lhs = math.log(v * inv_alpha / (a / (us * us) + b))
        rhs = k * log_mean - mean - math.lgamma(k + 1.0)
        if lhs <= rhs:
            return state, k


@njit(cache=True, nogil=True)
def stream_probe(seed, a, b, n):
    """n uniforms from the stream keyed by mix(seed, a, b) (test hook)."""
    out = np.empty(n)
    state = _mix_key(U64(seed), U64(a), U64(b))
    for k in range(n):
        state, out[k] = _next_unit(state)
    return out


@njit(cache=True, nogil=True)
def poisson_probe(seed, a, b, mean, n):
    """n successive Poisson draws from one keyed stream (test hook)."""
    out = np.empty(n, dtype=np.int64)
    state = _mix_key(U64(seed), U64(a), U64(b))
    for k in range(n):
        state, out[k] = _poisson(state, mean)
    return out


# ---------------------------------------------------------------------------
# lazy cells

@njit(cache=True, nogil=True)
def _cell_key(seed, i, j):
    # two's complement on negative time-cell indices, matching (i & MASK64)
    return _mix_key(U64(seed), U64(np.int64(i)), U64(np.int64(j)))


@njit(cache=True, nogil=True)
def cell_atoms_arrays(seed, i, j, cell_dt, cell_dth):
    """Atoms of one cell, sorted by time (test hook and gather primitive)."""
    state = _cell_key(seed, i, j)
    state, n = _poisson(state, cell_dt * cell_dth)
    ts = np.empty(n)
    ths = np.empty(n)
    t_hi = (i + 1.0) * cell_dt
    th_hi = (j + 1.0) * cell_dth
    for k in range(n):
        state, ut = _next_unit(state)
        state, uth = _next_unit(state)
        t = (i + ut) * cell_dt
        th = (j + uth) * cell_dth
        if t >= t_hi:
            t = np.nextafter(t_hi, t_hi - cell_dt)
        if th >= th_hi:
            th = np.nextafter(th_hi, th_hi - cell_dth)
        ts[k] = t
        ths[k] = th
    order = np.argsort(ts)
    return ts[order], ths[order]


@njit(cache=True, nogil=True)
def _fill_column(seed, i, j_lo, j_hi, cell_dt, cell_dth, ts, ths):
    """Append atoms of strips [j_lo, j_hi) of time-column i into reusable
    buffers (grown on demand); returns (ts, ths, count), unsorted."""
    cap = ts.shape[0]
    n = 0
    t_hi = (i + 1.0) * cell_dt
    for j in range(j_lo, j_hi):
        state = _cell_key(seed, i, j)
        state, m = _poisson(state, cell_dt * cell_dth)
        if n + m > cap:
            while n + m > cap:
                cap *= 2
            nts = np.empty(cap)
            nths = np.empty(cap)
            nts[:n] = ts[:n]
            nths[:n] = ths[:n]
            ts, ths = nts, nths
        th_hi = (j + 1.0) * cell_dth
        for _ in range(m):
            state, ut = _next_unit(state)
            state, uth = _next_unit(state)
            t = (i + ut) * cell_dt
            th = (j + uth) * cell_dth
            if t >= t_hi:
                t = np.nextafter(t_hi, t_hi - cell_dt)
            if th >= th_hi:
                th = np.nextafter(th_hi, th_hi - cell_dth)
            ts[n] = t
            ths[n] = th
            n += 1
    return ts, ths, n


@njit(cache=True, nogil=True)
def _gather_column(seed, i, j_lo, j_hi, cell_dt, cell_dth):
    """All atoms of time-column i with strip index in [j_lo, j_hi), t-sorted."""
    cap = 8 + 2 * int(math.ceil((j_hi - j_lo) * cell_dt * cell_dth))
    ts, ths, n = _fill_column(seed, i, j_lo, j_hi, cell_dt, cell_dth,
                              np.empty(cap), np.empty(cap))
    order = np.argsort(ts[:n])
    return ts[:n][order], ths[:n][order]


# ---------------------------------------------------------------------------
# intensity pieces

@njit(cache=True, nogil=True)
def _link_eval(code, scale, x):
    if code == LINK_IDENTITY:
        return x
    if code == LINK_POSITIVE_PART:
        return x if x > 0.0 else 0.0
    if x >= 0.0:
        return scale / (1.0 + math.exp(-x))
    e = math.exp(x)
    return scale * e / (1.0 + e)


@njit(cache=True, nogil=True)
def _lam_sup(code, scale, lo, hi, s, cb, b0, b1, g0, g1, inv_T):
    """Certified sup of lambda over [lo, hi] given kernel state s at lo and
    no further events; valid because every engine link is non-decreasing."""
    b_sup = max(b0 + b1 * inv_T * lo, b0 + b1 * inv_T * hi)
    g_sup = max(g0 + g1 * inv_T * lo, g0 + g1 * inv_T * hi)
    xi = cb * s
    if xi < 0.0:
        xi = 0.0
    return _link_eval(code, scale, b_sup + g_sup * xi)


@njit(cache=True, nogil=True)
def _accumulate(a, b, s_a, T, code, scale, cb, beta,
                b0, b1, g0, g1, inv_T, want_sqrt):
    """(int lambda, int sqrt(lambda), int 1/sqrt(lambda)) over [a,b] clipped
    to [0, T]; s_a is the kernel state at time a."""
    a0 = a if a > 0.0 else 0.0
    b0c = b if b < T else T
    if b0c <= a0:
        return 0.0, 0.0, 0.0
    s0 = s_a * math.exp(-beta * (a0 - a)) if a0 > a else s_a
    w = cb * s0
    L = b0c - a0
    E = math.exp(-beta * L)
    comp = 0.0
    if code == LINK_IDENTITY:
        comp = b0 * L + 0.5 * b1 * inv_T * (b0c * b0c - a0 * a0)
        q = g1 * inv_T
        i0 = (1.0 - E) / beta
        i1 = (1.0 - E * (1.0 + beta * L)) / (beta * beta)
        comp += w * ((g0 + q * a0) * i0 + q * i1)
    elif code == LINK_POSITIVE_PART:
        # constant base/reproduction on this branch (wrapper guarantees)
        W = g0 * w
        vl = b0 + W
        vr = b0 + W * E
        if vl >= 0.0 and vr >= 0.0:
            comp = b0 * L + (W / beta) * (1.0 - E)
        elif vl < 0.0 and vr < 0.0:
            comp = 0.0
        else:
            u_star = math.log(W / (-b0)) / beta
            if vl < 0.0:
                comp = b0 * (L - u_star) + (W / beta) * (math.exp(-beta * u_star) - E)
            else:
                comp = b0 * u_star + (W / beta) * (1.0 - math.exp(-beta * u_star))
    sq = 0.0
    isq = 0.0
    if want_sqrt or code == LINK_SIGMOID:
        n_p = 1 + int(0.5 * beta * L)
        if n_p > 4096:
            n_p = 4096
        h = L / n_p
        gl_comp = 0.0
        for p in range(n_p):
            lo = a0 + p * h
            for q_i in range(8):
                tau = lo + GL8_X[q_i] * h
                lam = _link_eval(code, scale,
                                 b0 + b1 * inv_T * tau
                                 + (g0 + g1 * inv_T * tau) * w
                                 * math.exp(-beta * (tau - a0)))
                wq = GL8_W[q_i] * h
                gl_comp += wq * lam
                if want_sqrt:
                    if lam <= 0.0:
                        return math.nan, math.nan, math.nan
                    r = math.sqrt(lam)
                    sq += wq * r
                    isq += wq / r
        if code == LINK_SIGMOID:
            comp = gl_comp
    return comp, sq, isq


# ---------------------------------------------------------------------------
# the thinning scan

@njit(cache=True, nogil=True)
def hawkes_exp_path(seed, t_start, T, cell_dt, cell_dth,
                    link_code, link_scale, cb, beta,
                    b0, b1, g0, g1, inv_T,
                    extra_time, theta_max, want_sqrt,
                    store_events, max_events, store_cols):
    """One thinned path of lambda_t = h(B(t) + G(t) * cb * s(t)).

    B(t) = b0 + b1*t*inv_T, G(t) = g0 + g1*t*inv_T, and s(t) is the decayed
    unit-jump sum of past events (kernel phi(u) = cb * exp(-beta u) enters
    as cb * s).  ``extra_time`` (NaN for none) injects a mark-zero atom: the
    shift operator's added point, accepted whenever lambda >= 0.

    Returns (status, n_ev, h_T, comp, comp_sqrt, comp_invsqrt,
    sum_invsqrt_lam, theta_peak, ev_t, ev_th, ev_lam, col_theta).
    """
    ev_cap = max_events if store_events else 0
    ev_t = np.empty(ev_cap)
    ev_th = np.empty(ev_cap)
    ev_lam = np.empty(ev_cap)
    i0 = int(math.floor(t_start / cell_dt))
    i1 = int(math.ceil(T / cell_dt))
    if i1 * cell_dt <= T:
        i1 += 1
    n_cols = i1 - i0
    col_theta = np.zeros(n_cols if store_cols else 0)

    s = 0.0
    t_ref = t_start
    comp = 0.0
    comp_sq = 0.0
    comp_isq = 0.0
    h_T = 0
    sum_isl = 0.0
    n_ev = 0
    status = OK
    theta_peak = 0.0
    extra_pending = (not math.isnan(extra_time)) and extra_time >= t_start
    sc_t = np.empty(64)
    sc_th = np.empty(64)

    for col in range(n_cols):
        i = i0 + col
        w0 = i * cell_dt
        if w0 < t_start:
            w0 = t_start
        w1 = (i + 1) * cell_dt
        # anchor the state at the column start
        if w0 > t_ref:
            s *= math.exp(-beta * (w0 - t_ref))
            t_ref = w0
        lam_sup = _lam_sup(link_code, link_scale, w0, w1, s,
                           cb, b0, b1, g0, g1, inv_T)
        if lam_sup > theta_max:
            status = CEILING_OVERFLOW
            break
        jmax = int(math.ceil(lam_sup / cell_dth)) if lam_sup > 0.0 else 0
        theta_col = jmax * cell_dth
        sc_t, sc_th, n_raw = _fill_column(seed, i, 0, jmax,
                                          cell_dt, cell_dth, sc_t, sc_th)
        order = np.argsort(sc_t[:n_raw])
        a_t = sc_t[:n_raw][order]
        a_th = sc_th[:n_raw][order]
        p = 0
        n_col = n_raw
        while True:
            t_cell = a_t[p] if p < n_col else math.inf
            take_extra = (extra_pending and w0 <= extra_time < w1
                          and extra_time <= T and extra_time <= t_cell)
            if take_extra:
                t = extra_time
                th = 0.0
            elif p < n_col:
                t = t_cell
                th = a_th[p]
                p += 1
                if t >= T:
                    continue
            else:
                break
            s_at = s * math.exp(-beta * (t - t_ref)) if t > t_ref else s
            lam = _link_eval(link_code, link_scale,
                             b0 + b1 * inv_T * t
                             + (g0 + g1 * inv_T * t) * cb * s_at)
            if take_extra:
                extra_pending = False
            elif th > lam:
                continue
            # accepted
            dc, dsq, disq = _accumulate(t_ref, t, s, T, link_code, link_scale,
                                        cb, beta, b0, b1, g0, g1, inv_T,
                                        want_sqrt)
            if want_sqrt and math.isnan(dc):
                return (POSITIVITY_FAULT, n_ev, h_T, comp, comp_sq, comp_isq,
                        sum_isl, theta_peak, ev_t, ev_th, ev_lam, col_theta)
            comp += dc
            comp_sq += dsq
            comp_isq += disq
            s = s_at + 1.0
            t_ref = t
            if 0.0 < t <= T:
                h_T += 1
                if want_sqrt:
                    if lam <= 0.0:
                        return (POSITIVITY_FAULT, n_ev, h_T, comp, comp_sq,
                                comp_isq, sum_isl, theta_peak, ev_t, ev_th,
                                ev_lam, col_theta)
                    sum_isl += 1.0 / math.sqrt(lam)
            if store_events:
                if n_ev >= ev_cap:
                    status = EVENT_OVERFLOW
                    break
                ev_t[n_ev] = t
                ev_th[n_ev] = th
                ev_lam[n_ev] = lam
            n_ev += 1
            # the event may push the certified bound above the ceiling
            lam_rest = _lam_sup(link_code, link_scale, t, w1, s,
                                cb, b0, b1, g0, g1, inv_T)
            if lam_rest > theta_col:
                theta_new = theta_col if theta_col > 0.0 else cell_dth
                while theta_new < lam_rest:
                    theta_new *= 2.0
                if theta_new > theta_max:
                    status = CEILING_OVERFLOW
                    break
                jnew = int(math.ceil(theta_new / cell_dth))
                b_t, b_th = _gather_column(seed, i, jmax, jnew,
                                           cell_dt, cell_dth)
                # keep only future atoms of the fresh strips, merge by time
                q0 = 0
                while q0 < b_t.shape[0] and b_t[q0] <= t:
                    q0 += 1
                n_rest = (n_col - p) + (b_t.shape[0] - q0)
                m_t = np.empty(n_rest)
                m_th = np.empty(n_rest)
                x, y, z = p, q0, 0
                while x < n_col and y < b_t.shape[0]:
                    if a_t[x] <= b_t[y]:
                        m_t[z] = a_t[x]
                        m_th[z] = a_th[x]
                        x += 1
                    else:
                        m_t[z] = b_t[y]
                        m_th[z] = b_th[y]
                        y += 1
                    z += 1
                while x < n_col:
                    m_t[z] = a_t[x]
                    m_th[z] = a_th[x]
                    x += 1
                    z += 1
                while y < b_t.shape[0]:
                    m_t[z] = b_t[y]
                    m_th[z] = b_th[y]
                    y += 1
                    z += 1
                a_t, a_th = m_t, m_th
                p = 0
                n_col = n_rest
                jmax = jnew
                theta_col = theta_new
        if store_cols:
            col_theta[col] = theta_col
        if theta_col > theta_peak:
            theta_peak = theta_col
        if status != OK:
            break
        # close out the column (clipping the last one at T)
        w_end = w1 if w1 < T else T
        if w_end > t_ref:
            dc, dsq, disq = _accumulate(t_ref, w_end, s, T, link_code,
                                        link_scale, cb, beta, b0, b1, g0, g1,
                                        inv_T, want_sqrt)
            if want_sqrt and math.isnan(dc):
                return (POSITIVITY_FAULT, n_ev, h_T, comp, comp_sq, comp_isq,
                        sum_isl, theta_peak, ev_t, ev_th, ev_lam, col_theta)
            comp += dc
            comp_sq += dsq
            comp_isq += disq
            s *= math.exp(-beta * (w_end - t_ref))
            t_ref = w_end

    if status == OK and extra_pending and extra_time <= T:
        # shift point sitting exactly on the horizon/column boundary
        t = extra_time
        s_at = s * math.exp(-beta * (t - t_ref)) if t > t_ref else s
        lam = _link_eval(link_code, link_scale,
                         b0 + b1 * inv_T * t
                         + (g0 + g1 * inv_T * t) * cb * s_at)
        if 0.0 < t <= T:
            h_T += 1
            if want_sqrt and lam > 0.0:
                sum_isl += 1.0 / math.sqrt(lam)
        if store_events and n_ev < ev_cap:
            ev_t[n_ev] = t
            ev_th[n_ev] = 0.0
            ev_lam[n_ev] = lam
        n_ev += 1
    return (status, n_ev, h_T, comp, comp_sq, comp_isq, sum_isl,
            theta_peak, ev_t, ev_th, ev_lam, col_theta)


@njit(cache=True, nogil=True, parallel=True)
def hawkes_batch(seeds, t_start, T, cell_dt, cell_dth,
                 link_code, link_scale, cb, beta,
                 b0, b1, g0, g1, inv_T, theta_max, want_sqrt):
    """Summary rows (status, H_T, comp, comp_sqrt, comp_invsqrt,
    sum_invsqrt_lam) for one independent path per seed."""
    n = seeds.shape[0]
    out = np.empty((n, 6))
    for r in prange(n):
        res = hawkes_exp_path(seeds[r], t_start, T, cell_dt, cell_dth,
                              link_code, link_scale, cb, beta,
                              b0, b1, g0, g1, inv_T,
                              math.nan, theta_max, want_sqrt,
                              False, 0, False)
        out[r, 0] = res[0]
        out[r, 1] = res[2]
        out[r, 2] = res[3]
        out[r, 3] = res[4]
        out[r, 4] = res[5]
        out[r, 5] = res[6]
    return out


# ---------------------------------------------------------------------------
# thinning against a deterministic curve (the hat-functional driver)

@njit(cache=True, nogil=True)
def det_curve_path(seed, T, cell_dt, cell_dth, curve_dt, curve, theta_max):
    """Inhomogeneous-Poisson path under the graph of a grid curve.

    Acceptance needs no event state, so atoms are scanned unordered.
    Returns (status, H_T, sum over events of m(t)^(-1/2)).
    """
    n_curve = curve.shape[0]
    h = 0.0
    s_inv = 0.0
    i1 = int(math.ceil(T / cell_dt))
    for i in range(i1):
        w0 = i * cell_dt
        w1 = (i + 1) * cell_dt
        if w1 > T:
            w1 = T
        k0 = int(w0 / curve_dt)
        k1 = int(math.ceil(w1 / curve_dt))
        if k1 >= n_curve:
            k1 = n_curve - 1
        m_sup = curve[k0]
        for k in range(k0, k1 + 1):
            if curve[k] > m_sup:
                m_sup = curve[k]
        if m_sup > theta_max:
            return CEILING_OVERFLOW, h, s_inv
        jmax = int(math.ceil(m_sup / cell_dth)) if m_sup > 0.0 else 0
        t_hi_cell = (i + 1.0) * cell_dt
        for j in range(jmax):
            state = _cell_key(seed, i, j)
            state, n_at = _poisson(state, cell_dt * cell_dth)
            th_hi = (j + 1.0) * cell_dth
            for _ in range(n_at):
                state, ut = _next_unit(state)
                state, uth = _next_unit(state)
                t = (i + ut) * cell_dt
                th = (j + uth) * cell_dth
                if t >= t_hi_cell:
                    t = np.nextafter(t_hi_cell, t_hi_cell - cell_dt)
                if th >= th_hi:
                    th = np.nextafter(th_hi, th_hi - cell_dth)
                if not 0.0 <= t < T:
                    continue
                pos = t / curve_dt
                kk = int(pos)
                if kk >= n_curve - 1:
                    kk = n_curve - 2
                frac = pos - kk
                m = curve[kk] * (1.0 - frac) + curve[kk + 1] * frac
                if th <= m:
                    h += 1.0
                    s_inv += 1.0 / math.sqrt(m)
    return OK, h, s_inv


@njit(cache=True, nogil=True, parallel=True)
def det_curve_batch(seeds, T, cell_dt, cell_dth, curve_dt, curve, theta_max):
    n = seeds.shape[0]
    out = np.empty((n, 3))
    for r in prange(n):
        status, h, s_inv = det_curve_path(seeds[r], T, cell_dt, cell_dth,
                                          curve_dt, curve, theta_max)
        out[r, 0] = status
        out[r, 1] = h
        out[r, 2] = s_inv
    return out


# ---------------------------------------------------------------------------
# discrete chains

@njit(cache=True, nogil=True)
def discrete_path(seed, n_steps, alpha0, alphas):
    """One Poisson-autoregression path; step k's draw comes from the stream
    keyed by (seed, k, 0) so it is a pure function of (seed, step index).

    Returns (H_n, sum of lambda_k, counts array).
    """
    K = alphas.shape[0]
    counts = np.zeros(n_steps)
    h = 0.0
    s_lam = 0.0
    for k in range(n_steps):
        lam = alpha0
        jmax = K if K < k else k
        for j in range(1, jmax + 1):
            lam += alphas[j - 1] * counts[k - j]
        state = _mix_key(U64(seed), U64(np.int64(k)), U64(0))
        state, x = _poisson(state, lam)
        counts[k] = x
        h += x
        s_lam += lam
    return h, s_lam, counts


@njit(cache=True, nogil=True, parallel=True)
def discrete_batch(seeds, n_steps, alpha0, alphas):
    n = seeds.shape[0]
    out = np.empty((n, 2))
    for r in prange(n):
        h, s_lam, _ = discrete_path(seeds[r], n_steps, alpha0, alphas)
        out[r, 0] = h
        out[r, 1] = s_lam
    return out
