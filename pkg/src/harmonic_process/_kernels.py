"""Gillespie inner loop.

The loop is plain Python over numpy arrays.  It is compiled with numba
``njit`` unless ``HARMONIC_DISABLE_NUMBA`` is set to a true value, in which
case the identical source runs interpreted (slow, but handy for debugging
and for the benchmark).

State vector ``st`` (float64): [t, total_rate, kahan_comp, next_snapshot].
Uniforms are consumed three per event: waiting time, event choice, size.
"""
from __future__ import annotations

import math
import os

import numpy as np

_FLAG = os.environ.get("HARMONIC_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _FLAG in ("1", "true", "yes", "on")

if NUMBA_DISABLED:
    def _jit(fn):
        return fn
else:
    try:
        from numba import njit

        _jit = njit(nogil=True, cache=True)
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_DISABLED = True

        def _jit(fn):
            return fn

T, TOTAL, COMP, NEXT_SNAP = 0, 1, 2, 3
RECOMPUTE_EVERY = 1 << 14


@_jit
def h_value(h_tab, two_s, m):
    n = h_tab.shape[0]
    if m < n:
        return h_tab[m]
    out = h_tab[n - 1]
    for k in range(n, m + 1):
        out += 1.0 / (two_s + k - 1)
    return out


@_jit
def draw_jump_size(two_s, m, target):
    """Smallest k with sum_{j<=k} phi(m, j) >= target (target in [0, h(m)))."""
    g = 1.0
    acc = 0.0
    for k in range(1, m + 1):
        g *= (m - k + 1) / (m + two_s - k)
        acc += g / k
        if acc > target:
            return k
    return m


@_jit
def draw_log_size(cdf, beta, lam, u):
    """Inverse CDF of P(k) = beta^k / (k lam), cached partial sums then on the fly."""
    idx = np.searchsorted(cdf, u, side="right")
    if idx < cdf.shape[0]:
        return idx + 1
    k = cdf.shape[0]
    c = cdf[k - 1]
    term = beta**k
    while c <= u:
        k += 1
        term *= beta
        c += term / (k * lam)
        if term == 0.0:
            break
    return k


@_jit
def config_index(m, radix):
    idx = 0
    mul = 1
    for i in range(m.shape[0]):
        if m[i] >= radix:
            return -1
        idx += m[i] * mul
        mul *= radix
    return idx


@_jit
def _accumulate(m, t0, t1, burn, batch_len, n_batches, radix, overflow,
                occ_time, burn_occ, batch_occ, cfg_time, batch_cfg, st, snap_dt, snap_hist):
    N = m.shape[0]
    # burn-in window
    if t0 < burn:
        d = min(t1, burn) - t0
        for i in range(N):
            burn_occ[i] += m[i] * d
    a = max(t0, burn)
    if t1 <= a:
        return
    idx = config_index(m, radix)
    if idx < 0:
        idx = overflow
    for i in range(N):
        occ_time[i] += m[i] * (t1 - a)
    cfg_time[idx] += t1 - a
    # split across batches
    s = a
    while s < t1:
        b = int((s - burn) / batch_len)
        if b >= n_batches:
            b = n_batches - 1
        edge = burn + (b + 1) * batch_len
        e = t1 if (t1 < edge or b == n_batches - 1 or edge <= s) else edge
        for i in range(N):
            batch_occ[b, i] += m[i] * (e - s)
        batch_cfg[b, idx] += e - s
        s = e
    while st[NEXT_SNAP] < t1:
        if st[NEXT_SNAP] >= a:
            snap_hist[idx] += 1
        st[NEXT_SNAP] += snap_dt


@_jit
def _add_rate(st, delta):
    y = delta - st[COMP]
    tt = st[TOTAL] + y
    st[COMP] = (tt - st[TOTAL]) - y
    st[TOTAL] = tt


@_jit
def _recompute_total(m, h_tab, two_s, lam_L, lam_R, st):
    tot = lam_L + lam_R
    for i in range(m.shape[0]):
        tot += 2.0 * h_value(h_tab, two_s, m[i])
    st[TOTAL] = tot
    st[COMP] = 0.0


@_jit
def run_chunk(m, st, u, h_tab, two_s, beta_L, beta_R, lam_L, lam_R, cdf_L, cdf_R,
              burn, t_stop, batch_len, n_batches, radix,
              occ_time, burn_occ, batch_occ, cfg_time, batch_cfg,
              snap_dt, snap_hist, ins_hist):
    """Advance the chain using the uniforms in ``u``.

    Returns (events fired, finished).  Finished means t reached t_stop; the
    pending waiting time is discarded, which is exact by memorylessness.
    """
    N = m.shape[0]
    overflow = cfg_time.shape[0] - 1
    kmax = ins_hist.shape[1] - 1
    n_events = u.shape[0] // 3
    fired = 0
    for e in range(n_events):
        u1 = u[3 * e]
        u2 = u[3 * e + 1]
        u3 = u[3 * e + 2]
        t = st[T]
        rate = st[TOTAL]
        dt = -math.log1p(-u1) / rate
        if t + dt >= t_stop:
            _accumulate(m, t, t_stop, burn, batch_len, n_batches, radix, overflow,
                        occ_time, burn_occ, batch_occ, cfg_time, batch_cfg, st, snap_dt, snap_hist)
            st[T] = t_stop
            return fired, True
        _accumulate(m, t, t + dt, burn, batch_len, n_batches, radix, overflow,
                    occ_time, burn_occ, batch_occ, cfg_time, batch_cfg, st, snap_dt, snap_hist)
        st[T] = t + dt
        fired += 1

        r = u2 * rate
        if r < lam_L:
            k = draw_log_size(cdf_L, beta_L, lam_L, u3)
            old = h_value(h_tab, two_s, m[0])
            m[0] += k
            _add_rate(st, 2.0 * (h_value(h_tab, two_s, m[0]) - old))
            ins_hist[0, min(k, kmax)] += 1
        elif r < lam_L + lam_R:
            k = draw_log_size(cdf_R, beta_R, lam_R, u3)
            old = h_value(h_tab, two_s, m[N - 1])
            m[N - 1] += k
            _add_rate(st, 2.0 * (h_value(h_tab, two_s, m[N - 1]) - old))
            ins_hist[1, min(k, kmax)] += 1
        else:
            r -= lam_L + lam_R
            site = N - 1
            hs = 0.0
            for i in range(N):
                hs = h_value(h_tab, two_s, m[i])
                if r < 2.0 * hs:
                    site = i
                    break
                r -= 2.0 * hs
            if hs <= 0.0:
                # roundoff pushed r past the last occupied site
                site = -1
                for i in range(N - 1, -1, -1):
                    if m[i] > 0:
                        site = i
                        break
                if site < 0:
                    continue
                hs = h_value(h_tab, two_s, m[site])
            right = u3 >= 0.5
            w = 2.0 * u3 - 1.0 if right else 2.0 * u3
            k = draw_jump_size(two_s, m[site], w * hs)
            old = hs
            m[site] -= k
            _add_rate(st, 2.0 * (h_value(h_tab, two_s, m[site]) - old))
            dest = site + 1 if right else site - 1
            if 0 <= dest < N:
                oldd = h_value(h_tab, two_s, m[dest])
                m[dest] += k
                _add_rate(st, 2.0 * (h_value(h_tab, two_s, m[dest]) - oldd))
        if fired % RECOMPUTE_EVERY == 0:
            _recompute_total(m, h_tab, two_s, lam_L, lam_R, st)
    return fired, False


def h_table(two_s: int, size: int = 4096) -> np.ndarray:
    k = np.arange(1, size)
    return np.concatenate([[0.0], np.cumsum(1.0 / (two_s + k - 1))])


def log_cdf(beta: float, tol: float = 1e-17) -> np.ndarray:
    """Cached partial sums of the logarithmic distribution until 1 - cdf < tol."""
    lam = -math.log1p(-beta)
    out = []
    c = 0.0
    term = 1.0
    k = 0
    while True:
        k += 1
        term *= beta
        c += term / (k * lam)
        out.append(c)
        if term / (k * lam) / (1 - beta) < tol or k > 100000:
            break
    return np.array(out)
