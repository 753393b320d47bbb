"""Per-pixel hot loops of the fixed-point datapath.

Each kernel is written twice: a scalar loop compiled with numba and a
vectorised numpy fallback.  Both operate on int64 mantissas (float64 for
the convolution in reference arithmetic) and must agree bit for bit; the
test-suite checks this on random data.

Saturating kernels return the number of clamped samples alongside the
result.  Recursive kernels update their state arrays in place.
"""
from __future__ import annotations

from collections import deque
from types import SimpleNamespace

import numpy as np

from ._backend import njit, resolve_backend
from .fixedpoint import (
    EXP_RANGE,
    EXP_SEGMENT_SHIFT,
    LUT_GUARD_BITS,
    RECIP_INDEX_BITS,
    RECIP_INTERP_BITS,
    RECIP_SCALE_BITS,
    divide_lookup,
    exp_neg_lookup,
)

_RECIP_TOP_BITS = RECIP_INDEX_BITS + RECIP_INTERP_BITS

# --- numba ------------------------------------------------------------------

_exp_neg_nb = njit(exp_neg_lookup)
_divide_nb = njit(divide_lookup)


@njit
def _clamp(v, lo, hi):
    if v > hi:
        return hi, 1
    if v < lo:
        return lo, 1
    return v, 0


@njit
def _conv_stream_nb(frame, weights, out):
    # Raster-order line-buffer convolution.  A ring of k row memories with
    # zero borders holds the rows under the window; each input sample is
    # written once and, after the (half rows, half columns) warm-up, releases
    # the output of the pixel behind it.  Taps are summed in row-major kernel
    # order so float results match the direct form exactly.
    h_img, w_img = frame.shape
    k = weights.shape[0]
    half = k // 2
    zero = frame[0, 0] - frame[0, 0]
    lines = np.zeros((k, w_img + 2 * half), dtype=frame.dtype)
    for r in range(h_img + half):
        slot = r % k
        ro = r - half
        for c in range(w_img + half):
            if c < w_img:
                lines[slot, half + c] = frame[r, c] if r < h_img else zero
            co = c - half
            if ro >= 0 and co >= 0:
                acc = zero
                for i in range(k):
                    row = (ro - half + i) % k
                    for j in range(k):
                        acc += weights[i, j] * lines[row, co + j]
                out[ro, co] = acc
    return out


@njit
def _lowpass_nb(x, state, a, b, frac, lo, hi):
    y = np.empty_like(x)
    n_sat = 0
    for p in range(x.size):
        v, s = _clamp((b * x[p] + a * state[p]) >> frac, lo, hi)
        state[p] = v
        y[p] = v
        n_sat += s
    return y, n_sat


@njit
def _highpass_nb(x, state, a, b, w, frac, lo, hi):
    y = np.empty_like(x)
    n_sat = 0
    for p in range(x.size):
        lp, s1 = _clamp((b * x[p] + a * state[p]) >> frac, lo, hi)
        state[p] = lp
        v, s2 = _clamp(x[p] - ((w * lp) >> frac), lo, hi)
        y[p] = v
        n_sat += s1 + s2
    return y, n_sat


@njit
def _opl_combine_nb(center, surround, lam, omega, frac, lo, hi):
    y = np.empty_like(center)
    n_sat = 0
    for p in range(center.size):
        d, s1 = _clamp(center[p] - ((omega * surround[p]) >> frac), lo, hi)
        v, s2 = _clamp((lam * d) >> frac, lo, hi)
        y[p] = v
        n_sat += s1 + s2
    return y, n_sat


@njit
def _bipolar_nb(i_opl, prev_v, prev_ea, g0, dt, inputamp, exp_table, recip_table,
                frac, lo, hi):
    v_out = np.empty_like(i_opl)
    n_sat = 0
    for p in range(i_opl.size):
        g, s0 = _clamp(g0 + prev_ea[p], lo, hi)
        arg, s1 = _clamp((dt * g) >> frac, lo, hi)
        att = _exp_neg_nb(arg, exp_table, frac)
        num, s2 = _clamp((inputamp * i_opl[p]) >> frac, lo, hi)
        e_inf, s3 = _clamp(_divide_nb(num, frac, g, frac, frac, recip_table), lo, hi)
        diff, s4 = _clamp(prev_v[p] - e_inf, lo, hi)
        v, s5 = _clamp(((diff * att) >> frac) + e_inf, lo, hi)
        v_out[p] = v
        n_sat += s0 + s1 + s2 + s3 + s4 + s5
    return v_out, n_sat


@njit
def _square_gain_nb(v, lam, frac, lo, hi):
    y = np.empty_like(v)
    n_sat = 0
    for p in range(v.size):
        sq, s1 = _clamp((v[p] * v[p]) >> frac, lo, hi)
        q, s2 = _clamp((lam * sq) >> frac, lo, hi)
        y[p] = q
        n_sat += s1 + s2
    return y, n_sat


@njit
def _nonlinearity_nb(x, i0, lam, v0, recip_table, frac, lo, hi):
    y = np.empty_like(x)
    n_sat = 0
    guard = frac + LUT_GUARD_BITS
    for p in range(x.size):
        dx, s0 = _clamp(x[p] - v0, lo, hi)
        lin, s1 = _clamp((lam * dx) >> frac, lo, hi)
        if x[p] > 0:
            n, s2 = _clamp(i0 + lin, lo, hi)
        else:
            d, s2 = _clamp(i0 - lin, lo, hi)
            if d <= 0:
                # only reachable when i0 truncates to zero: the branch tends to 0
                n = 0
                s2 += 1
            else:
                ratio = _divide_nb(i0, frac, d, guard, frac, recip_table)
                n, s3 = _clamp((i0 * ratio) >> guard, lo, hi)
                s2 += s3
        if n < 1 and i0 > 0:
            # the exact value is strictly positive whenever i0 is
            n = 1
        y[p] = n
        n_sat += s0 + s1 + s2
    return y, n_sat


@njit
def _lif_nb(current, v_m, refractory, g_leak, tau, v_th, refr, frac, lo, hi):
    spikes = np.zeros(current.size, dtype=np.bool_)
    n_sat = 0
    for p in range(current.size):
        leak, s1 = _clamp((g_leak * v_m[p]) >> frac, lo, hi)
        drive, s2 = _clamp(current[p] - leak, lo, hi)
        v, s3 = _clamp(v_m[p] + ((drive * tau) >> frac), lo, hi)
        n_sat += s1 + s2 + s3
        rt = refractory[p] - 1
        if rt >= 1:
            v = 0
        if v > v_th:
            spikes[p] = True
            v = 0
            rt = refr + 1
        if rt < 0:
            rt = 0
        v_m[p] = v
        refractory[p] = rt
    return spikes, n_sat


# --- numpy ------------------------------------------------------------------


def _clip_count(v: np.ndarray, lo: int, hi: int) -> tuple[np.ndarray, int]:
    n = int(np.count_nonzero((v < lo) | (v > hi)))
    if n:
        v = np.clip(v, lo, hi)
    return v, n


def _conv_stream_np(frame, weights, out):
    # Row-granular line buffer: the deque holds the k most recent zero-padded
    # rows; each completed window emits one output row.
    h_img, w_img = frame.shape
    k = weights.shape[0]
    half = k // 2
    zero_row = np.zeros(w_img + 2 * half, dtype=frame.dtype)
    rows = deque([zero_row] * half, maxlen=k)
    for r in range(h_img + half):
        if r < h_img:
            padded = zero_row.copy()
            padded[half:half + w_img] = frame[r]
            rows.append(padded)
        else:
            rows.append(zero_row)
        ro = r - half
        if ro < 0:
            continue
        acc = np.zeros(w_img, dtype=frame.dtype)
        for i in range(k):
            row = rows[i]
            for j in range(k):
                acc += weights[i, j] * row[j:j + w_img]
        out[ro] = acc
    return out


def exp_neg_lookup_np(x, table, frac):
    x = np.asarray(x, dtype=np.int64)
    inside = x < (EXP_RANGE << frac)
    xc = np.where(inside, x, 0)
    pos = xc << EXP_SEGMENT_SHIFT
    i = pos >> frac
    f = pos - (i << frac)
    y = table[i] + (((table[i + 1] - table[i]) * f) >> frac)
    return np.where(inside, y >> LUT_GUARD_BITS, 0)


def divide_lookup_np(num, num_frac, den, out_frac, frac, table):
    """Vectorised :func:`fxretina.fixedpoint.divide_lookup`; ``den`` > 0."""
    num = np.asarray(num, dtype=np.int64)
    den = np.asarray(den, dtype=np.int64)
    k = np.frexp(den.astype(np.float64))[1].astype(np.int64) - 1
    top = np.where(k >= _RECIP_TOP_BITS,
                   den >> np.maximum(k - _RECIP_TOP_BITS, 0),
                   den << np.maximum(_RECIP_TOP_BITS - k, 0))
    i = (top >> RECIP_INTERP_BITS) - (1 << RECIP_INDEX_BITS)
    f = top & ((1 << RECIP_INTERP_BITS) - 1)
    r = table[i] + (((table[i + 1] - table[i]) * f) >> RECIP_INTERP_BITS)
    shift = out_frac + frac - k - RECIP_SCALE_BITS - num_frac
    prod = num * r
    return np.where(shift >= 0, prod << np.maximum(shift, 0), prod >> np.maximum(-shift, 0))


def _lowpass_np(x, state, a, b, frac, lo, hi):
    y, n = _clip_count((b * x + a * state) >> frac, lo, hi)
    state[...] = y
    return y, n


def _highpass_np(x, state, a, b, w, frac, lo, hi):
    lp, n1 = _lowpass_np(x, state, a, b, frac, lo, hi)
    y, n2 = _clip_count(x - ((w * lp) >> frac), lo, hi)
    return y, n1 + n2


def _opl_combine_np(center, surround, lam, omega, frac, lo, hi):
    d, n1 = _clip_count(center - ((omega * surround) >> frac), lo, hi)
    y, n2 = _clip_count((lam * d) >> frac, lo, hi)
    return y, n1 + n2


def _bipolar_np(i_opl, prev_v, prev_ea, g0, dt, inputamp, exp_table, recip_table,
                frac, lo, hi):
    g, s0 = _clip_count(g0 + prev_ea, lo, hi)
    arg, s1 = _clip_count((dt * g) >> frac, lo, hi)
    att = exp_neg_lookup_np(arg, exp_table, frac)
    num, s2 = _clip_count((inputamp * i_opl) >> frac, lo, hi)
    e_inf, s3 = _clip_count(divide_lookup_np(num, frac, g, frac, frac, recip_table), lo, hi)
    diff, s4 = _clip_count(prev_v - e_inf, lo, hi)
    v, s5 = _clip_count(((diff * att) >> frac) + e_inf, lo, hi)
    return v, s0 + s1 + s2 + s3 + s4 + s5


def _square_gain_np(v, lam, frac, lo, hi):
    sq, s1 = _clip_count((v * v) >> frac, lo, hi)
    q, s2 = _clip_count((lam * sq) >> frac, lo, hi)
    return q, s1 + s2


def _nonlinearity_np(x, i0, lam, v0, recip_table, frac, lo, hi):
    guard = frac + LUT_GUARD_BITS
    dx, s0 = _clip_count(x - v0, lo, hi)
    lin, s1 = _clip_count((lam * dx) >> frac, lo, hi)
    positive = x > 0
    up = i0 + lin
    down = i0 - lin
    s2 = int(np.count_nonzero(np.where(positive, (up < lo) | (up > hi), (down < lo) | (down > hi))))
    linear = np.clip(up, lo, hi)
    d = np.clip(down, lo, hi)
    bad = ~positive & (d <= 0)
    ratio = divide_lookup_np(i0, frac, np.where(d > 0, d, 1), guard, frac, recip_table)
    curved = (i0 * ratio) >> guard
    use_curved = ~positive & ~bad
    s3 = int(np.count_nonzero(use_curved & ((curved < lo) | (curved > hi))))
    y = np.where(positive, linear, np.where(bad, 0, np.clip(curved, lo, hi)))
    if i0 > 0:
        y = np.maximum(y, 1)
    return y, s0 + s1 + s2 + s3 + int(np.count_nonzero(bad))


def _lif_np(current, v_m, refractory, g_leak, tau, v_th, refr, frac, lo, hi):
    leak, s1 = _clip_count((g_leak * v_m) >> frac, lo, hi)
    drive, s2 = _clip_count(current - leak, lo, hi)
    v, s3 = _clip_count(v_m + ((drive * tau) >> frac), lo, hi)
    rt = refractory - 1
    v = np.where(rt >= 1, 0, v)
    spikes = v > v_th
    v = np.where(spikes, 0, v)
    rt = np.where(spikes, refr + 1, np.maximum(rt, 0))
    v_m[...] = v
    refractory[...] = rt
    return spikes, s1 + s2 + s3


# --- dispatch -----------------------------------------------------------------


def _flat(fn):
    # Kernels see contiguous 1-D views; results come back in frame shape.
    def wrapper(x, *args):
        shape = x.shape
        res, n_sat = fn(np.ascontiguousarray(x).reshape(-1), *args)
        return res.reshape(shape), int(n_sat)
    wrapper.__name__ = fn.__name__
    return wrapper


def _make(conv, lowpass, highpass, combine, bipolar, square, nonlin, lif, name):
    def conv_stream(frame, weights):
        frame = np.ascontiguousarray(frame)
        weights = np.ascontiguousarray(weights, dtype=frame.dtype)
        out = np.empty(frame.shape, dtype=frame.dtype)
        return conv(frame, weights, out)

    def lowpass_fixed(x, state, a, b, frac, lo, hi):
        return _flat(lambda xf, *r: lowpass(xf, state.reshape(-1), *r))(x, a, b, frac, lo, hi)

    def highpass_fixed(x, state, a, b, w, frac, lo, hi):
        return _flat(lambda xf, *r: highpass(xf, state.reshape(-1), *r))(x, a, b, w, frac, lo, hi)

    def opl_combine_fixed(center, surround, lam, omega, frac, lo, hi):
        return _flat(lambda cf, *r: combine(cf, surround.reshape(-1), *r))(
            center, lam, omega, frac, lo, hi)

    def bipolar_fixed(i_opl, prev_v, prev_ea, *rest):
        return _flat(lambda xf, *r: bipolar(xf, prev_v.reshape(-1), prev_ea.reshape(-1), *r))(
            i_opl, *rest)

    def square_gain_fixed(v, lam, frac, lo, hi):
        return _flat(square)(v, lam, frac, lo, hi)

    def nonlinearity_fixed(x, i0, lam, v0, recip_table, frac, lo, hi):
        return _flat(nonlin)(x, i0, lam, v0, recip_table, frac, lo, hi)

    def lif_fixed(current, v_m, refractory, g_leak, tau, v_th, refr, frac, lo, hi):
        return _flat(lambda cf, *r: lif(cf, v_m.reshape(-1), refractory.reshape(-1), *r))(
            current, g_leak, tau, v_th, refr, frac, lo, hi)

    return SimpleNamespace(
        name=name,
        conv_stream=conv_stream,
        lowpass_fixed=lowpass_fixed,
        highpass_fixed=highpass_fixed,
        opl_combine_fixed=opl_combine_fixed,
        bipolar_fixed=bipolar_fixed,
        square_gain_fixed=square_gain_fixed,
        nonlinearity_fixed=nonlinearity_fixed,
        lif_fixed=lif_fixed,
    )


_KERNELS = {
    "numba": _make(_conv_stream_nb, _lowpass_nb, _highpass_nb, _opl_combine_nb, _bipolar_nb,
                   _square_gain_nb, _nonlinearity_nb, _lif_nb, "numba"),
    "numpy": _make(_conv_stream_np, _lowpass_np, _highpass_np, _opl_combine_np, _bipolar_np,
                   _square_gain_np, _nonlinearity_np, _lif_np, "numpy"),
}


def get_kernels(backend: str | None = None) -> SimpleNamespace:
    return _KERNELS[resolve_backend(backend)]
