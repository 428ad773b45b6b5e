"""Vectorized double-double arithmetic on numpy float64 arrays.

A double-double value is a pair ``(hi, lo)`` with ``|lo| <= ulp(hi)/2``; it
carries roughly 32 significant digits. Only the handful of operations needed
by the series tables and Horner evaluation are provided.
"""

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1
EPS = 2.0 ** -104  # unit roundoff of a double-double


def two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def quick_two_sum(a, b):
    s = a + b
    err = b - (s - a)
    return s, err


def _split(a):
    t = _SPLITTER * a
    hi = t - (t - a)
    return hi, a - hi


def two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


def add(x, y):
    s, e = two_sum(x[0], y[0])
    t, f = two_sum(x[1], y[1])
    e = e + t
    s, e = quick_two_sum(s, e)
    e = e + f
    return quick_two_sum(s, e)


def neg(x):
    return -x[0], -x[1]


def mul(x, y):
    p, e = two_prod(x[0], y[0])
    e = e + (x[0] * y[1] + x[1] * y[0])
    return quick_two_sum(p, e)


def mul_d(x, b):
    p, e = two_prod(x[0], b)
    e = e + x[1] * b
    return quick_two_sum(p, e)


def from_ratio(a, b):
    """Double-double approximation of the quotient ``a / b`` of two doubles."""
    q1 = a / b
    p, e = two_prod(q1, b)
    r = (a - p) - e
    q2 = r / b
    return quick_two_sum(q1, q2)


def square_of(a):
    """Exact square of a double array as a double-double."""
    return two_prod(a, a)


def recip_square_of(a):
    """``1/a**2`` of a double array, to double-double accuracy."""
    r1 = 1.0 / a
    p, e = two_prod(a, r1)
    r2 = ((1.0 - p) - e) / a
    inv = quick_two_sum(r1, r2)
    return mul(inv, inv)


def cumsum(x):
    """Inclusive prefix sum (Hillis-Steele scan, log2(n) vectorized passes)."""
    hi = np.array(x[0], dtype=np.float64, copy=True)
    lo = np.array(x[1], dtype=np.float64, copy=True)
    n = hi.shape[-1]
    shift = 1
    while shift < n:
        s_hi, s_lo = add((hi[..., shift:], lo[..., shift:]), (hi[..., :-shift], lo[..., :-shift]))
        hi[..., shift:] = s_hi
        lo[..., shift:] = s_lo
        shift *= 2
    return hi, lo


def horner(coeffs, x):
    """Evaluate ``sum_n coeffs[n] * x**n`` for double ``x`` (scalar or array).

    ``coeffs`` is a double-double pair of arrays whose leading axis indexes the
    power; trailing axes broadcast against ``x``.
    """
    c_hi, c_lo = coeffs
    x = np.asarray(x, dtype=np.float64)
    shape = np.broadcast_shapes(c_hi.shape[1:], x.shape)
    p = (np.broadcast_to(c_hi[-1], shape).copy(), np.broadcast_to(c_lo[-1], shape).copy())
    for n in range(c_hi.shape[0] - 2, -1, -1):
        p = add(mul_d(p, x), (c_hi[n], c_lo[n]))
    return p


def to_float(x):
    return x[0] + x[1]
