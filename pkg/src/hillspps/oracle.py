"""Direct monodromy of ``-f'' + q f = lam f`` by classic RK4 over one period.

This path shares no quadrature, series or root-refinement code with the
series solver; it exists to check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import BlowUpError
from typing import Callable, Union

from .potential import GridFunction

DEFAULT_STEPS = 20000
SCAN_DENSITY = 100.0
TANGENT_TOL = 1e-6
CANDIDATE_TOL = 0.5
# crossings shallower than this are taken as rounding noise on a double edge
# (the product of 2e4 step matrices carries about 5e-12 of it near |D| = 2)
NOISE_TOL = 2e-11


@dataclass(frozen=True)
class MonodromyResult:
    lam: np.ndarray
    f1T: np.ndarray
    df1T: np.ndarray
    f2T: np.ndarray
    df2T: np.ndarray

    @property
    def discriminant(self):
        return self.f1T + self.df2T

    @property
    def determinant(self):
        return self.f1T * self.df2T - self.df1T * self.f2T


@dataclass(frozen=True)
class AnalyticPotential:
    """A T-periodic ``q`` given as a vectorized callable.

    The oracle then evaluates ``q`` at the RK4 stage points directly instead
    of interpolating grid samples, which matters where ``D`` is steep.
    """

    func: Callable
    period: float

    @property
    def samples(self) -> np.ndarray:
        return np.asarray(self.func(np.linspace(0.0, self.period, 4097)), dtype=np.float64)


Potential = Union[GridFunction, AnalyticPotential]


def _q_at(q: Potential, xs):
    if isinstance(q, AnalyticPotential):
        return np.asarray(q.func(xs), dtype=np.float64)
    return _cubic_interp(q, xs)


def _cubic_interp(q: GridFunction, xs):
    """Four-point Lagrange interpolation of a periodic grid function."""
    s = q.samples[:-1]
    M = s.size
    t = np.asarray(xs) / q.step
    j = np.floor(t).astype(np.intp)
    r = t - j
    w_m1 = -r * (r - 1) * (r - 2) / 6
    w_0 = (r + 1) * (r - 1) * (r - 2) / 2
    w_1 = -(r + 1) * r * (r - 2) / 2
    w_2 = (r + 1) * r * (r - 1) / 6
    return w_m1 * s[(j - 1) % M] + w_0 * s[j % M] + w_1 * s[(j + 1) % M] + w_2 * s[(j + 2) % M]


def steps_for(q: Potential, lam, steps: int = DEFAULT_STEPS) -> int:
    """At least 40 steps per shortest local wavelength, never below ``steps``."""
    k = math.sqrt(float(np.max(np.abs(q.samples))) + float(np.max(np.abs(lam))))
    need = int(math.ceil(40 * q.period * k / (2 * math.pi)))
    return max(steps, need)


def _step_matrices(w0, w1, w2, H):
    """One RK4 step of ``y' = [[0, 1], [w, 0]] y`` as a 2x2 matrix per entry.

    ``w0, w1, w2`` hold ``q - lam`` at the start, midpoint and end of each step.
    Matrices are returned as deviations ``E = M - I``, flattened row-major to
    4-tuples; keeping the identity out avoids rounding the small parts.
    """
    h2 = H / 2
    k1 = (0.0, 1.0, w0, 0.0)
    m = (1.0, h2, h2 * w0, 1.0)
    k2 = (m[2], m[3], w1 * m[0], w1 * m[1])
    m = (1.0 + h2 * k2[0], h2 * k2[1], h2 * k2[2], 1.0 + h2 * k2[3])
    k3 = (m[2], m[3], w1 * m[0], w1 * m[1])
    m = (1.0 + H * k3[0], H * k3[1], H * k3[2], 1.0 + H * k3[3])
    k4 = (m[2], m[3], w2 * m[0], w2 * m[1])
    c = H / 6
    return tuple(c * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(4))


def _ordered_product(p):
    """``P[n-1] @ ... @ P[1] @ P[0]`` along the last axis by pairwise reduction.

    Factors and result are deviations from the identity:
    ``(I + L)(I + R) = I + L + R + L R``.
    """
    shape = np.broadcast_shapes(*[np.shape(e) for e in p])
    a, b, c, d = (np.broadcast_to(e, shape) for e in p)
    while a.shape[-1] > 1:
        tail = None
        if a.shape[-1] % 2:
            tail = (a[..., -1:], b[..., -1:], c[..., -1:], d[..., -1:])
            a, b, c, d = a[..., :-1], b[..., :-1], c[..., :-1], d[..., :-1]
        # the later step multiplies from the left
        la, lb, lc, ld = a[..., 1::2], b[..., 1::2], c[..., 1::2], d[..., 1::2]
        ra, rb, rc, rd = a[..., 0::2], b[..., 0::2], c[..., 0::2], d[..., 0::2]
        a, b, c, d = (
            la + ra + (la * ra + lb * rc),
            lb + rb + (la * rb + lb * rd),
            lc + rc + (lc * ra + ld * rc),
            ld + rd + (lc * rb + ld * rd),
        )
        if tail is not None:
            a, b, c, d = (np.concatenate([x, t], axis=-1) for x, t in zip((a, b, c, d), tail))
    return 1.0 + a[..., 0], b[..., 0], c[..., 0], 1.0 + d[..., 0]


def integrate_monodromy(q: Potential, lam, steps: int = DEFAULT_STEPS, chunk: int = 32) -> MonodromyResult:
    """Transfer-matrix entries after one period, vectorized over ``lam``.

    Each RK4 step of the linear system is an explicit 2x2 matrix and the
    period map is their ordered product; this is algebraically the classic
    RK4 recurrence applied to both initial-condition columns.
    """
    if steps < 1000:
        raise ValueError("the oracle needs at least 1000 RK4 steps")
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    steps = steps_for(q, lam, steps)
    H = q.period / steps
    qs = _q_at(q, np.arange(2 * steps + 1) * (H / 2))
    q0, q1, q2 = qs[0:-2:2], qs[1::2], qs[2::2]
    out = np.empty((4, lam.size))
    for start in range(0, lam.size, chunk):
        lc = lam[start : start + chunk, None]
        # overflow is reported below as BlowUpError
        with np.errstate(over="ignore", invalid="ignore"):
            prod = _ordered_product(_step_matrices(q0 - lc, q1 - lc, q2 - lc, H))
        for i in range(4):
            out[i, start : start + chunk] = prod[i]
    finite = np.all(np.isfinite(out), axis=0)
    if not np.all(finite):
        raise BlowUpError(q.period, float(lam[np.flatnonzero(~finite)[0]]))
    # transfer matrix [[f1, f2], [f1', f2']]
    return MonodromyResult(lam, out[0], out[2], out[1], out[3])


def discriminant(q: Potential, lam, steps: int = DEFAULT_STEPS) -> np.ndarray:
    return integrate_monodromy(q, lam, steps).discriminant


def _extremum(q, a, b, steps, fallback, h=1e-4):
    """Zero of a central-difference ``D'`` in ``[a, b]``, else ``fallback``."""
    def slope(lam):
        d = discriminant(q, [lam - h, lam + h], steps)
        return float(d[1] - d[0]) / (2 * h)

    sa, sb = slope(a), slope(b)
    if sa * sb > 0:
        return fallback
    if sa == 0:
        return a
    if sb == 0:
        return b
    return brentq(slope, a, b, xtol=1e-14, rtol=1e-15)


def oracle_band_edges(q: Potential, window, steps: int = DEFAULT_STEPS, density: float = SCAN_DENSITY):
    """Band edges ``(lam, label)`` in ``window`` from sign changes of ``D -+ 2``.

    Sign changes are refined with Brent's method. Near every sampled local
    minimum of ``|D -+ 2|`` the extremum is located; a crossing there gives a
    narrow gap or band, a touch within ``TANGENT_TOL`` a double edge placed
    at the zero of ``D'``.
    """
    lo, hi = map(float, window)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"bad window {window!r}")
    n = max(64, int(math.ceil(density * (hi - lo))))
    dl = (hi - lo) / n
    grid = lo + dl * np.arange(-1, n + 2)
    D = discriminant(q, grid, steps)
    edges = []
    for target, label in ((2.0, "periodic"), (-2.0, "antiperiodic")):
        def f(lam, target=target):
            return float(discriminant(q, lam, steps)[0]) - target

        g = D - target
        for i in range(1, n + 1):
            if g[i] == 0:
                # a touch without a sign change is a double edge
                edges.extend([(grid[i], label)] * (2 if g[i - 1] * g[i + 1] > 0 else 1))
            elif g[i] * g[i + 1] < 0:
                edges.append((brentq(f, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-15), label))
        for i in range(1, n + 2):
            left, mid, right = g[i - 1], g[i], g[i + 1]
            if mid == 0 or mid * left <= 0 or mid * right <= 0:
                continue
            if abs(mid) > CANDIDATE_TOL or abs(mid) > abs(left) or abs(mid) > abs(right):
                continue
            # a narrow gap or band can hide between two samples: push the
            # extremum towards the target and look for a crossing
            sgn = math.copysign(1.0, mid)
            a, b = grid[i - 1], grid[i + 1]
            res = minimize_scalar(
                lambda lam: sgn * f(lam), bounds=(a, b), method="bounded", options={"xatol": 1e-13}
            )
            xm, gm = float(res.x), sgn * float(res.fun)
            if gm * mid < 0 and abs(gm) > NOISE_TOL:
                edges.append((brentq(f, a, xm, xtol=1e-14, rtol=1e-15), label))
                edges.append((brentq(f, xm, b, xtol=1e-14, rtol=1e-15), label))
            elif abs(gm) <= TANGENT_TOL:
                edges.extend([(_extremum(q, a, b, steps, xm), label)] * 2)
    return sorted((float(l), lab) for l, lab in edges if lo <= l <= hi)
