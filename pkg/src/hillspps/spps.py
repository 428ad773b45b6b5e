"""Spectral parameter power series for the factorized Hill equations

    (-d + Phi)(d + Phi) f = lam f,      (d + Phi)(-d + Phi) g = lam g.

The coefficient functions are built by alternately integrating against
``u**2`` and ``1/u**2`` where ``u = exp(-int Phi)``. Everything here works in
the *raw* spectral parameter ``s = lam - energy_offset``; callers pass the Hill
parameter ``lam`` and the table applies its own offset.

Tables and series sums are accumulated in double-double arithmetic: for deep
wells the individual series terms reach 1e18 while the sums stay O(1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import _dd
from .errors import IntertwiningError, TableError
from .potential import GridFunction, PeriodicScalarPotential, build_u

DEFAULT_ORDER = 100
RADIUS_RTOL = 1e-12
RADIUS_ATOL = 1e-10


def cumulative_simpson_dd(y, h):
    """Cumulative composite Simpson integral of a double-double integrand.

    Even nodes use the composite rule over pairs of intervals; odd nodes add
    the single-interval quadratic rule ``h/12 (5 y0 + 8 y1 - y2)``.
    """
    y_hi, y_lo = y
    n = y_hi.shape[-1]
    out_hi = np.zeros(n)
    out_lo = np.zeros(n)
    h3 = _dd.from_ratio(h, 3.0)
    h12 = _dd.from_ratio(h, 12.0)
    y0 = (y_hi[0:-2:2], y_lo[0:-2:2])
    y1 = (y_hi[1:-1:2], y_lo[1:-1:2])
    y2 = (y_hi[2::2], y_lo[2::2])
    pair = _dd.add(_dd.add(y0, y2), _dd.mul_d(y1, 4.0))
    even = _dd.mul(_dd.cumsum(pair), h3)
    out_hi[2::2], out_lo[2::2] = even
    part = _dd.add(_dd.add(_dd.mul_d(y0, 5.0), _dd.mul_d(y1, 8.0)), _dd.neg(y2))
    prev = (out_hi[0:-2:2], out_lo[0:-2:2])
    out_hi[1:-1:2], out_lo[1:-1:2] = _dd.add(prev, _dd.mul(part, h12))
    if n % 2 == 0:
        # odd number of intervals: close the last one with the mirrored partial rule
        ya = (y_hi[-3], y_lo[-3])
        yb = (y_hi[-2], y_lo[-2])
        yc = (y_hi[-1], y_lo[-1])
        tail = _dd.add(_dd.add(_dd.mul_d(yc, 5.0), _dd.mul_d(yb, 8.0)), _dd.neg(ya))
        out_hi[-1], out_lo[-1] = _dd.add((out_hi[-2], out_lo[-2]), _dd.mul(tail, h12))
    return out_hi, out_lo


@dataclass(frozen=True, eq=False)
class SppsTable:
    """Coefficient functions ``Xt[n]`` and ``X[n]`` for ``n = 0 .. 2N+1``.

    ``xt`` and ``x`` are double-double pairs of arrays with shape
    ``(2N+2, M+1)``.
    """

    u: GridFunction
    phi: GridFunction
    order: int
    xt: tuple
    x: tuple
    energy_offset: float = 0.0

    @property
    def period(self) -> float:
        return self.u.period

    @property
    def u0(self) -> float:
        return float(self.u.samples[0])

    @property
    def du0(self) -> float:
        # exact identity u' = -Phi u, never a finite difference
        return -float(self.phi.samples[0]) * self.u0

    def xt_grid(self, n: int) -> GridFunction:
        return GridFunction(self.period, self.xt[0][n] + self.xt[1][n])

    def x_grid(self, n: int) -> GridFunction:
        return GridFunction(self.period, self.x[0][n] + self.x[1][n])

    @property
    def radius(self) -> float:
        return estimate_radius(self)

    def to_json(self) -> str:
        return json.dumps(
            {
                "order": self.order,
                "period": self.period,
                "energy_offset": self.energy_offset,
                "u": self.u.samples.tolist(),
                "phi": self.phi.samples.tolist(),
                "xt": self.xt[0].tolist(),
                "xt_lo": self.xt[1].tolist(),
                "x": self.x[0].tolist(),
                "x_lo": self.x[1].tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str, check_tol: float = 1e-12) -> "SppsTable":
        doc = json.loads(text)
        T = doc["period"]
        u = GridFunction(T, np.array(doc["u"]))
        phi = GridFunction(T, np.array(doc["phi"]))
        xt = (np.array(doc["xt"]), np.array(doc.get("xt_lo", np.zeros_like(doc["xt"]))))
        x = (np.array(doc["x"]), np.array(doc.get("x_lo", np.zeros_like(doc["x"]))))
        order = int(doc["order"])
        if xt[0].shape != (2 * order + 2, u.samples.size) or x[0].shape != xt[0].shape:
            raise TableError("table arrays do not match the declared order and grid")
        table = cls(u, phi, order, xt, x, float(doc.get("energy_offset", 0.0)))
        _spot_check(table, check_tol)
        return table


def _weights(u: GridFunction):
    return _dd.square_of(u.samples), _dd.recip_square_of(u.samples)


def _spot_check(table: SppsTable, tol: float):
    """Re-integrate orders 1 and 2 and compare with the stored rows."""
    u2, iu2 = _weights(table.u)
    h = table.u.step
    one = (np.ones_like(table.u.samples), np.zeros_like(table.u.samples))
    expected = {
        ("xt", 1): cumulative_simpson_dd(_dd.mul(one, u2), h),
        ("x", 1): _dd.neg(cumulative_simpson_dd(_dd.mul(one, iu2), h)),
    }
    expected[("xt", 2)] = _dd.neg(
        cumulative_simpson_dd(_dd.mul((table.xt[0][1], table.xt[1][1]), iu2), h)
    )
    expected[("x", 2)] = cumulative_simpson_dd(_dd.mul((table.x[0][1], table.x[1][1]), u2), h)
    for (name, n), ref in expected.items():
        rows = getattr(table, name)
        stored = rows[0][n] + rows[1][n]
        got = ref[0] + ref[1]
        scale = max(1.0, float(np.max(np.abs(got))))
        if np.max(np.abs(stored - got)) > tol * scale:
            raise TableError(f"stored {name}[{n}] fails the recursion spot check")
    if np.any(table.xt[0][0] != 1.0) or np.any(table.x[0][0] != 1.0):
        raise TableError("zeroth coefficient rows must be identically 1")


def build_table(
    u: GridFunction,
    order: int = DEFAULT_ORDER,
    phi: Optional[GridFunction] = None,
    energy_offset: float = 0.0,
) -> SppsTable:
    """Build the recursive-integral tables up to ``Xt[2N+1]``, ``X[2N+1]``.

    ``phi`` is needed for derivatives (``u' = -Phi u``); when omitted it is
    recovered from ``u`` by differentiating ``log u``.
    """
    if order < 1:
        raise TableError(f"truncation order must be >= 1, got {order}")
    if not np.all(u.samples > 0):
        raise TableError("u must be strictly positive on the grid")
    if phi is None:
        phi = GridFunction(u.period, -np.gradient(np.log(u.samples), u.step, edge_order=2))
    u2, iu2 = _weights(u)
    h = u.step
    rows = 2 * order + 2
    size = u.samples.size
    xt_hi, xt_lo = np.zeros((rows, size)), np.zeros((rows, size))
    x_hi, x_lo = np.zeros((rows, size)), np.zeros((rows, size))
    xt_hi[0] = 1.0
    x_hi[0] = 1.0
    for n in range(1, rows):
        prev_t = (xt_hi[n - 1], xt_lo[n - 1])
        prev = (x_hi[n - 1], x_lo[n - 1])
        if n % 2:
            xt_hi[n], xt_lo[n] = cumulative_simpson_dd(_dd.mul(prev_t, u2), h)
            x_hi[n], x_lo[n] = _dd.neg(cumulative_simpson_dd(_dd.mul(prev, iu2), h))
        else:
            xt_hi[n], xt_lo[n] = _dd.neg(cumulative_simpson_dd(_dd.mul(prev_t, iu2), h))
            x_hi[n], x_lo[n] = cumulative_simpson_dd(_dd.mul(prev, u2), h)
    for arr in (xt_hi, xt_lo, x_hi, x_lo):
        arr.setflags(write=False)
    return SppsTable(u, phi, order, (xt_hi, xt_lo), (x_hi, x_lo), float(energy_offset))


def table_for(potential: PeriodicScalarPotential, order: int = DEFAULT_ORDER) -> SppsTable:
    return build_table(build_u(potential), order, potential.phi, potential.energy_offset)


def discriminant_coefficients(table: SppsTable):
    """``c_n = Xt[2n](T) + X[2n](T)`` for ``n = 0..N`` as a double-double pair."""
    even = slice(0, 2 * table.order + 1, 2)
    return _dd.add(
        (table.xt[0][even, -1], table.xt[1][even, -1]),
        (table.x[0][even, -1], table.x[1][even, -1]),
    )


def estimate_radius(table: SppsTable, rtol: float = RADIUS_RTOL, atol: float = RADIUS_ATOL) -> float:
    """Largest ``|s|`` at which the last retained discriminant term stays below
    ``rtol`` times the running sum of term magnitudes, and at which that sum
    times the double-double unit roundoff stays below ``atol``.

    The first condition bounds truncation, the second bounds cancellation in
    the table itself. Both tests are monotone in ``|s|``, so the radius is
    found by bisection on a log scale.
    """
    c = np.abs(_dd.to_float(discriminant_coefficients(table)))
    N = c.size - 1
    logc = np.log(np.where(c > 0, c, np.finfo(float).tiny))
    powers = np.arange(N + 1)
    log_cap = math.log(atol / _dd.EPS)

    def ok(r):
        t = logc + powers * math.log(r)
        top = t.max()
        log_total = top + math.log(np.sum(np.exp(t - top)))
        return t[-1] <= math.log(rtol) + log_total and log_total <= log_cap

    lo, hi = 1e-300, 1.0
    if not ok(lo):
        return 0.0
    while ok(hi):
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            return math.inf
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-12:
            break
    return lo


@dataclass(frozen=True)
class SeriesBundle:
    """Partial sums at the selected nodes, as double-double pairs.

    ``st1_shift`` is ``Sigma~_1 / s`` evaluated as its own power series, so
    ``s = 0`` is regular.
    """

    s: float
    st0: tuple
    st1_shift: tuple
    s0: tuple
    s1: tuple

    @property
    def st1(self):
        return _dd.mul_d(self.st1_shift, self.s)


def _select(rows, parity_slice, idx):
    hi = rows[0][parity_slice]
    lo = rows[1][parity_slice]
    if idx is not None:
        hi = hi[:, idx]
        lo = lo[:, idx]
    return hi, lo


def series_bundle(table: SppsTable, lam: float, idx=None) -> SeriesBundle:
    s = float(lam) - table.energy_offset
    N = table.order
    evens = slice(0, 2 * N + 1, 2)
    odds = slice(1, 2 * N + 2, 2)
    return SeriesBundle(
        s=s,
        st0=_dd.horner(_select(table.xt, evens, idx), s),
        st1_shift=_dd.horner(_select(table.xt, odds, idx), s),
        s0=_dd.horner(_select(table.x, evens, idx), s),
        s1=_dd.horner(_select(table.x, odds, idx), s),
    )


class FundamentalPair(NamedTuple):
    y1: np.ndarray
    dy1: np.ndarray
    y2: np.ndarray
    dy2: np.ndarray
    trusted: bool

    @property
    def wronskian(self):
        return self.y1 * self.dy2 - self.dy1 * self.y2

    @property
    def wronskian_deviation(self):
        """``|W - 1|`` relative to the size of the two products that cancel in ``W``."""
        scale = np.abs(self.y1 * self.dy2) + np.abs(self.dy1 * self.y2)
        return np.abs(self.wronskian - 1) / np.maximum(scale, 1.0)


def _nodes(table: SppsTable, x):
    if x is None:
        return None
    return table.u.node_index(x)


def _trusted(table: SppsTable, lam: float) -> bool:
    return abs(float(lam) - table.energy_offset) <= estimate_radius(table)


def _at(arr, idx):
    return arr if idx is None else arr[idx]


def f_pair(table: SppsTable, x=None, lam: float = 0.0) -> FundamentalPair:
    """``(f1, f1', f2, f2')`` of ``(-d + Phi)(d + Phi) f = s f`` at grid nodes.

    ``x`` is snapped to the nearest node; ``None`` means every node.
    """
    idx = _nodes(table, x)
    b = series_bundle(table, lam, idx)
    u = _at(table.u.samples, idx)
    du = -_at(table.phi.samples, idx) * u
    u0, du0 = table.u0, table.du0
    st0, s1 = _dd.to_float(b.st0), _dd.to_float(b.s1)
    st1, s0 = _dd.to_float(b.st1), _dd.to_float(b.s0)
    dst0 = -st1 / (u * u)
    ds1 = -s0 / (u * u)
    f1 = (u / u0) * st0 + du0 * u * s1
    df1 = (du / u0) * st0 + (u / u0) * dst0 + du0 * (du * s1 + u * ds1)
    f2 = -u0 * u * s1
    df2 = -u0 * (du * s1 + u * ds1)
    return FundamentalPair(f1, df1, f2, df2, _trusted(table, lam))


def g_pair(table: SppsTable, phi0: Optional[float] = None, x=None, lam: float = 0.0) -> FundamentalPair:
    """``(g1, g1', g2, g2')`` of ``(d + Phi)(-d + Phi) g = s g`` at grid nodes."""
    if phi0 is None:
        phi0 = float(table.phi.samples[0])
    idx = _nodes(table, x)
    b = series_bundle(table, lam, idx)
    u = _at(table.u.samples, idx)
    du = -_at(table.phi.samples, idx) * u
    u0 = table.u0
    s0, s1 = _dd.to_float(b.s0), _dd.to_float(b.s1)
    sh, st0 = _dd.to_float(b.st1_shift), _dd.to_float(b.st0)
    ds0 = u * u * b.s * s1
    dsh = u * u * st0
    g1 = (u0 / u) * s0 - phi0 / (u0 * u) * sh
    dg1 = u0 * (ds0 / u - s0 * du / (u * u)) - phi0 / u0 * (dsh / u - sh * du / (u * u))
    g2 = sh / (u0 * u)
    dg2 = (dsh / u - sh * du / (u * u)) / u0
    return FundamentalPair(g1, dg1, g2, dg2, _trusted(table, lam))


def intertwine(f, df, phi_x, omega: float):
    """Map an f-solution to the g-solution via ``(d + Phi) f = omega g``."""
    if omega == 0:
        raise IntertwiningError("omega = 0: the intertwining relation cannot be inverted; use g_pair")
    return (np.asarray(df) + np.asarray(phi_x) * np.asarray(f)) / omega
