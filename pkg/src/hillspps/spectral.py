"""Hill discriminant polynomial, band-edge search and spectrum classification."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import _dd
from .errors import PotentialError, TruncationWarning, TruncationWindowError, UnsupportedClosedForm
from .potential import RazavyParams
from .spps import SppsTable, discriminant_coefficients, estimate_radius

SCAN_DENSITY = 1e4
ROOT_RTOL = 1e-12
TANGENT_TOL = 1e-6
MERGE_TOL = 1e-9
EDGE_TOL = 1e-9
WINDOW_SLACK = 1e-9
_EPS = np.finfo(np.float64).eps


class Region(str, Enum):
    BAND = "band"
    GAP = "gap"
    EDGE = "edge"


PERIODIC = "periodic"
ANTIPERIODIC = "antiperiodic"
SIMPLE = "simple"
DOUBLE = "double-or-close"


@dataclass(frozen=True, eq=False)
class DiscriminantPolynomial:
    """Truncated discriminant ``D_N(lam) = sum c_n (lam - offset)**n``.

    ``coeffs_dd`` keeps the double-double coefficients; ``coeffs`` rounds them.
    """

    coeffs_dd: tuple
    period: float
    order: int
    trusted_radius: float
    energy_offset: float = 0.0

    @property
    def coeffs(self) -> np.ndarray:
        return self.coeffs_dd[0] + self.coeffs_dd[1]

    @property
    def trusted_window(self):
        return (self.energy_offset - self.trusted_radius, self.energy_offset + self.trusted_radius)

    def is_trusted(self, lam) -> bool:
        lo, hi = self.trusted_window
        lam = np.asarray(lam)
        return bool(np.all((lam >= lo) & (lam <= hi)))


def build_discriminant(table: SppsTable, periodicity_tol: float = 1e-8) -> DiscriminantPolynomial:
    u = table.u.samples
    if abs(u[-1] - u[0]) > periodicity_tol * max(1.0, abs(u[0])):
        raise PotentialError(
            f"u is not periodic: |u(T) - u(0)| = {abs(u[-1] - u[0]):.3e}; "
            "the series discriminant needs u(0) = u(T)"
        )
    c = discriminant_coefficients(table)
    return DiscriminantPolynomial(
        (np.array(c[0]), np.array(c[1])),
        table.period,
        table.order,
        estimate_radius(table),
        table.energy_offset,
    )


def _shifted(poly: DiscriminantPolynomial, lam):
    return np.asarray(lam, dtype=np.float64) - poly.energy_offset


_CHUNK = 1 << 16
VALUE_RTOL = 1e-13


def _eval_minus(poly: DiscriminantPolynomial, lam, target: float = 0.0, rtol=None) -> np.ndarray:
    """``D_N(lam) - target`` with a guaranteed sign.

    Plain float Horner is used wherever its a-priori error bound is small
    compared with the result; remaining points are redone in double-double.
    With ``rtol`` set, float results are kept only when the bound is below
    ``rtol * max(1, |result|)``, so the values themselves are accurate.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    if lam.size > _CHUNK:
        return np.concatenate([_eval_minus(poly, lam[i:i + _CHUNK], target, rtol)
                               for i in range(0, lam.size, _CHUNK)])
    s = _shifted(poly, lam)
    c = poly.coeffs_dd[0]
    p = np.full_like(s, c[-1])
    bound = np.full_like(s, abs(c[-1]))
    a = np.abs(s)
    for cn in c[-2::-1]:
        p = p * s + cn
        bound = bound * a + abs(cn)
    val = p - target
    err = 4.0 * (c.size + 2) * _EPS * (bound + abs(target))
    if rtol is None:
        risky = np.abs(val) <= 64.0 * err
    else:
        risky = err > rtol * np.maximum(1.0, np.abs(val))
    if np.any(risky):
        d = _dd.horner(poly.coeffs_dd, s[risky])
        val[risky] = _dd.to_float(_dd.add(d, (np.full(d[0].shape, -target), np.zeros(d[0].shape))))
    return val


def eval_discriminant(poly: DiscriminantPolynomial, lam):
    """Horner evaluation of ``D_N``; warns outside the trusted window."""
    if not poly.is_trusted(lam):
        warnings.warn(
            f"lambda outside trusted window {poly.trusted_window}", TruncationWarning, stacklevel=2
        )
    out = _eval_minus(poly, lam, rtol=VALUE_RTOL)
    return float(out[0]) if np.ndim(lam) == 0 else out


def classify(poly: DiscriminantPolynomial, lam: float, tol_edge: float = EDGE_TOL) -> Region:
    above = float(_eval_minus(poly, lam, 2.0 + tol_edge)[0])
    below = float(_eval_minus(poly, lam, -2.0 - tol_edge)[0])
    if above > 0 or below < 0:
        return Region.GAP
    above = float(_eval_minus(poly, lam, 2.0 - tol_edge)[0])
    below = float(_eval_minus(poly, lam, -2.0 + tol_edge)[0])
    if above < 0 and below > 0:
        return Region.BAND
    return Region.EDGE


@dataclass(frozen=True)
class Edge:
    lam: float
    label: str
    multiplicity: str = SIMPLE


@dataclass(frozen=True)
class DiracSpectrum:
    """Dirac energies ``omega = +-sqrt(lam - offset)``; edges below the offset have no real omega."""

    omegas: tuple
    no_real_omega: tuple


@dataclass(frozen=True)
class SpectrumReport:
    edges: tuple
    bands: tuple
    gaps: tuple
    window: tuple
    energy_offset: float = 0.0
    dirac_edges: Optional[DiracSpectrum] = field(default=None)

    @property
    def values(self) -> np.ndarray:
        return np.array([e.lam for e in self.edges])

    def rows(self):
        """``(n, lambda, bc_label, multiplicity, omega_plus, omega_minus)`` per edge."""
        out = []
        for n, e in enumerate(self.edges):
            w = _omega(e.lam, self.energy_offset)
            out.append((n, e.lam, e.label, e.multiplicity, w, None if w is None else -w))
        return out

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "energy_offset": self.energy_offset,
            "edges": [asdict(e) for e in self.edges],
            "bands": [list(b) for b in self.bands],
            "gaps": [list(g) for g in self.gaps],
            "dirac_edges": asdict(self.dirac_edges) if self.dirac_edges else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "lambda", "bc_label", "multiplicity", "omega_plus", "omega_minus"])
        for n, lam, label, mult, wp, wm in self.rows():
            w.writerow([n, fmt(lam), label, mult, "" if wp is None else fmt(wp), "" if wm is None else fmt(wm)])
        return buf.getvalue()


def fmt(v: float) -> str:
    # adding 0.0 turns -0.0 into 0.0
    return f"{v + 0.0:.15g}"


def _omega(lam: float, offset: float) -> Optional[float]:
    s = lam - offset
    if s < -ROOT_RTOL * max(1.0, abs(lam)):
        return None
    return math.sqrt(max(s, 0.0))


def _bisect(poly, target, a, b):
    """Vectorized bisection of ``D - target`` on brackets ``[a, b]``."""
    a = np.array(a, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    if a.size == 0:
        return a
    ga = np.sign(_eval_minus(poly, a, target))
    for _ in range(200):
        width = b - a
        if np.all(width <= ROOT_RTOL * np.maximum(1.0, np.abs(a))):
            break
        m = a + width / 2
        gm = _eval_minus(poly, m, target)
        exact = gm == 0
        left = np.sign(gm) == ga
        a = np.where(exact, m, np.where(left, m, a))
        b = np.where(exact, m, np.where(left, b, m))
    return a + (b - a) / 2


def _slope(poly: DiscriminantPolynomial, lam) -> np.ndarray:
    """``dD_N/dlam`` from the differentiated coefficients, in double-double."""
    hi, lo = poly.coeffs_dd
    n = np.arange(1, hi.size, dtype=np.float64)
    dc = _dd.mul_d((hi[1:], lo[1:]), n)
    return _dd.to_float(_dd.horner(dc, _shifted(poly, np.atleast_1d(lam))))


def eval_slope(poly: DiscriminantPolynomial, lam):
    """``dD_N/dlam`` at ``lam`` (scalar or array)."""
    out = _slope(poly, lam)
    return float(out[0]) if np.ndim(lam) == 0 else out


def mixed_deviation(poly: DiscriminantPolynomial, lam, D_ref):
    """Pointwise ``min(|dD| / max(1, |D|), |dD| / (|D'| max(1, |lam|)))``.

    The first term is the relative error in ``D``, the second the relative
    change of ``lam`` that would explain the difference. Where ``D`` is very
    steep (next to near-double edges of deep wells) only the second is
    meaningful for any floating-point evaluation.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    D_ref = np.atleast_1d(np.asarray(D_ref, dtype=np.float64))
    dD = np.abs(_eval_minus(poly, lam, rtol=VALUE_RTOL) - D_ref)
    forward = dD / np.maximum(1.0, np.abs(D_ref))
    slope = np.abs(_slope(poly, lam)) * np.maximum(1.0, np.abs(lam))
    with np.errstate(divide="ignore", invalid="ignore"):
        backward = np.where(slope > 0, dD / slope, np.inf)
    return np.minimum(forward, backward)


def _extremum(poly, a: float, b: float):
    """Zero of ``D_N'`` in ``[a, b]`` by bisection, or None without a sign change.

    A double edge sits at an extremum of ``D``; locating it through the simple
    zero of the derivative avoids the square-root conditioning of ``D = +-2``.
    """
    sa, sb = np.sign(_slope(poly, [a, b]))
    if sa == 0:
        return a
    if sb == 0:
        return b
    if sa == sb:
        return None
    for _ in range(200):
        if b - a <= ROOT_RTOL * max(1.0, abs(a)):
            break
        m = a + (b - a) / 2
        sm = np.sign(_slope(poly, m)[0])
        if sm == 0:
            return m
        if sm == sa:
            a = m
        else:
            b = m
    return a + (b - a) / 2


def _roots_of(poly, target, grid, g):
    """Roots of ``D - target`` in the interior part of ``grid`` (first and last
    points are guard samples outside the window)."""
    found = []
    n = grid.size
    zero = np.flatnonzero(g[1:-1] == 0) + 1
    for i in zero:
        if g[i - 1] * g[i + 1] > 0:
            found.extend([(float(grid[i]), DOUBLE)] * 2)
        else:
            found.append((float(grid[i]), SIMPLE))
    sc = np.flatnonzero((g[1:-2] * g[2:-1]) < 0) + 1
    found.extend((float(r), SIMPLE) for r in _bisect(poly, target, grid[sc], grid[sc + 1]))
    # lower neighbour of an exact zero pairs with its own sign change on the left
    sc_left = np.flatnonzero((g[0:1] * g[1:2]) < 0)
    if sc_left.size and g[1] != 0:
        found.extend((float(r), SIMPLE) for r in _bisect(poly, target, grid[:1], grid[1:2]))
    mag = np.abs(g)
    cand = np.flatnonzero(
        (mag[1:-1] <= mag[:-2])
        & (mag[1:-1] <= mag[2:])
        & (mag[1:-1] < TANGENT_TOL)
        & (g[1:-1] * g[:-2] > 0)
        & (g[1:-1] * g[2:] > 0)
    ) + 1
    for i in cand:
        lo, hi = float(grid[i - 1]), float(grid[i + 1])
        res = minimize_scalar(
            lambda x: abs(float(_eval_minus(poly, x, target)[0])),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": ROOT_RTOL * max(1.0, abs(lo))},
        )
        xm = float(res.x)
        gm = float(_eval_minus(poly, xm, target)[0])
        if gm != 0.0 and np.sign(gm) != np.sign(g[i]):
            pair = _bisect(poly, target, [lo, xm], [xm, hi])
            found.extend((float(r), DOUBLE) for r in pair)
        elif abs(gm) < TANGENT_TOL:
            xe = _extremum(poly, lo, hi)
            found.extend([(xm if xe is None else xe, DOUBLE)] * 2)
    del n
    return found


def find_band_edges(
    poly: DiscriminantPolynomial,
    lam_min: float,
    lam_max: float,
    density: float = SCAN_DENSITY,
) -> SpectrumReport:
    """All roots of ``D_N - 2`` (periodic) and ``D_N + 2`` (antiperiodic) in the window.

    Dense sign-change scan, bisection to ``1e-12 max(1, |lam|)``, and local
    minimization of ``|D -+ 2|`` for tangential (double or nearly double) roots.
    """
    if not lam_min < lam_max:
        raise ValueError(f"empty window [{lam_min}, {lam_max}]")
    tlo, thi = poly.trusted_window
    if lam_min < tlo or lam_max > thi:
        raise TruncationWindowError(
            f"window [{lam_min:.15g}, {lam_max:.15g}] exceeds the trusted truncation radius",
            (tlo, thi),
        )
    n = max(256, int(math.ceil(density * (lam_max - lam_min))))
    step = (lam_max - lam_min) / n
    grid = lam_min + step * np.arange(-1, n + 2)
    grid[1], grid[-2] = lam_min, lam_max
    found = []
    for target, label in ((2.0, PERIODIC), (-2.0, ANTIPERIODIC)):
        g = _eval_minus(poly, grid, target)
        for lam, mult in _roots_of(poly, target, grid, g):
            # edges computed a hair outside a window end still belong to it
            if lam_min - WINDOW_SLACK * max(1.0, abs(lam_min)) <= lam <= lam_max + WINDOW_SLACK * max(1.0, abs(lam_max)):
                found.append(Edge(lam, label, mult))
    found.sort(key=lambda e: (e.lam, e.label))
    edges = _flag_close(found)
    bands, gaps = _intervals(poly, edges, lam_min, lam_max)
    report = SpectrumReport(tuple(edges), tuple(bands), tuple(gaps), (lam_min, lam_max), poly.energy_offset)
    return SpectrumReport(
        report.edges, report.bands, report.gaps, report.window, report.energy_offset, dirac_eigenvalues(report)
    )


def _flag_close(edges):
    out = list(edges)
    for i in range(len(out) - 1):
        a, b = out[i], out[i + 1]
        if abs(b.lam - a.lam) <= MERGE_TOL * max(1.0, abs(a.lam)):
            out[i] = Edge(a.lam, a.label, DOUBLE)
            out[i + 1] = Edge(b.lam, b.label, DOUBLE)
    return out


def _intervals(poly, edges, lo, hi):
    pts = sorted({lo, hi, *(min(max(e.lam, lo), hi) for e in edges)})
    bands, gaps = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        mid = a + (b - a) / 2
        in_band = classify(poly, mid, 0.0) != Region.GAP
        (bands if in_band else gaps).append((a, b))
    return _merge(bands), _merge(gaps)


def _merge(intervals):
    out = []
    for a, b in intervals:
        if out and out[-1][1] == a:
            out[-1] = (out[-1][0], b)
        else:
            out.append((a, b))
    return out


def label_pattern_ok(edges) -> bool:
    """Labels run P, A, A, P, P, A, A, ... starting from the ground state, and values are sorted."""
    lams = [e.lam for e in edges]
    if lams != sorted(lams):
        return False
    for k, e in enumerate(edges):
        expect = PERIODIC if ((k + 1) // 2) % 2 == 0 else ANTIPERIODIC
        if e.label != expect:
            return False
    return True


def dirac_eigenvalues(report: SpectrumReport) -> DiracSpectrum:
    omegas, none = [], []
    for e in report.edges:
        w = _omega(e.lam, report.energy_offset)
        if w is None:
            none.append(e.lam)
        elif w == 0.0:
            omegas.append(0.0)
        else:
            omegas.extend([w, -w])
    return DiracSpectrum(tuple(omegas), tuple(none))


def razavy_reference(p: RazavyParams):
    """Closed-form ``(lam0, lam3, lam4)`` for the m = 2 Razavy potential."""
    if p.m != 2:
        raise UnsupportedClosedForm(f"reference eigenvalues are known here only for m = 2 (got {p.m})")
    r = math.sqrt(1.0 + p.xi * p.xi)
    return 2.0 * (1.0 - r), 4.0, 2.0 * (1.0 + r)


def default_window(poly: DiscriminantPolynomial, razavy: Optional[RazavyParams] = None,
                   lam_min: Optional[float] = None, lam_max: Optional[float] = None):
    """Scan window: below the ground state and up to 1.2x the requested top,
    clipped to the trusted window."""
    tlo, thi = poly.trusted_window
    if razavy is not None and razavy.m == 2:
        lam0, _, lam4 = razavy_reference(razavy)
        lo = lam0 - 5.0 if lam_min is None else lam_min
        top = max(40.0, lam4 + 40.0) if lam_max is None else lam_max
    else:
        lo = max(-50.0, tlo) if lam_min is None else lam_min
        top = 40.0 if lam_max is None else lam_max
    # explicit limits are kept as given so that find_band_edges can reject them
    if lam_min is None:
        lo = max(lo, tlo)
    hi = min(thi, 1.2 * top) if lam_max is None else top
    return lo, hi


def discriminant_samples(poly: DiscriminantPolynomial, lam_min: float, lam_max: float, count: int):
    """Uniform ``(lam, D)`` sweep for plotting."""
    lam = np.linspace(lam_min, lam_max, count)
    return lam, _eval_minus(poly, lam, rtol=VALUE_RTOL)
