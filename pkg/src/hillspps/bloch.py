"""Quasi-periodic (Bloch) solutions by James matching, and the Dirac spinor
assembled from the two factorized Hill equations."""

from __future__ import annotations

import cmath
import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMatchingError, NoRealSpinorError
from .spectral import build_discriminant, eval_discriminant
from .spps import FundamentalPair, SppsTable, f_pair, g_pair

DIV_EPS = 1e-12


def _sqrt_disc(D: float) -> complex:
    # (D - 2)(D + 2) keeps accuracy near the band edges
    return cmath.sqrt(complex((D - 2.0) * (D + 2.0)))


def bloch_factors(D: float):
    """``beta_pm = (D -+ sqrt(D**2 - 4)) / 2`` on the principal branch.

    For ``D > 2`` ``beta_+`` is the decaying factor; inside a band
    ``Im beta_+ <= 0``. The smaller-magnitude root is taken as ``1/larger`` to
    avoid cancellation.
    """
    sq = _sqrt_disc(D)
    bp = (D - sq) / 2
    bm = (D + sq) / 2
    if D > 2:
        bp = 1 / bm
    elif D < -2:
        bm = 1 / bp
    return complex(bp), complex(bm)


def matching_constants(f1T: float, f2T: float, df2T: float, D: float, eps_div: float = DIV_EPS):
    """``alpha_pm = (f2'(T) - f1(T) -+ sqrt(D**2 - 4)) / (2 f2(T))``.

    Evaluated as ``(beta_pm - f1(T)) / f2(T)``, which is the same expression
    rearranged to use the cancellation-free Bloch factors.
    """
    scale = max(1.0, abs(f1T), abs(df2T))
    if abs(f2T) <= eps_div * scale:
        raise DegenerateMatchingError(f"f2(T) = {f2T:.3e} vanishes; James matching is singular")
    bp, bm = bloch_factors(D)
    return (bp - f1T) / f2T, (bm - f1T) / f2T


def quasimomentum(D: float, T: float) -> complex:
    """``k`` with ``e^{ikT}`` a Bloch factor; real in ``[0, pi/T]`` on bands, complex in gaps."""
    if T <= 0:
        raise ValueError("period must be positive")
    if -2.0 <= D <= 2.0:
        return complex(math.acos(D / 2) / T)
    if D > 2.0:
        return complex(0.0, math.acosh(D / 2) / T)
    return complex(math.pi / T, math.acosh(-D / 2) / T)


@dataclass(frozen=True, eq=False)
class BlochSolution:
    """Bloch solutions ``F_pm = c1 y1 + c2 y2`` sampled over one cell.

    ``construction`` records how the combination was obtained: ``james``
    (``c1 = 1``, ``c2 = alpha``), ``transposed`` (matching on ``f1'(T)`` when
    ``f2(T)`` vanishes) or ``eigenfunction`` (diagonal monodromy).
    """

    lam: float
    D: float
    alpha_plus: complex
    alpha_minus: complex
    beta_plus: complex
    beta_minus: complex
    k: complex
    period: float
    nodes: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    dplus: np.ndarray
    dminus: np.ndarray
    construction: str = "james"

    def cell(self, sign: str = "+"):
        return (self.plus, self.dplus) if sign == "+" else (self.minus, self.dminus)

    def beta(self, sign: str = "+") -> complex:
        return self.beta_plus if sign == "+" else self.beta_minus

    def scaled(self, factor_plus: complex, factor_minus: complex) -> "BlochSolution":
        return BlochSolution(
            self.lam, self.D, self.alpha_plus, self.alpha_minus, self.beta_plus, self.beta_minus,
            self.k, self.period, self.nodes, factor_plus * self.plus, factor_minus * self.minus,
            factor_plus * self.dplus, factor_minus * self.dminus, self.construction,
        )


def _combine(pair: FundamentalPair, c1: complex, c2: complex):
    return c1 * pair.y1 + c2 * pair.y2, c1 * pair.dy1 + c2 * pair.dy2


def _match(pair: FundamentalPair, D: float, eps_div: float = DIV_EPS):
    """Coefficients ``(c1, c2)`` for both branches plus the construction used."""
    f1T, df1T, f2T, df2T = pair.y1[-1], pair.dy1[-1], pair.y2[-1], pair.dy2[-1]
    bp, bm = bloch_factors(D)
    scale = max(1.0, abs(f1T), abs(df2T))
    try:
        ap, am = matching_constants(f1T, f2T, df2T, D, eps_div)
        return ((1.0, ap), (1.0, am)), (ap, am), "james"
    except DegenerateMatchingError:
        pass
    if abs(df1T) > eps_div * scale:
        # F = gamma f1 + f2 with gamma = (beta - f2'(T)) / f1'(T)
        coeffs = []
        for beta in (bp, bm):
            gamma = (beta - df2T) / df1T
            coeffs.append((1.0, 1.0 / gamma) if abs(gamma) > eps_div else (0.0, 1.0))
        alphas = tuple(c[1] if c[0] == 1.0 else complex("inf") for c in coeffs)
        return tuple(coeffs), alphas, "transposed"
    # diagonal monodromy: f1 and f2 are themselves the Bloch solutions
    if abs(f1T - bp) <= abs(df2T - bp):
        coeffs = ((1.0, 0.0), (0.0, 1.0))
    else:
        coeffs = ((0.0, 1.0), (1.0, 0.0))
    return coeffs, (0j, complex("inf")), "eigenfunction"


def bloch_from_pair(pair: FundamentalPair, D: float, lam: float, period: float, nodes) -> BlochSolution:
    coeffs, alphas, how = _match(pair, D)
    bp, bm = bloch_factors(D)
    Fp, dFp = _combine(pair, *coeffs[0])
    Fm, dFm = _combine(pair, *coeffs[1])
    return BlochSolution(
        lam, D, complex(alphas[0]), complex(alphas[1]), bp, bm, quasimomentum(D, period), period,
        nodes, np.asarray(Fp, dtype=complex), np.asarray(Fm, dtype=complex),
        np.asarray(dFp, dtype=complex), np.asarray(dFm, dtype=complex), how,
    )


def bloch_solution(table: SppsTable, lam: float) -> BlochSolution:
    """Bloch solutions of the f-equation at Hill parameter ``lam``."""
    D = float(eval_discriminant(build_discriminant(table), lam))
    return bloch_from_pair(f_pair(table, None, lam), D, lam, table.period, table.u.nodes)


def _beta_power(cell: BlochSolution, sign: str, n):
    n = np.asarray(n)
    b = cell.beta(sign)
    other = cell.beta("-" if sign == "+" else "+")
    # negative powers through beta_+ beta_- = 1
    return np.where(n >= 0, b ** np.abs(n), other ** np.abs(n))


def extend(cell: BlochSolution, x, sign: str = "+"):
    """Value of the Bloch solution at arbitrary ``x`` from its one-cell data."""
    x = np.asarray(x, dtype=np.float64)
    T = cell.period
    n = np.floor(x / T).astype(np.int64)
    r = x - n * T
    M = cell.nodes.size - 1
    idx = np.rint(r / (T / M)).astype(np.intp)
    values = cell.plus if sign == "+" else cell.minus
    out = _beta_power(cell, sign, n) * values[np.clip(idx, 0, M)]
    return out if out.ndim else complex(out)


@dataclass(frozen=True, eq=False)
class DiracSpinorSolution:
    """``W_pm = (F_pm, G_pm)`` solving ``(-i sigma_y d + sigma_x Phi) W = omega W``.

    ``lower`` holds ``G_pm`` already scaled so that ``omega G = F' + Phi F``;
    ``a`` and ``b`` are the James constants of the f- and g-systems.
    """

    lam: float
    omega: float
    upper: BlochSolution
    lower: BlochSolution
    a: tuple
    b: tuple
    phi: np.ndarray

    @property
    def ab_difference(self):
        return tuple(complex(x - y) for x, y in zip(self.a, self.b))

    def intertwining_residual(self, sign: str = "+") -> np.ndarray:
        F, dF = self.upper.cell(sign)
        G, _ = self.lower.cell(sign)
        return self.omega * G - (dF + self.phi * F)

    def dirac_residual(self, sign: str = "+") -> np.ndarray:
        """Residual of the second Dirac row, ``-G' + Phi G - omega F``."""
        F, _ = self.upper.cell(sign)
        G, dG = self.lower.cell(sign)
        return -dG + self.phi * G - self.omega * F

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "re_F+", "im_F+", "re_G+", "im_G+", "re_F-", "im_F-", "re_G-", "im_G-"])
        for j, x in enumerate(self.upper.nodes):
            vals = (self.upper.plus[j], self.lower.plus[j], self.upper.minus[j], self.lower.minus[j])
            w.writerow([f"{x:.15g}"] + [f"{p + 0.0:.15g}" for v in vals for p in (v.real, v.imag)])
        return buf.getvalue()


def assemble_spinor(table: SppsTable, lam: float, sign: str = "+") -> DiracSpinorSolution:
    """Self-matching spinor solutions for ``omega = sign * sqrt(lam - offset)``."""
    s = lam - table.energy_offset
    if s < 0:
        raise NoRealSpinorError(f"lambda - offset = {s:.6g} < 0 has no real omega")
    omega = math.sqrt(s) * (1.0 if sign == "+" else -1.0)
    if omega == 0.0:
        raise NoRealSpinorError("omega = 0 decouples the spinor components; no intertwined solution")
    D = float(eval_discriminant(build_discriminant(table), lam))
    nodes = table.u.nodes
    upper = bloch_from_pair(f_pair(table, None, lam), D, lam, table.period, nodes)
    lower_raw = bloch_from_pair(g_pair(table, None, None, lam), D, lam, table.period, nodes)
    phi = table.phi.samples
    kappa = []
    for sg in ("+", "-"):
        F, dF = upper.cell(sg)
        G, _ = lower_raw.cell(sg)
        target = (dF[0] + phi[0] * F[0]) / omega
        kappa.append(target / G[0] if G[0] != 0 else 1.0)
    lower = lower_raw.scaled(*kappa)
    return DiracSpinorSolution(
        lam, omega, upper, lower,
        (upper.alpha_plus, upper.alpha_minus), (lower_raw.alpha_plus, lower_raw.alpha_minus), phi,
    )


def extended_samples(sol: BlochSolution, cells: int, sign: str = "+"):
    """Node samples over ``[0, cells*T]`` with the cell-wise Bloch scaling applied."""
    M = sol.nodes.size - 1
    h = sol.period / M
    x = np.arange(cells * M + 1) * h
    return x, extend(sol, x, sign)


def spinor_dump(sol: DiracSpinorSolution, cells: int = 1) -> dict:
    x, Fp = extended_samples(sol.upper, cells, "+")
    _, Fm = extended_samples(sol.upper, cells, "-")
    _, Gp = extended_samples(sol.lower, cells, "+")
    _, Gm = extended_samples(sol.lower, cells, "-")
    return {"x": x, "F+": Fp, "G+": Gp, "F-": Fm, "G-": Gm}


def dump_csv(columns: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = [k for k in columns if k != "x"]
    w.writerow(["x"] + [f"{part}_{k}" for k in keys for part in ("re", "im")])
    for j, x in enumerate(columns["x"]):
        row = [f"{x:.15g}"]
        for k in keys:
            v = complex(columns[k][j])
            row += [f"{v.real + 0.0:.15g}", f"{v.imag + 0.0:.15g}"]
        w.writerow(row)
    return buf.getvalue()


def dump_json(columns: dict, meta: dict) -> str:
    doc = dict(meta)
    doc["x"] = [float(v) for v in columns["x"]]
    for k, v in columns.items():
        if k == "x":
            continue
        doc[k] = {"re": np.real(v).tolist(), "im": np.imag(v).tolist()}
    return json.dumps(doc)
