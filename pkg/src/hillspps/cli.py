"""Command-line entry point: ``hillspps <subcommand> [options]``.

Exit codes: 0 success, 1 validation or tolerance failure, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import bloch, oracle, spectral
from .errors import HillSppsError, TruncationWarning, TruncationWindowError
from .potential import (
    DEFAULT_GRID,
    GridFunction,
    PeriodicScalarPotential,
    RazavyParams,
    razavy_phi,
    razavy_v1_at,
    razavy_v2_at,
)
from .spectral import fmt
from .spps import DEFAULT_ORDER, table_for, f_pair, g_pair

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
TABLE_ROWS = 7


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    xi: Optional[float] = None
    m: int = 2
    potential_file: Optional[str] = None
    energy_offset: float = 0.0
    grid: int = DEFAULT_GRID
    order: int = DEFAULT_ORDER
    lambda_min: Optional[float] = None
    lambda_max: Optional[float] = None
    format: str = "csv"
    format_given: bool = False
    out: Optional[str] = None
    extra: dict = field(default_factory=dict)

    @property
    def razavy(self) -> Optional[RazavyParams]:
        return None if self.xi is None else RazavyParams(self.xi, self.m)

    def potential(self) -> PeriodicScalarPotential:
        if self.razavy is not None:
            return razavy_phi(self.razavy, self.grid)
        grid = GridFunction.load(self.potential_file)
        return PeriodicScalarPotential(grid, energy_offset=self.energy_offset, name=self.potential_file)

    def hill_potentials(self, pot: PeriodicScalarPotential):
        """``(q1, q2)`` for the oracle: closed forms for Razavy, numerical otherwise."""
        if self.razavy is not None:
            T = pot.period
            return (oracle.AnalyticPotential(razavy_v1_at(self.razavy), T),
                    oracle.AnalyticPotential(razavy_v2_at(self.razavy), T))
        return pot.hill_potentials()


def _config(args) -> RunConfig:
    xi = getattr(args, "xi", None)
    if xi is None:
        xi = args.razavy_xi
    if (xi is None) == (args.potential_file is None):
        raise ConfigError("give exactly one of --razavy-xi or --potential-file")
    if xi is not None and args.razavy_m != 2:
        raise ConfigError(f"the series pipeline needs the m = 2 scalar potential (got --razavy-m {args.razavy_m})")
    if args.grid < 2 or args.order < 1:
        raise ConfigError("--grid must be >= 2 and --order >= 1")
    return RunConfig(
        xi=xi,
        m=args.razavy_m,
        potential_file=args.potential_file,
        energy_offset=args.energy_offset,
        grid=args.grid + args.grid % 2,
        order=args.order,
        lambda_min=args.lambda_min,
        lambda_max=args.lambda_max,
        format=args.format or "csv",
        format_given=args.format is not None,
        out=args.out,
    )


def _emit(cfg: RunConfig, machine: str, human: str):
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(machine)
        print(human)
    elif cfg.format_given:
        sys.stdout.write(machine)
    else:
        print(human)


def _pipeline(cfg: RunConfig):
    pot = cfg.potential()
    table = table_for(pot, cfg.order)
    return pot, table, spectral.build_discriminant(table)


def _window(cfg: RunConfig, poly):
    return spectral.default_window(poly, cfg.razavy, cfg.lambda_min, cfg.lambda_max)


def _reference_columns(cfg: RunConfig, report):
    """Analytic value and deviation per row, where a closed form exists."""
    refs = {}
    if cfg.razavy is not None:
        lam0, lam3, lam4 = spectral.razavy_reference(cfg.razavy)
        refs = {0: lam0, 3: lam3, 4: lam4}
    return refs


def _report_table(report, refs, rows=None) -> str:
    lines = [f"{'n':>3} {'lambda_n':>22} {'bc':>13} {'omega+':>20} {'reference':>22} {'|dev|':>10}"]
    for n, lam, label, mult, wp, _ in report.rows()[:rows]:
        ref = refs.get(n)
        lines.append(
            f"{n:>3} {fmt(lam):>22} {label:>13} {('' if wp is None else fmt(wp)):>20} "
            f"{('' if ref is None else fmt(ref)):>22} {('' if ref is None else f'{abs(lam - ref):.2e}'):>10}"
            + ("  *" if mult != spectral.SIMPLE else "")
        )
    if any(e.multiplicity != spectral.SIMPLE for e in report.edges[:rows]):
        lines.append("  * double-or-close edge")
    if report.dirac_edges and report.dirac_edges.no_real_omega:
        lines.append("no real omega for: " + ", ".join(fmt(v) for v in report.dirac_edges.no_real_omega))
    return "\n".join(lines)


def _report_document(report, refs, rows=None):
    doc = report.to_dict()
    if rows is not None:
        doc["edges"] = doc["edges"][:rows]
    doc["reference"] = {str(k): v for k, v in refs.items()}
    return doc


def _report_csv(report, refs, rows=None) -> str:
    lines = report.to_csv().splitlines()
    header, body = lines[0], lines[1:]
    if rows is not None:
        body = body[:rows]
    out = [header + ",reference,deviation"]
    for n, line in enumerate(body):
        ref = refs.get(n)
        lam = report.edges[n].lam
        out.append(line + ("," + fmt(ref) + "," + fmt(abs(lam - ref)) if ref is not None else ",,"))
    return "\n".join(out) + "\n"


def cmd_spectrum(cfg: RunConfig) -> int:
    _, _, poly = _pipeline(cfg)
    report = spectral.find_band_edges(poly, *_window(cfg, poly))
    refs = _reference_columns(cfg, report)
    machine = (
        json.dumps(_report_document(report, refs), indent=2) + "\n"
        if cfg.format == "json"
        else _report_csv(report, refs)
    )
    _emit(cfg, machine, _report_table(report, refs))
    return EXIT_OK


def first_edges(poly, lam_start: float, count: int = TABLE_ROWS, chunk: float = 10.0):
    """Scan upward from ``lam_start`` until ``count`` edges are found."""
    lo, thi = lam_start, poly.trusted_window[1]
    hi = lo
    report = None
    while hi < thi:
        hi = min(thi, hi + chunk)
        report = spectral.find_band_edges(poly, lo, hi)
        if len(report.edges) >= count:
            # make sure a near-double partner just above the cut is not split off
            last = report.edges[count - 1].lam
            if hi - last > 1e-3:
                return report
    return report


def cmd_razavy_table(cfg: RunConfig) -> int:
    _, _, poly = _pipeline(cfg)
    lam0, _, _ = spectral.razavy_reference(cfg.razavy)
    report = first_edges(poly, lam0 - 1.0)
    refs = _reference_columns(cfg, report)
    machine = (
        json.dumps(_report_document(report, refs, TABLE_ROWS), indent=2) + "\n"
        if cfg.format == "json"
        else _report_csv(report, refs, TABLE_ROWS)
    )
    title = f"Razavy m=2, xi={fmt(cfg.xi)} ({cfg.razavy.well_type}), M={cfg.grid}, N={cfg.order}"
    _emit(cfg, machine, title + "\n" + _report_table(report, refs, TABLE_ROWS))
    return EXIT_OK


def discriminant_minimum(poly, lam, D):
    """Refine the smallest sampled value of ``D_N`` by bounded minimization."""
    i = int(np.argmin(D))
    a, b = lam[max(i - 1, 0)], lam[min(i + 1, lam.size - 1)]
    res = minimize_scalar(
        lambda x: float(spectral.eval_discriminant(poly, x)), bounds=(a, b), method="bounded",
        options={"xatol": 1e-12},
    )
    if res.fun < D[i]:
        return float(res.x), float(res.fun)
    return float(lam[i]), float(D[i])


def cmd_discriminant(cfg: RunConfig) -> int:
    _, _, poly = _pipeline(cfg)
    lo, hi = _window(cfg, poly)
    if not poly.is_trusted([lo, hi]):
        raise TruncationWindowError("sweep exceeds the trusted truncation radius", poly.trusted_window)
    lam, D = spectral.discriminant_samples(poly, lo, hi, cfg.extra["points"])
    arg, val = discriminant_minimum(poly, lam, D)
    imax = int(np.argmax(np.abs(D)))
    summary = (
        f"min D_N = {fmt(val)} at lambda = {fmt(arg)}; "
        f"max |D_N| = {fmt(abs(D[imax]))} at lambda = {fmt(lam[imax])}"
    )
    if cfg.format == "json":
        machine = json.dumps(
            {"lambda": lam.tolist(), "D": D.tolist(), "min": {"lambda": arg, "D": val}}
        ) + "\n"
    else:
        machine = "lambda,D\n" + "".join(f"{fmt(l)},{fmt(d)}\n" for l, d in zip(lam, D))
    if cfg.out or cfg.format_given:
        _emit(cfg, machine, summary)
        if not cfg.out:
            print(summary, file=sys.stderr)
    else:
        sys.stdout.write(machine)
        print(summary, file=sys.stderr)
    return EXIT_OK


def cmd_bloch(cfg: RunConfig) -> int:
    _, table, poly = _pipeline(cfg)
    lam = cfg.extra["lam"]
    cells = cfg.extra["cells"]
    sign = cfg.extra["sign"]
    region = spectral.classify(poly, lam)
    meta = {"lambda": lam, "region": region.value, "cells": cells}
    if lam - table.energy_offset > 0:
        sol = bloch.assemble_spinor(table, lam, sign)
        cols = bloch.spinor_dump(sol, cells)
        cell = sol.upper
        meta.update(omega=sol.omega, a=[str(v) for v in sol.a], b=[str(v) for v in sol.b])
    else:
        cell = bloch.bloch_solution(table, lam)
        x, Fp = bloch.extended_samples(cell, cells, "+")
        _, Fm = bloch.extended_samples(cell, cells, "-")
        cols = {"x": x, "F+": Fp, "F-": Fm}
    meta.update(
        D=cell.D,
        beta_plus=str(cell.beta_plus),
        beta_minus=str(cell.beta_minus),
        k=str(cell.k),
        construction=cell.construction,
    )
    summary = (
        f"lambda = {fmt(lam)} ({region.value}); D = {fmt(cell.D)}; beta+ = {cell.beta_plus:.15g}; "
        f"beta- = {cell.beta_minus:.15g}; k = {cell.k:.15g}; matching: {cell.construction}"
    )
    if cell.construction != "james":
        summary += " (f2(T) vanished; fallback matching used)"
    machine = bloch.dump_json(cols, meta) + "\n" if cfg.format == "json" else bloch.dump_csv(cols)
    if cfg.out or cfg.format_given:
        _emit(cfg, machine, summary)
    else:
        sys.stdout.write(machine)
        print(summary, file=sys.stderr)
    return EXIT_OK


def _match_edges(a, b):
    if len(a) != len(b):
        return math.inf
    if not a:
        return 0.0
    return float(np.max(np.abs(np.sort(a) - np.sort(b))))


def validate(cfg: RunConfig, tol: float, points: int = 201):
    """Oracle comparison metrics; returns ``(metrics, window)``."""
    pot, table, poly = _pipeline(cfg)
    q1, q2 = cfg.hill_potentials(pot)
    if cfg.razavy is not None:
        lam0, _, lam4 = spectral.razavy_reference(cfg.razavy)
        lo = lam0 - 1.0 if cfg.lambda_min is None else cfg.lambda_min
        hi = max(lam4, 4.0) + 6.0 if cfg.lambda_max is None else cfg.lambda_max
    else:
        lo = pot.energy_offset - 1.0 if cfg.lambda_min is None else cfg.lambda_min
        # stop short of 25, where the free particle has a double edge
        hi = pot.energy_offset + 24.5 if cfg.lambda_max is None else cfg.lambda_max
    lam = np.linspace(lo, hi, points)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        D_series = spectral.eval_discriminant(poly, lam)
    D_direct = oracle.discriminant(q1, lam)
    D_partner = oracle.discriminant(q2, lam)
    scale = np.maximum(1.0, np.abs(D_direct))
    metrics = {
        "discriminant_abs": float(np.max(np.abs(D_direct - D_series))),
        "discriminant_rel": float(np.max(np.abs(D_direct - D_series) / scale)),
        "discriminant": float(np.max(spectral.mixed_deviation(poly, lam, D_direct))),
        "isospectrality_abs": float(np.max(np.abs(D_direct - D_partner))),
        "isospectrality": float(np.max(np.abs(D_direct - D_partner) / scale)),
    }
    if poly.is_trusted([lo, hi]):
        report = spectral.find_band_edges(poly, lo, hi)
        series_edges = [e.lam for e in report.edges]
    else:
        report, series_edges = None, None
    oracle_edges = [l for l, _ in oracle.oracle_band_edges(q1, (lo, hi))]
    metrics["band_edges"] = math.inf if series_edges is None else _match_edges(series_edges, oracle_edges)
    probe = [e.lam for e in report.edges] if report else []
    if report:
        probe += [0.5 * (a + b) for a, b in report.bands]
    wr_abs = wr = 0.0
    for l in probe:
        for pair in (f_pair(table, None, l), g_pair(table, None, None, l)):
            wr_abs = max(wr_abs, float(np.max(np.abs(pair.wronskian - 1))))
            wr = max(wr, float(np.max(pair.wronskian_deviation)))
    metrics["wronskian_abs"] = wr_abs if report else math.inf
    metrics["wronskian"] = wr if report else math.inf
    return metrics, (lo, hi)


GATED = ("discriminant", "isospectrality", "band_edges", "wronskian")


def cmd_validate(cfg: RunConfig) -> int:
    tol = cfg.extra["tol"]
    metrics, window = validate(cfg, tol)
    failed = [k for k in GATED if not metrics[k] <= tol]
    if cfg.format_given or cfg.out:
        doc = {"window": list(window), "tolerance": tol, "metrics": metrics, "failed": failed}
        machine = (
            json.dumps(doc, indent=2) + "\n"
            if cfg.format == "json"
            else "metric,value,gated\n" + "".join(f"{k},{fmt(v)},{k in GATED}\n" for k, v in metrics.items())
        )
        _emit(cfg, machine, "")
    lines = [f"window [{fmt(window[0])}, {fmt(window[1])}], tolerance {tol:g}"]
    for k, v in metrics.items():
        gate = ("FAIL" if k in failed else "ok") if k in GATED else "info"
        lines.append(f"  {k:<20} {v:.3e}  {gate}")
    print("\n".join(lines), file=sys.stderr if cfg.format_given and not cfg.out else sys.stdout)
    if failed:
        print(f"tolerance exceeded: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("potential")
    src.add_argument("--razavy-xi", type=float, help="built-in Razavy scalar potential with this xi")
    src.add_argument("--razavy-m", type=int, default=2, help="Razavy index (the series pipeline needs 2)")
    src.add_argument("--potential-file", help="scalar potential Phi as grid CSV (x,value) or JSON")
    src.add_argument("--energy-offset", type=float, default=0.0,
                     help="constant c in q1 = Phi^2 - Phi' + c for file potentials")
    num = common.add_argument_group("numerics")
    num.add_argument("--grid", type=int, default=DEFAULT_GRID, help="grid intervals M (default 5000)")
    num.add_argument("--order", type=int, default=DEFAULT_ORDER, help="truncation order N (default 100)")
    num.add_argument("--lambda-min", type=float)
    num.add_argument("--lambda-max", type=float)
    io_ = common.add_argument_group("output")
    io_.add_argument("--format", choices=("csv", "json"))
    io_.add_argument("--out", metavar="PATH")

    parser = argparse.ArgumentParser(
        prog="hillspps",
        description="Band edges, discriminants and Bloch solutions of periodic Dirac and Hill operators.",
        epilog="exit codes: 0 success, 1 validation failure, 2 bad configuration",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="band edges with Dirac energies")
    p = sub.add_parser("discriminant", parents=[common], help="uniform sweep of D_N(lambda)")
    p.add_argument("--points", type=int, default=2001)
    p = sub.add_parser("bloch", parents=[common], help="Bloch solutions over several cells")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--cells", type=int, default=1)
    p.add_argument("--sign", choices=("+", "-"), default="+", help="sign of omega")
    p = sub.add_parser("validate", parents=[common], help="compare against the RK4 oracle")
    p.add_argument("--tol", type=float, default=1e-6)
    p = sub.add_parser("razavy-table", parents=[common], help="first seven edges for a Razavy xi")
    p.add_argument("--xi", type=float, help="same as --razavy-xi")
    return parser


COMMANDS = {
    "spectrum": cmd_spectrum,
    "discriminant": cmd_discriminant,
    "bloch": cmd_bloch,
    "validate": cmd_validate,
    "razavy-table": cmd_razavy_table,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "razavy-table" and cfg.xi is None:
            raise ConfigError("razavy-table needs --xi")
        for key in ("points", "lam", "cells", "sign", "tol"):
            if hasattr(args, key):
                cfg.extra[key] = getattr(args, key)
        if cfg.extra.get("cells", 1) < 1 or cfg.extra.get("points", 2) < 2:
            raise ConfigError("--cells must be >= 1 and --points >= 2")
        return COMMANDS[args.command](cfg)
    except (ConfigError, HillSppsError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"hillspps {args.command}: {msg}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
