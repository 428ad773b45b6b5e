"""Periodic scalar potentials on uniform grids, the Razavy family, and the
nodeless zero-energy solution ``u = exp(-int Phi)``."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .errors import PotentialError, SamplingError, UnsupportedClosedForm

DEFAULT_GRID = 5000


@dataclass(frozen=True)
class GridFunction:
    """Real samples at the ``M + 1`` nodes ``x_j = j*T/M`` of one period, both ends included."""

    period: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 3:
            raise SamplingError("a grid function needs at least 3 samples (M >= 2)")
        if not (self.period > 0 and math.isfinite(self.period)):
            raise SamplingError(f"period must be positive and finite, got {self.period!r}")
        bad = np.flatnonzero(~np.isfinite(samples))
        if bad.size:
            raise SamplingError(f"non-finite sample at node {bad[0]}")
        samples.setflags(write=False)
        object.__setattr__(self, "period", float(self.period))
        object.__setattr__(self, "samples", samples)

    @property
    def intervals(self) -> int:
        return self.samples.size - 1

    @property
    def step(self) -> float:
        return self.period / self.intervals

    @property
    def nodes(self) -> np.ndarray:
        # linspace pins the last node to the period exactly
        return np.linspace(0.0, self.period, self.samples.size)

    def node_index(self, x):
        """Index of the grid node nearest to ``x`` (``x`` in ``[0, T]``)."""
        idx = np.rint(np.asarray(x, dtype=np.float64) / self.step).astype(np.intp)
        if np.any(idx < 0) or np.any(idx > self.intervals):
            raise ValueError(f"x outside the cell [0, {self.period}]")
        return idx

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "value"])
        for x, v in zip(self.nodes, self.samples):
            writer.writerow([repr(float(x)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GridFunction":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["x", "value"]:
            raise SamplingError("grid CSV must start with the header 'x,value'")
        data = [(float(r[0]), float(r[1])) for r in rows[1:] if r]
        if len(data) < 3:
            raise SamplingError("grid CSV needs at least 3 rows")
        xs = np.array([d[0] for d in data])
        if xs[0] != 0.0:
            raise SamplingError("grid CSV must start at x = 0")
        h = np.diff(xs)
        if np.any(h <= 0) or np.ptp(h) > 1e-9 * xs[-1]:
            raise SamplingError("grid CSV nodes must be uniformly spaced and increasing")
        return cls(xs[-1], np.array([d[1] for d in data]))

    def to_json(self) -> str:
        return json.dumps({"period": self.period, "samples": [float(v) for v in self.samples]})

    @classmethod
    def from_json(cls, text: str) -> "GridFunction":
        doc = json.loads(text)
        return cls(doc["period"], np.array(doc["samples"], dtype=np.float64))

    @classmethod
    def load(cls, path) -> "GridFunction":
        with open(path) as fh:
            text = fh.read()
        if str(path).endswith(".json"):
            return cls.from_json(text)
        return cls.from_csv(text)


def sample(evaluator: Callable, T: float, M: int) -> GridFunction:
    """Sample ``evaluator`` at the uniform nodes of ``[0, T]``.

    Odd ``M`` is bumped to the next even number so that composite Simpson
    applies on the whole grid.
    """
    if not T > 0:
        raise SamplingError(f"period must be positive, got {T!r}")
    if M < 2:
        raise SamplingError(f"need at least 2 intervals, got M = {M}")
    M = M + (M % 2)
    xs = np.arange(M + 1) * (T / M)
    values = np.asarray(evaluator(xs), dtype=np.float64)
    if values.shape == ():
        values = np.full(M + 1, float(values))
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        j = bad[0]
        raise SamplingError(f"evaluator returned {values[j]!r} at node {j} (x = {xs[j]!r})")
    return GridFunction(T, values)


@dataclass(frozen=True)
class PeriodicScalarPotential:
    """Dirac scalar potential Phi, validated to be periodic with zero mean.

    ``energy_offset`` is the constant ``c`` with ``q1 = Phi**2 - Phi' + c``: the
    spectral parameter reported by the spectral, bloch and oracle layers is the
    eigenvalue of ``-f'' + q1 f``, while the series themselves run in
    ``lambda - c`` (the square of the Dirac energy).
    """

    phi: GridFunction
    phi_at: Optional[Callable] = field(default=None, compare=False)
    energy_offset: float = 0.0
    name: str = "custom"
    periodicity_tol: Optional[float] = None
    mean_tol: Optional[float] = None

    def __post_init__(self):
        s = self.phi.samples
        scale = float(np.max(np.abs(s)))
        per_tol = self.periodicity_tol if self.periodicity_tol is not None else 1e-10 * scale
        jump = abs(s[0] - s[-1])
        if jump > per_tol:
            raise PotentialError(f"Phi is not periodic on the grid: |Phi(0) - Phi(T)| = {jump:.3e}")
        T = self.phi.period
        mean_tol = self.mean_tol if self.mean_tol is not None else 1e-8 * T * max(1.0, scale)
        integral = self.mean_integral
        if abs(integral) > mean_tol:
            raise PotentialError(
                f"Phi must have zero mean over one period; measured integral {integral:.6e}"
            )

    @property
    def mean_integral(self) -> float:
        return float(simpson(self.phi.samples, dx=self.phi.step))

    @property
    def period(self) -> float:
        return self.phi.period

    @classmethod
    def zero(cls, T: float = math.pi, M: int = DEFAULT_GRID) -> "PeriodicScalarPotential":
        return cls(sample(lambda x: np.zeros_like(x), T, M), lambda x: 0.0 * x, 0.0, "zero")

    def hill_potentials(self):
        """``(q1, q2) = (Phi**2 - Phi' + c, Phi**2 + Phi' + c)`` on the grid.

        Phi' comes from fourth-order periodic central differences; the
        Razavy pipeline uses the closed-form V1, V2 instead.
        """
        s = self.phi.samples
        dphi = _periodic_derivative(s, self.phi.step)
        base = s * s + self.energy_offset
        T = self.period
        return GridFunction(T, base - dphi), GridFunction(T, base + dphi)


def _periodic_derivative(s, h):
    core = s[:-1]
    d = (8 * (np.roll(core, -1) - np.roll(core, 1)) - (np.roll(core, -2) - np.roll(core, 2))) / (12 * h)
    return np.append(d, d[0])


@dataclass(frozen=True)
class RazavyParams:
    xi: float
    m: int = 2

    def __post_init__(self):
        if not (self.xi > 0 and math.isfinite(self.xi)):
            raise ValueError(f"Razavy xi must be positive, got {self.xi!r}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"Razavy index m must be a positive integer, got {self.m!r}")

    @property
    def A(self) -> float:
        return 1.0 - math.sqrt(1.0 + self.xi * self.xi)

    @property
    def threshold(self) -> float:
        return 2.0 * (self.m + 1)

    @property
    def well_type(self) -> str:
        if self.xi < self.threshold:
            return "single-well"
        if self.xi > self.threshold:
            return "double-well"
        return "threshold"


def _require_m2(p: RazavyParams, what: str):
    if p.m != 2:
        raise UnsupportedClosedForm(f"{what} has a closed form only for m = 2 (got m = {p.m})")


def razavy_phi_at(p: RazavyParams):
    _require_m2(p, "the Razavy scalar potential")
    xi, A = p.xi, p.A

    def phi(x):
        c = np.cos(2 * x)
        return np.sin(2 * x) * (xi / 2 - 2 * A / (xi - A * c))

    return phi


def razavy_u_at(p: RazavyParams):
    """Closed-form ``exp(-int_0^x Phi)``, normalized to 1 at ``x = 0``."""
    _require_m2(p, "the Razavy ground state")
    xi, A = p.xi, p.A
    norm = math.exp(xi / 4) * (xi - A)
    return lambda x: np.exp(xi / 4 * np.cos(2 * x)) * (xi - A * np.cos(2 * x)) / norm


def razavy_phi(p: RazavyParams, M: int = DEFAULT_GRID) -> PeriodicScalarPotential:
    phi_at = razavy_phi_at(p)
    grid = sample(phi_at, math.pi, M)
    # exact zeros of sin 2x at the period ends
    s = grid.samples.copy()
    s[0] = s[-1] = 0.0
    return PeriodicScalarPotential(
        GridFunction(math.pi, s), phi_at, energy_offset=2.0 * p.A, name=f"razavy(xi={p.xi:g})"
    )


def razavy_v1_at(p: RazavyParams):
    xi, m = p.xi, p.m
    return lambda x: xi * xi / 8 * (1 - np.cos(4 * x)) - (m + 1) * xi * np.cos(2 * x)


def razavy_v2_at(p: RazavyParams):
    # The last term carries A**2; with a single power of A the result is not
    # Phi**2 + Phi' + 2A and the partner spectrum no longer matches.
    _require_m2(p, "the partner potential V2")
    xi, A = p.xi, p.A
    v1 = razavy_v1_at(p)

    def v2(x):
        c = np.cos(2 * x)
        den = xi - A * c
        return v1(x) + 4 * c * (xi / 2 - 2 * A / den) + 8 * A * A * np.sin(2 * x) ** 2 / den**2

    return v2


def razavy_v1(p: RazavyParams, M: int = DEFAULT_GRID) -> GridFunction:
    return sample(razavy_v1_at(p), math.pi, M)


def razavy_v2(p: RazavyParams, M: int = DEFAULT_GRID) -> GridFunction:
    return sample(razavy_v2_at(p), math.pi, M)


def build_u(phi: PeriodicScalarPotential) -> GridFunction:
    """Nodeless solution ``u(x) = exp(-int_0^x Phi)`` with ``u(0) = 1``."""
    g = phi.phi
    integral = cumulative_simpson(g.samples, dx=g.step, initial=0.0)
    u = np.exp(-integral)
    if u[0] != 1.0 or not np.all(u > 0):
        raise PotentialError("u must be positive with u(0) = 1")
    return GridFunction(g.period, u)
