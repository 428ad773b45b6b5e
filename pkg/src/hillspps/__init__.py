"""Spectra, Hill discriminants and Bloch solutions of periodic Dirac and Hill
operators from spectral parameter power series."""

from .bloch import (
    BlochSolution,
    DiracSpinorSolution,
    assemble_spinor,
    bloch_factors,
    bloch_solution,
    extend,
    matching_constants,
    quasimomentum,
)
from .oracle import MonodromyResult, integrate_monodromy, oracle_band_edges
from .potential import (
    GridFunction,
    PeriodicScalarPotential,
    RazavyParams,
    build_u,
    razavy_phi,
    razavy_v1,
    razavy_v2,
    sample,
)
from .spectral import (
    DiscriminantPolynomial,
    Region,
    SpectrumReport,
    build_discriminant,
    classify,
    dirac_eigenvalues,
    eval_discriminant,
    find_band_edges,
    razavy_reference,
)
from .spps import SppsTable, build_table, estimate_radius, f_pair, g_pair, intertwine, table_for

__version__ = "0.1.0"
