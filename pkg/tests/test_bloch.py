import json
import math

import numpy as np
import pytest

from hillspps.bloch import (
    assemble_spinor,
    bloch_factors,
    bloch_solution,
    dump_csv,
    dump_json,
    extend,
    extended_samples,
    matching_constants,
    quasimomentum,
    spinor_dump,
)
from hillspps.errors import DegenerateMatchingError, NoRealSpinorError
from hillspps.spps import f_pair


def test_bloch_factors_at_edges_and_centre():
    assert bloch_factors(2.0) == (1, 1)
    assert bloch_factors(-2.0) == (-1, -1)
    bp, bm = bloch_factors(0.0)
    assert bp == -1j and bm == 1j


@pytest.mark.parametrize("D", [-7.5, -2.5, -1.0, 0.3, 1.9, 2.5, 1e8])
def test_bloch_factor_product(D):
    bp, bm = bloch_factors(D)
    assert abs(bp * bm - 1) < 1e-15
    assert abs(bp + bm - D) < 1e-15 * max(1, abs(D))
    if D > 2:
        assert abs(bp) < 1 < abs(bm)
    if abs(D) <= 2:
        assert bp.imag <= 0


def test_quasimomentum():
    assert quasimomentum(2.0, math.pi) == 0
    assert abs(quasimomentum(-2.0, math.pi) - 1.0) < 1e-15
    assert abs(quasimomentum(0.0, math.pi) - 0.5) < 1e-15
    k = quasimomentum(5.0, math.pi)
    assert k.real == 0 and k.imag > 0
    k = quasimomentum(-5.0, math.pi)
    assert abs(k.real - 1.0) < 1e-15 and k.imag > 0


def test_free_quarter(free_table):
    sol = bloch_solution(free_table, 0.25)
    assert abs(sol.D) < 1e-12
    assert abs(sol.k - 0.5) < 1e-12
    assert abs(sol.alpha_plus + 0.5j) < 1e-9
    assert abs(sol.alpha_minus - 0.5j) < 1e-9
    assert sol.construction == "james"


def test_matching_constants_sum(razavy):
    t, _ = razavy(1.0)
    for lam in (-1.5, 0.0, 3.0):
        p = f_pair(t, None, lam)
        f1, f2, df2 = p.y1[-1], p.y2[-1], p.dy2[-1]
        D = f1 + df2
        ap, am = matching_constants(f1, f2, df2, D)
        assert abs(ap + am - (df2 - f1) / f2) < 1e-9 * max(1, abs(D))
        assert abs(ap - am + np.lib.scimath.sqrt(D * D - 4) / f2) < 1e-9 * max(1, abs(D))


def test_matching_constants_degenerate():
    with pytest.raises(DegenerateMatchingError):
        matching_constants(1.0, 0.0, 1.0, 2.0)
    ap, am = matching_constants(1.0, 1.0, 1.0, 2.0)
    assert ap == am == 0


def test_degenerate_fallback(free_table):
    # at lambda = 1 and 4 the free monodromy is +-identity
    for lam, D in ((1.0, -2.0), (4.0, 2.0)):
        sol = bloch_solution(free_table, lam)
        assert sol.construction == "eigenfunction"
        assert abs(sol.D - D) < 1e-9
        assert np.all(np.isfinite(sol.plus)) and np.all(np.isfinite(sol.minus))


def test_extend_examples(free_table):
    sol = bloch_solution(free_table, 0.25)
    T = math.pi
    F0 = sol.plus[0]
    assert extend(sol, 0.0) == F0
    assert abs(extend(sol, T) - sol.beta_plus * F0) < 1e-15
    assert abs(extend(sol, -T) - sol.beta_minus * F0) < 1e-15
    assert abs(extend(sol, 3 * T) - sol.beta_plus**3 * F0) < 1e-15


def test_band_solution_bounded(razavy):
    t, _ = razavy(1.0)
    sol = bloch_solution(t, 3.0)
    assert abs(sol.D) < 2
    _, F = extended_samples(sol, 10)
    assert np.max(np.abs(F)) <= np.max(np.abs(sol.plus)) * (1 + 1e-12)


def test_gap_solution_scales(razavy):
    t, _ = razavy(1.0)
    sol = bloch_solution(t, -1.5)
    assert sol.D > 2
    x = np.linspace(0.1, 3.0, 9)
    base = np.abs(extend(sol, x))
    for n in range(1, 6):
        assert np.allclose(np.abs(extend(sol, x + n * math.pi)), abs(sol.beta_plus) ** n * base, rtol=1e-12)
        assert np.allclose(np.abs(extend(sol, x + n * math.pi, "-")),
                           abs(sol.beta_minus) ** n * np.abs(extend(sol, x, "-")), rtol=1e-12)


def test_bloch_solution_satisfies_quasi_periodicity(razavy):
    t, _ = razavy(2.0)
    sol = bloch_solution(t, 3.5)
    for sg in ("+", "-"):
        F, dF = sol.cell(sg)
        b = sol.beta(sg)
        assert abs(F[-1] - b * F[0]) < 1e-8 * np.max(np.abs(F))
        assert abs(dF[-1] - b * dF[0]) < 1e-8 * np.max(np.abs(dF))


def test_free_spinor_constant_modulus(free_table):
    # band centre k = 3/2: the Bloch solutions are plane waves exp(-+ikx)
    sp = assemble_spinor(free_table, 2.25)
    assert sp.omega == 1.5
    for sg in ("+", "-"):
        F, _ = sp.upper.cell(sg)
        G, _ = sp.lower.cell(sg)
        assert np.ptp(np.abs(F)) < 1e-9
        assert np.ptp(np.abs(G)) < 1e-9


@pytest.mark.parametrize("lam", [3.5, 8.0])
def test_spinor_residuals(razavy, lam):
    t, _ = razavy(2.0)
    for sg in ("+", "-"):
        sp = assemble_spinor(t, lam, sg)
        scale = np.max(np.abs(sp.upper.plus)) * max(1.0, abs(sp.omega))
        for branch in ("+", "-"):
            assert np.max(np.abs(sp.intertwining_residual(branch))) < 1e-7 * scale
            assert np.max(np.abs(sp.dirac_residual(branch))) < 1e-6 * scale
        assert abs(sp.upper.beta_plus * sp.upper.beta_minus - 1) < 1e-12
        assert sp.omega == (1 if sg == "+" else -1) * math.sqrt(lam - t.energy_offset)


def test_no_real_spinor(razavy):
    t, _ = razavy(1.0)
    with pytest.raises(NoRealSpinorError):
        assemble_spinor(t, t.energy_offset - 0.1)
    with pytest.raises(NoRealSpinorError):
        assemble_spinor(t, t.energy_offset)


def test_dumps(razavy):
    t, _ = razavy(2.0)
    sp = assemble_spinor(t, 3.5)
    cols = spinor_dump(sp, cells=2)
    assert cols["x"].size == 2 * (t.u.nodes.size - 1) + 1
    text = dump_csv(cols)
    assert text.splitlines()[0] == "x,re_F+,im_F+,re_G+,im_G+,re_F-,im_F-,re_G-,im_G-"
    assert text == dump_csv(spinor_dump(sp, cells=2))
    doc = json.loads(dump_json(cols, {"lambda": 3.5}))
    assert doc["lambda"] == 3.5 and len(doc["F+"]["re"]) == cols["x"].size
    assert "-0," not in sp.to_csv()
