import json
import math
import warnings

import numpy as np
import pytest

from conftest import razavy_table
from hillspps import RazavyParams, razavy_phi
from hillspps.errors import PotentialError, TruncationWarning, TruncationWindowError
from hillspps.potential import GridFunction
from hillspps.spectral import (
    ANTIPERIODIC,
    DOUBLE,
    PERIODIC,
    Edge,
    Region,
    SpectrumReport,
    build_discriminant,
    classify,
    default_window,
    dirac_eigenvalues,
    discriminant_samples,
    eval_discriminant,
    eval_slope,
    find_band_edges,
    label_pattern_ok,
    razavy_reference,
)
from hillspps.spps import build_table, f_pair, table_for


def test_constant_term(free_poly, razavy):
    assert free_poly.coeffs[0] == 2.0
    assert razavy(2.0)[1].coeffs[0] == 2.0


def test_free_values(free_poly):
    assert eval_discriminant(free_poly, 0.0) == 2.0
    assert abs(eval_discriminant(free_poly, 1.0) + 2.0) < 1e-13
    assert abs(eval_discriminant(free_poly, 0.25)) < 1e-13


def test_free_closed_form_on_window(free_poly):
    lam = np.linspace(0, 25, 5001)
    assert np.max(np.abs(eval_discriminant(free_poly, lam) - 2 * np.cos(np.pi * np.sqrt(lam)))) < 1e-9


def test_slope_matches_closed_form(free_poly):
    lam = np.linspace(0.5, 20, 50)
    ref = -np.pi * np.sin(np.pi * np.sqrt(lam)) / np.sqrt(lam)
    assert np.max(np.abs(eval_slope(free_poly, lam) - ref)) < 1e-8


def test_warning_outside_trusted_window(free_poly):
    lo, hi = free_poly.trusted_window
    with pytest.warns(TruncationWarning):
        eval_discriminant(free_poly, hi + 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        eval_discriminant(free_poly, hi - 1.0)


@pytest.mark.parametrize("xi", [1.0, 2.0, 11.0])
def test_discriminant_equals_monodromy_trace(razavy, xi):
    t, poly = razavy(xi)
    for s in (-1.0, 0.5, 7.0, 20.0):
        lam = t.energy_offset + s
        f = f_pair(t, None, lam)
        D = eval_discriminant(poly, lam)
        assert abs(D - (f.y1[-1] + f.dy2[-1])) < 1e-9 * max(1.0, abs(D))


@pytest.mark.parametrize("xi", [1.0, 20.0])
def test_truncation_convergence(xi):
    lam0 = razavy_reference(RazavyParams(xi))[0]
    lams = lam0 + np.array([0.5, 10.0, 30.0])
    polys = {N: build_discriminant(razavy_table(xi, 5000, N)) for N in (50, 100, 200)}
    D = {N: eval_discriminant(p, lams) for N, p in polys.items()}
    scale = np.maximum(1.0, np.abs(D[200]))
    d50 = np.abs(D[50] - D[100]) / scale
    d100 = np.abs(D[100] - D[200]) / scale
    assert np.all(d100 <= d50)
    assert np.all(d100 < 1e-10)


def test_free_band_edges(free_poly):
    r = find_band_edges(free_poly, -0.5, 20.0)
    per = [e.lam for e in r.edges if e.label == PERIODIC]
    anti = [e.lam for e in r.edges if e.label == ANTIPERIODIC]
    assert np.allclose(per, [0, 4, 4, 16, 16], atol=1e-9)
    assert np.allclose(anti, [1, 1, 9, 9], atol=1e-9)
    assert [e.multiplicity for e in r.edges[1:]] == [DOUBLE] * 8
    assert r.gaps == ((-0.5, r.edges[0].lam),)


def test_razavy_xi1_edges(razavy):
    _, poly = razavy(1.0)
    r = find_band_edges(poly, -1.9, 10.0)
    lam = r.values
    assert len(lam) == 7
    assert abs(lam[0] - (-0.828427124746190)) < 1e-10
    assert abs(lam[3] - 4.0) < 1e-5
    assert abs(lam[4] - 4.828420) < 1e-5


def test_razavy_xi20_near_degenerate_pair(razavy):
    _, poly = razavy(20.0)
    r = find_band_edges(poly, -39.0, -37.0)
    assert len(r.edges) == 2
    assert abs(r.edges[0].lam - (-38.049968789001575)) < 1e-9
    assert abs(r.edges[1].lam - (-38.049968788934475)) < 1e-9
    assert r.edges[0].label == PERIODIC and r.edges[1].label == ANTIPERIODIC
    assert r.edges[0].multiplicity == DOUBLE


@pytest.mark.parametrize("xi", [1.0, 2.0, 11.0, 20.0])
def test_interlacing_and_labels(razavy, xi):
    _, poly = razavy(xi)
    r = find_band_edges(poly, *default_window(poly, RazavyParams(xi)))
    assert label_pattern_ok(r.edges)
    for a, b in r.bands:
        for x in np.linspace(a, b, 7)[1:-1]:
            assert abs(eval_discriminant(poly, x)) <= 2 + 1e-9
    for a, b in r.gaps:
        mid = a + (b - a) / 2
        assert abs(eval_discriminant(poly, mid)) > 2


def test_xi1_edge_count_to_forty(razavy):
    # the first seven edges sit below 10; up to 40 three more band pairs follow
    _, poly = razavy(1.0)
    lam0 = razavy_reference(RazavyParams(1.0))[0]
    r = find_band_edges(poly, lam0 - 1, 40.0)
    assert len(r.edges) == 13
    assert np.sum(r.values < 10) == 7


def test_label_pattern_detects_errors():
    good = [Edge(0.0, PERIODIC), Edge(1.0, ANTIPERIODIC), Edge(1.5, ANTIPERIODIC), Edge(2.0, PERIODIC)]
    assert label_pattern_ok(good)
    assert not label_pattern_ok(good[::-1])
    assert not label_pattern_ok([Edge(0.0, ANTIPERIODIC)])


def test_classify(free_poly):
    assert classify(free_poly, 0.5) == Region.BAND
    assert classify(free_poly, -1.0) == Region.GAP
    assert classify(free_poly, 1.0) == Region.EDGE


def test_dirac_eigenvalues():
    r = SpectrumReport((Edge(-1.0, PERIODIC), Edge(0.0, PERIODIC), Edge(4.0, PERIODIC)), (), (), (-2, 5))
    d = dirac_eigenvalues(r)
    assert d.omegas == (0.0, 2.0, -2.0)
    assert d.no_real_omega == (-1.0,)


def test_dirac_eigenvalues_use_energy_offset(razavy):
    t, poly = razavy(1.0)
    r = find_band_edges(poly, -1.9, 5.0)
    d = dirac_eigenvalues(r)
    # the ground state sits exactly at the offset, so omega = 0 rather than no real omega
    assert d.no_real_omega == ()
    assert d.omegas[0] == 0.0
    assert abs(d.omegas[1] - math.sqrt(r.edges[1].lam - t.energy_offset)) < 1e-15


def test_razavy_reference():
    assert np.allclose(razavy_reference(RazavyParams(1.0)), (-0.828427124746190, 4, 4.828427124746190), atol=1e-15)
    assert np.allclose(razavy_reference(RazavyParams(2.0)), (-2.472135954999580, 4, 6.472135954999580), atol=1e-15)
    assert np.allclose(razavy_reference(RazavyParams(11.0)), (-20.090722034374522, 4, 24.090722034374522), atol=1e-14)


def test_window_outside_radius(free_poly):
    lo, hi = free_poly.trusted_window
    with pytest.raises(TruncationWindowError) as exc:
        find_band_edges(free_poly, 0.0, hi + 10)
    assert exc.value.usable == (lo, hi)
    assert "usable" in str(exc.value)


def test_default_window(razavy):
    _, poly = razavy(1.0)
    lo, hi = default_window(poly, RazavyParams(1.0))
    assert lo == razavy_reference(RazavyParams(1.0))[0] - 5
    assert hi == pytest.approx(1.2 * (razavy_reference(RazavyParams(1.0))[2] + 40))
    # explicit limits are never clipped
    assert default_window(poly, None, -1e6, 1e6) == (-1e6, 1e6)


def test_xi3_first_minimum_value(razavy):
    _, poly = razavy(3.0)
    lam, D = discriminant_samples(poly, -4.0, 30.0, 3401)
    assert abs(D.min() + 260.9) < 0.01 * 260.9


def test_rejects_nonperiodic_u():
    x = np.linspace(0, math.pi, 101)
    t = build_table(GridFunction(math.pi, 1 + x / 10), 4, GridFunction(math.pi, np.zeros(101)))
    with pytest.raises(PotentialError):
        build_discriminant(t)


def test_report_serialization(free_poly):
    r = find_band_edges(free_poly, -0.5, 5.0)
    lines = r.to_csv().splitlines()
    assert lines[0] == "n,lambda,bc_label,multiplicity,omega_plus,omega_minus"
    assert lines[1].startswith("0,0,periodic,simple,0,0")
    doc = json.loads(r.to_json())
    assert [e["label"] for e in doc["edges"]] == [e.label for e in r.edges]
    assert r.to_csv() == find_band_edges(free_poly, -0.5, 5.0).to_csv()
