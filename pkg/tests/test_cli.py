import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from hillspps.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from hillspps.potential import GridFunction


@pytest.fixture(scope="module")
def zero_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("pot") / "zero.csv"
    path.write_text(GridFunction(math.pi, np.zeros(2001)).to_csv())
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_spectrum_free_particle(capsys, zero_csv):
    code, out, _ = run(capsys, "spectrum", "--potential-file", zero_csv,
                       "--lambda-min", "-0.5", "--lambda-max", "5", "--format", "csv")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert np.allclose([float(r["lambda"]) for r in rows], [0, 1, 1, 4, 4], atol=1e-9)
    assert [r["bc_label"] for r in rows] == ["periodic", "antiperiodic", "antiperiodic", "periodic", "periodic"]


def test_spectrum_writes_file(capsys, zero_csv, tmp_path):
    target = tmp_path / "edges.json"
    code, out, _ = run(capsys, "spectrum", "--potential-file", zero_csv, "--lambda-min", "-0.5",
                       "--lambda-max", "5", "--format", "json", "--out", str(target))
    assert code == EXIT_OK
    doc = json.loads(target.read_text())
    assert len(doc["edges"]) == 5
    assert "periodic" in out


def test_deterministic_output(capsys, zero_csv):
    argv = ("spectrum", "--potential-file", zero_csv, "--lambda-min", "-0.5", "--lambda-max", "10", "--format", "csv")
    first = run(capsys, *argv)[1]
    assert first == run(capsys, *argv)[1]


def test_razavy_table(capsys):
    code, out, _ = run(capsys, "razavy-table", "--xi", "1", "--format", "csv")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 7
    assert abs(float(rows[0]["lambda"]) + 0.828427124746190) < 1e-10
    assert abs(float(rows[3]["lambda"]) - 4) < 1e-5
    assert float(rows[4]["deviation"]) < 1e-9


def test_spectrum_razavy_reference_column(capsys):
    code, out, _ = run(capsys, "spectrum", "--razavy-xi", "11", "--lambda-max", "40", "--format", "csv")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert abs(float(rows[4]["lambda"]) - 24.0907220344) < 1e-8
    assert rows[4]["reference"] != ""


def test_discriminant_sweep(capsys):
    code, out, err = run(capsys, "discriminant", "--razavy-xi", "3", "--lambda-min", "-4",
                         "--lambda-max", "30", "--points", "5", "--format", "csv")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "lambda,D" and len(lines) == 6
    assert "min D_N" in err


def test_discriminant_rejects_untrusted_window(capsys):
    code, _, err = run(capsys, "discriminant", "--razavy-xi", "1", "--lambda-min", "0", "--lambda-max", "5000")
    assert code == EXIT_CONFIG
    assert "usable" in err


def test_bloch_spinor(capsys, tmp_path):
    target = tmp_path / "spinor.csv"
    code, out, _ = run(capsys, "bloch", "--razavy-xi", "2", "--lambda", "3.5", "--cells", "2",
                       "--out", str(target))
    assert code == EXIT_OK
    assert "band" in out
    lines = target.read_text().splitlines()
    assert lines[0].startswith("x,re_F+,im_F+")
    assert len(lines) == 1 + 2 * 5000 + 1


def test_bloch_below_offset(capsys):
    code, out, _ = run(capsys, "bloch", "--razavy-xi", "1", "--lambda", "-1.5", "--format", "json")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["region"] == "gap"


def test_validate_passes(capsys):
    code, out, _ = run(capsys, "validate", "--razavy-xi", "1")
    assert code == EXIT_OK
    assert "band_edges" in out


def test_validate_fails_at_low_order(capsys):
    code, _, _ = run(capsys, "validate", "--razavy-xi", "1", "--order", "5")
    assert code == EXIT_FAIL


@pytest.mark.parametrize("argv", [
    ["spectrum"],
    ["spectrum", "--razavy-xi", "1", "--potential-file", "x.csv"],
    ["spectrum", "--razavy-xi", "1", "--razavy-m", "3"],
    ["spectrum", "--potential-file", "/nonexistent/phi.csv"],
    ["razavy-table"],
    ["bloch", "--razavy-xi", "1", "--lambda", "1", "--cells", "0"],
])
def test_config_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_CONFIG
    assert err.startswith("hillspps ")


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hillspps.cli", "razavy-table", "--xi", "2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "-2.47213595499958" in proc.stdout
