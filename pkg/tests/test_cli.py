import csv
import os
import re

import numpy as np
import pytest

from sandpile_odometer import cli
from sandpile_odometer.formats import read_dsgf, read_pgm


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


@pytest.fixture
def out(tmp_path):
    return str(tmp_path / "run")


def test_sample_sigma_writes_fields(out):
    status = cli.main(["sample-sigma", "--dim", "2", "--n", "8", "--replicates", "3", "--csv", "--out", out])

    assert status == cli.EXIT_OK
    assert sorted(os.listdir(out)) == [
        "resolved_config.ini",
        "sigma_00000.csv",
        "sigma_00000.dsgf",
        "sigma_00001.dsgf",
        "sigma_00002.dsgf",
    ]
    field = read_dsgf(os.path.join(out, "sigma_00001.dsgf"))
    assert field.grid.n == 8 and field.grid.dim == 2
    rows = read_rows(os.path.join(out, "sigma_00000.csv"))
    assert len(rows) == 64
    assert list(rows[0]) == ["z_1", "z_2", "sigma"]


def test_stabilize_both_methods(out, capsys):
    status = cli.main(["stabilize", "--dim", "2", "--n", "16", "--seed", "42", "--method", "both", "--kernel", "power_law", "--out", out])

    assert status == cli.EXIT_OK
    assert "max |u_toppling - u_spectral| =" in capsys.readouterr().out
    summary = read_rows(os.path.join(out, "summary.csv"))
    assert [row["method"] for row in summary] == ["toppling", "spectral"]
    discrepancy = read_rows(os.path.join(out, "discrepancy.csv"))
    assert float(discrepancy[0]["max_abs_difference"]) <= 1e-6
    toppled = read_dsgf(os.path.join(out, "odometer_toppling.dsgf"))
    solved = read_dsgf(os.path.join(out, "odometer_spectral.dsgf"))
    assert np.max(np.abs(toppled.values - solved.values)) <= 1e-6


def test_stabilize_reports_numerical_failure(out, capsys):
    status = cli.main(["stabilize", "--dim", "1", "--n", "16", "--method", "toppling", "--max-rounds", "2", "--out", out])

    assert status == cli.EXIT_NUMERICAL
    assert "did not stabilize" in capsys.readouterr().err


def test_validate_kernel_flags_invalid_kernel(out, capsys):
    status = cli.main([
        "validate-kernel", "--dim", "2", "--n", "8", "--kernel", "power_law", "--sign", "-1", "--diagonal", "7", "--out", out,
    ])

    assert status == cli.EXIT_VALIDATION
    assert "offending frequency (0, 0)" in capsys.readouterr().out
    rows = read_rows(os.path.join(out, "psd_report.csv"))
    assert rows[0]["is_valid"] == "False"
    assert rows[0]["offending_frequency"] == "0 0"


def test_validate_kernel_accepts_valid_kernel(out):
    status = cli.main(["validate-kernel", "--dim", "1", "--n", "8,16", "--kernel", "white_noise", "--out", out])

    assert status == cli.EXIT_OK
    rows = read_rows(os.path.join(out, "psd_report.csv"))
    assert [row["n"] for row in rows] == ["8", "16"]
    assert all(row["is_valid"] == "True" for row in rows)


def test_validate_kernel_labels_extrapolated_limit(out, capsys):
    status = cli.main(["validate-kernel", "--dim", "1", "--n", "8", "--kernel", "power_law", "--out", out])

    assert status == cli.EXIT_OK
    assert re.search(r"limit multiplier at \(1,\): \S+ \(estimate, order", capsys.readouterr().out)


def test_variance_convergence_table(out):
    status = cli.main(["variance-convergence", "--dim", "2", "--n", "8,16,32,64", "--out", out])

    assert status == cli.EXIT_OK
    rows = read_rows(os.path.join(out, "variance_convergence.csv"))
    assert list(rows[0]) == ["n", "finite_n", "limit", "gap"]
    assert float(rows[-1]["finite_n"]) == pytest.approx(2.0032, abs=1e-3)


def test_monte_carlo_report(out):
    status = cli.main(["monte-carlo", "--dim", "1", "--n", "16", "--replicates", "100", "--out", out])

    assert status == cli.EXIT_OK
    rows = read_rows(os.path.join(out, "monte_carlo.csv"))
    assert list(rows[0]) == [
        "n", "finite_n", "limit", "mc_mean", "mc_var", "mc_stderr", "skewness", "excess_kurtosis", "replicates",
    ]
    assert rows[0]["replicates"] == "100"


def test_tightness_table(out):
    status = cli.main(["tightness", "--dim", "2", "--n", "8,16", "--replicates", "10", "--out", out])

    assert status == cli.EXIT_OK
    rows = read_rows(os.path.join(out, "tightness.csv"))
    assert [row["n"] for row in rows] == ["8", "16"]
    assert float(rows[0]["epsilon"]) == 2.25


def test_render_writes_pgm(out):
    status = cli.main(["render", "--dim", "2", "--n", "16", "--kernel", "power_law", "--out", out])

    assert status == cli.EXIT_OK
    pixels, maxval = read_pgm(os.path.join(out, "odometer.pgm"))
    assert pixels.shape == (16, 16) and maxval == 65535
    assert os.path.isfile(os.path.join(out, "odometer.pgm.txt"))


@pytest.mark.slow
def test_render_surfaces_differ_by_kernel_sign(tmp_path):
    surfaces = []
    for sign, diagonal in (("1", "7"), ("-1", "10")):
        out = str(tmp_path / sign)
        args = ["render", "--dim", "2", "--n", "128", "--seed", "3", "--kernel", "power_law", "--sign", sign, "--diagonal", diagonal]
        assert cli.main(args + ["--out", out]) == cli.EXIT_OK
        pixels, _ = read_pgm(os.path.join(out, "odometer.pgm"))
        assert pixels.shape == (128, 128)
        surfaces.append(read_dsgf(os.path.join(out, "odometer.dsgf")).values)

    assert np.max(np.abs(surfaces[0] - surfaces[1])) > 0


def test_render_needs_two_dimensions(out):
    assert cli.main(["render", "--dim", "1", "--n", "16", "--out", out]) == cli.EXIT_VALIDATION


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["explode"],
        ["stabilize", "--n", "16", "--dim", "two"],
        ["stabilize", "--scaling", "log"],
    ],
    ids=["no command", "unknown command", "bad integer", "bad choice"],
)
def test_usage_errors(argv, capsys):
    assert cli.main(argv) == cli.EXIT_VALIDATION


def test_config_file_with_flag_override(tmp_path):
    config = tmp_path / "run.ini"
    config.write_text("[run]\ndim = 1\nn = 8\nreplicates = 2\n[kernel]\nvariant = white_noise\n", encoding="utf-8")
    out = str(tmp_path / "run")

    status = cli.main(["sample-sigma", "--config", str(config), "--replicates", "4", "--out", out])

    assert status == cli.EXIT_OK
    assert os.path.isfile(os.path.join(out, "sigma_00003.dsgf"))
    assert read_dsgf(os.path.join(out, "sigma_00000.dsgf")).grid.dim == 1


def test_missing_table_file_is_a_validation_error(tmp_path):
    args = ["validate-kernel", "--dim", "1", "--n", "8", "--kernel", "table", "--table", str(tmp_path / "none.csv")]

    assert cli.main(args + ["--out", str(tmp_path / "run")]) == cli.EXIT_VALIDATION
