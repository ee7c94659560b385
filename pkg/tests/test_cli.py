import csv
import json
import shutil
import subprocess
import sys

import pytest

from aadmm.cli import EXIT_NO_CERT, EXIT_OK, EXIT_USAGE, main


def test_certify_json(capsys):
    assert main(["certify", "--scheme", "nm", "--kappa", "1", "--n-ozf", "6"]) == EXIT_OK
    cert = json.loads(capsys.readouterr().out)
    assert cert["rho"] == pytest.approx(0.50, abs=0.01)
    assert cert["n_ozf"] == 6


def test_certify_no_certificate(capsys):
    assert main(["certify", "--scheme", "tm", "--kappa", "1000", "--n-ozf", "2"]) == EXIT_NO_CERT
    assert "no certificate" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["certify", "--scheme", "nm", "--kappa", "0.5"],
    ["certify", "--scheme", "nope"],
    ["certify", "--bogus-flag"],
    ["sweep", "--kappas", ""],
    ["sweep", "--points", "0"],
    ["lasso", "--schemes", "newton"],
    ["gridsearch", "--grid", "0"],
    [],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_certify_to_file(tmp_path):
    out = tmp_path / "c" / "cert.json"
    assert main(["certify", "--kappa", "4", "--n-ozf", "1", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["problem"]["kappa"] == pytest.approx(4)


def test_sweep_rows_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["sweep", "--scheme", "nm", "--kappa-min", "1", "--kappa-max", "1000", "--points", "20",
            "--n-ozf", "0", "--tol", "0.01"]
    assert main(argv + ["--out", str(a)]) == EXIT_OK
    assert main(argv + ["--out", str(b)]) == EXIT_OK
    rows = list(csv.DictReader(a.open()))
    assert len(rows) == 20
    assert a.read_bytes() == b.read_bytes()


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kappa": 4, "n_ozf": 1, "scheme": "tm"}))
    assert main(["certify", "--config", str(cfg), "--scheme", "nm"]) == EXIT_OK
    cert = json.loads(capsys.readouterr().out)
    assert cert["problem"]["kappa"] == pytest.approx(4)
    assert cert["n_ozf"] == 1
    assert cert["params"]["nu2"] == pytest.approx(1 / 3)  # nm at kappa 4


def test_bad_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]")
    assert main(["certify", "--config", str(cfg)]) == EXIT_USAGE
    assert main(["certify", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE


def test_gridsearch_center(tmp_path):
    out = tmp_path / "grid"
    assert main(["gridsearch", "--kappa", "10", "--grid", "1", "--n-ozf", "2", "--out", str(out)]) == 0
    best = json.loads((out / "best.json").read_text())
    assert best["params"]["nu1"] == pytest.approx(2 - 1 / 10 ** 0.5)
    assert len((out / "grid.csv").read_text().splitlines()) == 2


def test_lasso_outputs(tmp_path, capsys):
    out = tmp_path / "lasso"
    assert main(["lasso", "--seed", "7", "--schemes", "all", "--iters", "500", "--out", str(out)]) == 0
    traces = sorted(p.name for p in out.glob("trace_*.csv"))
    assert len(traces) == 7
    summary = list(csv.DictReader((out / "summary.csv").open()))
    assert len(summary) == 7
    assert "median" in capsys.readouterr().out


def test_lasso_tau_zero(tmp_path):
    out = tmp_path / "ls"
    assert main(["lasso", "--tau", "0", "--schemes", "admm,fista", "--iters", "50", "--n", "40",
                 "--p", "10", "--nnz", "5", "--out", str(out)]) == EXIT_OK
    assert (out / "trace_admm_seed0.csv").exists()


def test_selftest(capsys):
    assert main(["selftest"]) == EXIT_OK
    assert capsys.readouterr().out.count("PASS") == 4


@pytest.mark.skipif(shutil.which("aadmm") is None, reason="console script not installed")
def test_console_script_exit_codes():
    r = subprocess.run(["aadmm", "certify", "--kappa", "0.5"], capture_output=True)
    assert r.returncode == 64
    r = subprocess.run([sys.executable, "-m", "aadmm", "certify", "--kappa", "2", "--n-ozf", "0"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["rho"] < 1
