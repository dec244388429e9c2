import json
import subprocess
import sys

import numpy as np
import pytest
from click.testing import CliRunner

from nhflow.cli import main
from nhflow.io import read_field, write_field
from nhflow.thermo import ThermoReport


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


@pytest.fixture(scope="module")
def sol(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "sol"
    r = run("generate", "--config", "qstat_poly", "--out", d)
    assert r.exit_code == 0, r.output
    return d


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    from nhflow.config import CONFIG_DIR

    d = tmp_path_factory.mktemp("cli_small")
    text = (CONFIG_DIR / "qstat_poly.ini").read_text().replace(", 21", ", 11")
    (d / "small.ini").write_text(text)
    assert run("generate", "--config", d / "small.ini", "--out", d / "sol").exit_code == 0
    return d / "sol"


def test_generate_and_verify(sol):
    r = run("verify", sol)
    assert r.exit_code == 0 and "overall PASS" in r.output
    doc = json.loads(run("verify", sol, "--report", "json").output)
    assert doc["passed"] and doc["manifest_max_diff"] <= 1e-12 and not doc["checksum_mismatch"]


def test_lc_flags(sol):
    r = run("verify", sol, "--lc", "--report", "json")
    assert r.exit_code == 0 and json.loads(r.output)["lc"]["max"] > 1e-3
    assert run("verify", sol, "--require-lc").exit_code == 1


def test_tolerance_override(sol):
    assert run("verify", sol, "--tol", "1e-12").exit_code == 1


def test_generate_is_deterministic(tmp_path, sol):
    assert run("generate", "--config", "qstat_poly", "--out", tmp_path / "b").exit_code == 0
    for f in sorted(sol.iterdir()):
        if f.is_file():
            assert (tmp_path / "b" / f.name).read_bytes() == f.read_bytes(), f.name


@pytest.mark.parametrize("name", ["h3", "g2", "N5_1", "h8"])
def test_corruption_detected(tmp_path, name):
    d = tmp_path / "s"
    run("generate", "--config", "qstat_poly", "--out", d)
    f = read_field(d / f"{name}.nhf")
    write_field(d / f"{name}.nhf", f * 1.01)
    r = run("verify", d, "--report", "json")
    assert r.exit_code == 1
    doc = json.loads(r.output)
    assert doc["failing"] and doc["checksum_mismatch"] == [name]


def test_unknown_key_exit_2(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[run]\nname = x\nbogus = 1\n[grid]\nx1 = 0, 1, 9\n")
    r = run("generate", "--config", p, "--out", tmp_path / "o")
    assert r.exit_code == 2 and "bogus" in r.output


def test_lambda_zero_phi_exit_2(tmp_path):
    p = tmp_path / "phi.ini"
    p.write_text("[grid]\nx1 = 0, 1, 9\nx2 = 0, 1, 9\ny3 = 0.5, 1.5, 9\ny4 = 0, 1, 9\n"
                 "[base]\npsi = 0\n[shell2]\nmode = phi\nLambda = 0\nJ = -0.5\ngenerator = 1.0\n")
    r = run("generate", "--config", p, "--out", tmp_path / "o")
    assert r.exit_code == 2 and "Lambda" in r.output


def test_thermo(small, tmp_path):
    r = run("thermo", small, "--tau", "0.5:1:2", "--lambda-h", 0.1, "--lambda-v", 0.15, "--out", tmp_path)
    assert r.exit_code == 0
    rep = ThermoReport.from_csv((tmp_path / "thermo.csv").read_text())
    assert np.all(rep.S == 0)
    assert rep.lnZ[1] / rep.lnZ[0] == pytest.approx(1 / 16, rel=1e-14)
    assert json.loads((tmp_path / "thermo.json").read_text())["n_tau"] == 2


def test_thermo_threads_identical(small, tmp_path):
    args = ["thermo", small, "--tau", "0.5:2:4", "--lambda-h", 0.3, "--lambda-v", 0.0]
    a = run(*args, "--out", tmp_path / "a").output
    b = CliRunner().invoke(main, ["--threads", "3"] + [str(x) for x in args] + ["--out", str(tmp_path / "b")]).output
    assert a == b


@pytest.mark.parametrize("args", [
    ["--tau", "0.5:1:2", "--lambda-h", "0.1"],
    ["--tau", "0.5:1:2", "--lambda-v", "0.1"],
    ["--tau", "0:1:2", "--lambda-h", "0.1", "--lambda-v", "0.1"],
    ["--tau", "junk", "--lambda-h", "0.1", "--lambda-v", "0.1"],
])
def test_thermo_usage_errors(small, args):
    assert run("thermo", small, *args).exit_code == 2


def test_thermo_4d(small, tmp_path):
    r = run("thermo", small, "--tau", "1:1:1", "--lambda-h", 1.0, "--4d", "--no-sigma", "--out", tmp_path)
    assert r.exit_code == 0
    assert ThermoReport.from_csv(r.output).S[0] == 0


def test_missing_solution_exit_2(tmp_path):
    assert run("verify", tmp_path / "nope").exit_code == 2
    assert run("export", tmp_path / "nope", "--format", "csv").exit_code == 2
    assert run("thermo", tmp_path / "nope", "--tau", "1:2:2", "--lambda-h", 0, "--lambda-v", 0).exit_code == 2


def test_export_round_trip(sol, tmp_path):
    assert run("export", sol, "--format", "csv", "--out", tmp_path / "c").exit_code == 0
    assert run("verify", tmp_path / "c").exit_code == 0
    assert run("export", tmp_path / "c", "--format", "bin", "--out", tmp_path / "b").exit_code == 0
    for f in sol.glob("*.nhf"):
        assert (tmp_path / "b" / f.name).read_bytes() == f.read_bytes()


def test_prime_only_solution(tmp_path):
    p = tmp_path / "p.ini"
    p.write_text("[prime]\nfamily = flat\n[grid]\nx1 = 0, 1, 9\nx2 = 0, 1, 9\ny3 = 0, 1, 9\ny4 = 0, 1, 9\n")
    assert run("generate", "--config", p, "--out", tmp_path / "o").exit_code == 0
    r = run("verify", tmp_path / "o")
    assert r.exit_code == 0 and "not checked" in r.output


def test_dump_connection(tmp_path):
    r = run("generate", "--config", "qstat_poly", "--out", tmp_path / "o", "--dump-connection")
    assert r.exit_code == 0 and (tmp_path / "o" / "connection" / "index.txt").is_file()


def test_catalog():
    r = run("catalog", "list", "--json")
    doc = json.loads(r.output)
    assert len(doc["prime_families"]) >= 6 and "qstat_poly" in doc["configs"]
    assert "new_kds" in run("catalog", "list").output


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "nhflow", "catalog", "list"], capture_output=True, text=True)
    assert r.returncode == 0 and "flat" in r.stdout
