"""Command-line interface behaviour and exit codes."""

import json
import os
import subprocess
import sys

import pytest

from froemt.case import builtin_case_path
from froemt.cli import main


@pytest.fixture()
def quiet_case(tmp_path):
    """Shipped system without events, written to a temp file."""
    data = json.loads(builtin_case_path("wscc9").read_text())
    data["events"] = {"faults": [], "breakers": []}
    p = tmp_path / "quiet.json"
    p.write_text(json.dumps(data))
    return p


def test_coeffs_trapezoidal(capsys):
    assert main(["coeffs", "--kind", "trapezoidal", "--step-us", "1000"]) == 0
    out = capsys.readouterr().out
    vals = {ln.split()[0]: ln.split()[1] for ln in out.splitlines() if ln.startswith(("b", "c"))}
    assert [float(vals[k]) for k in ("b0", "b_m1", "c0", "c_m1")] == [5e-4, 5e-4, 0.0, 0.0]


def test_coeffs_froa_root(capsys):
    assert main(["coeffs", "--kind", "froa", "--step-us", "1000"]) == 0
    out = capsys.readouterr().out
    assert float(out.splitlines()[-1].split()[-1]) < 1e-12


@pytest.mark.parametrize("argv", [
    [], ["bogus"], ["coeffs", "--kind", "froa"], ["run", "wscc9", "--step-us", "x", "--out", "o"],
    ["coeffs", "--kind", "rk4", "--step-us", "1000"],
    ["coeffs", "--kind", "froa", "--step-us", "20000"],
    ["sweep", "wscc9", "--steps-us", "0,5", "--out-dir", "d"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


def test_run_and_compare(quiet_case, tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", str(quiet_case), "--step-us", "1000", "--t-end", "0.05",
                 "--out", str(a)]) == 0
    assert main(["run", str(quiet_case), "--step-us", "1000", "--t-end", "0.05",
                 "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    capsys.readouterr()
    assert main(["compare", "--ref", str(a), "--test", str(a)]) == 0
    out = capsys.readouterr().out
    assert "ERR(v)     = 0 %" in out and "ERR(delta) = 0 %" in out


def test_compare_rejects_other_case(quiet_case, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", str(quiet_case), "--step-us", "2000", "--t-end", "0.02",
                 "--out", str(a)]) == 0
    assert main(["run", str(quiet_case), "--step-us", "2000", "--t-end", "0.02", "--k", "0",
                 "--out", str(b)]) == 0
    assert main(["compare", "--ref", str(a), "--test", str(b)]) == 3
    assert main(["compare", "--ref", str(a), "--test", str(b), "--force", "--voltages"]) == 0


def test_validation_errors(tmp_path, quiet_case):
    data = json.loads(quiet_case.read_text())
    data["branches"][0]["to"] = "nowhere"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    assert main(["run", str(bad), "--step-us", "1000", "--t-end", "0.01",
                 "--out", str(tmp_path / "o.csv")]) == 3
    # shipped fault at 0.1 s lies outside a 0.05 s horizon
    assert main(["run", "wscc9", "--step-us", "1000", "--t-end", "0.05",
                 "--out", str(tmp_path / "o.csv")]) == 3


def test_non_convergence(tmp_path, quiet_case):
    data = json.loads(quiet_case.read_text())
    for ld in data["loads"]:
        ld["p"] *= 40
    heavy = tmp_path / "heavy.json"
    heavy.write_text(json.dumps(data))
    assert main(["run", str(heavy), "--step-us", "1000", "--t-end", "0.01",
                 "--out", str(tmp_path / "o.csv")]) == 4


def test_io_errors(tmp_path, quiet_case):
    assert main(["run", str(tmp_path / "none.json"), "--step-us", "1000",
                 "--out", str(tmp_path / "o.csv")]) == 5
    assert main(["run", str(quiet_case), "--step-us", "1000", "--t-end", "0.01",
                 "--out", str(tmp_path / "no" / "dir" / "o.csv")]) == 5
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x\n0,nan\n")
    assert main(["compare", "--ref", str(bad), "--test", str(bad)]) == 5


def test_sweep(quiet_case, tmp_path, capsys):
    out = tmp_path / "sweep"
    assert main(["sweep", str(quiet_case), "--steps-us", "500,1000", "--t-end", "0.02",
                 "--out-dir", str(out)]) == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert len(lines) == 5
    assert {p.name for p in out.iterdir()} == {
        "report.txt", "report.csv", "reference.csv", "fro_500us.csv", "trap_500us.csv",
        "fro_1000us.csv", "trap_1000us.csv"}
    # reuse the reference
    again = tmp_path / "again"
    assert main(["sweep", str(quiet_case), "--steps-us", "1000", "--t-end", "0.02",
                 "--out-dir", str(again), "--ref", str(out / "reference.csv")]) == 0
    assert main(["sweep", "wscc9", "--steps-us", "1000", "--t-end", "0.02",
                 "--out-dir", str(again), "--ref", str(out / "reference.csv")]) == 3


def test_odebench_command(capsys):
    assert main(["odebench"]) == 0
    out = capsys.readouterr().out
    assert "observed global order" in out and "froa" in out


def test_module_entry_point():
    env = dict(os.environ)
    res = subprocess.run([sys.executable, "-m", "froemt", "coeffs", "--kind", "be",
                          "--step-us", "50"], capture_output=True, text=True, env=env)
    assert res.returncode == 0 and "5.0000000000000002e-05\n" in res.stdout
