import csv
import io
import json

import pytest

from bbh.cli import EXIT_CONVERGENCE, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main
from bbh.grid import bose_integral, make_grid


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def as_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--format", "json")
    return code, json.loads(out) if out else None


# minimize

def test_minimize_vacuum(capsys):
    code, rep = as_json(capsys, "minimize", "--U", "1", "--mu", "-1", "--T", "0", "--grid", "9")
    assert code == EXIT_OK
    assert rep["free_energy"] == 0.0 and rep["rho0"] == 0.0 and rep["gamma_l1"] == 0.0
    assert rep["branch"] == "Vacuum" and rep["converged"] is True


def test_minimize_zero_temperature_superfluid(capsys):
    code, rep = as_json(capsys, "minimize", "--U", "1", "--mu", "1", "--T", "0", "--grid", "9")
    assert code == EXIT_OK
    assert rep["phase"] == "Superfluid" and rep["rho0"] > 0
    assert rep["free_energy"] < -0.5


def test_minimize_above_critical_is_mott(capsys):
    code, rep = as_json(capsys, "critical-u", "--mu", "1", "--T", "1", "--grid", "16")
    Uc = rep["U_c"]
    code, rep = as_json(capsys, "minimize", "--U", repr(1.001 * Uc), "--mu", "1", "--T", "1", "--grid", "16")
    assert code == EXIT_OK
    assert rep["phase"] == "MottInsulator" and rep["rho0"] == 0.0
    assert rep["gamma_l1"] >= 1.0 / (2 * 1.001 * Uc)
    assert rep["el_residual"] < 1e-8


def test_minimize_global_flag(capsys):
    args = ("minimize", "--U", "20", "--mu", "1", "--T", "1", "--grid", "9")
    _, plain = as_json(capsys, *args)
    _, glob = as_json(capsys, *args, "--global")
    assert plain["phase"] == "MottInsulator" and glob["phase"] == "Superfluid"
    assert glob["free_energy"] < plain["free_energy"]


def test_text_and_csv_reports(capsys):
    args = ("minimize", "--U", "1", "--mu", "1", "--T", "0.5", "--grid", "5")
    code, out, _ = run(capsys, *args)
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0].split()[0] == "phase" and lines[0].split()[1] == "Superfluid"
    assert any(line.split()[0] == "converged" and line.split()[1] == "true" for line in lines)
    code, out, _ = run(capsys, *args, "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1 and rows[0]["phase"] == "Superfluid"


# critical values

def test_critical_u_matches_formula(capsys):
    code, rep = as_json(capsys, "critical-u", "--mu", "1", "--T", "1", "--grid", "16")
    assert code == EXIT_OK
    assert rep["U_c"] == 1.0 / (2.0 * bose_integral(1.0, make_grid(16)))
    assert rep["J"] == bose_integral(1.0, make_grid(16))


def test_critical_t_round_trip(capsys):
    code, rep = as_json(capsys, "critical-t", "--rho", "0.5", "--grid", "16")
    assert code == EXIT_OK
    assert abs(bose_integral(rep["T_c"], make_grid(16)) - 0.5) < 1e-8


def test_critical_t_default_grid(capsys):
    code, rep = as_json(capsys, "critical-t", "--rho", "0.5")
    assert code == EXIT_OK and rep["grid"] == 48
    assert rep["T_c"] == pytest.approx(3.4628057711047409, rel=1e-12)


# canonical

@pytest.mark.parametrize("T, condensed", [(1.0, True), (6.0, False)])
def test_canonical_command(capsys, T, condensed):
    code, rep = as_json(capsys, "canonical", "--U", "1", "--T", str(T), "--rho", "0.5", "--grid", "9")
    assert code == EXIT_OK
    assert rep["condensed"] is condensed
    assert rep["constraint_residual"] < 1e-10
    assert (rep["nu"] is None) == condensed
    assert rep["analytic_phase"] == rep["phase"]


# usage errors

@pytest.mark.parametrize("argv", [
    ["critical-u", "--mu", "0", "--T", "1"],
    ["critical-u", "--mu", "1", "--T", "0"],
    ["critical-t", "--rho", "-1"],
    ["minimize", "--U", "0", "--mu", "1", "--T", "1"],
    ["minimize", "--U", "1", "--mu", "1", "--T", "-1"],
    ["minimize", "--U", "1", "--mu", "1"],
    ["minimize", "--U", "1", "--mu", "nan", "--T", "1"],
    ["minimize", "--U", "1", "--mu", "1", "--T", "1", "--grid", "1"],
    ["canonical", "--U", "1", "--T", "1", "--rho", "-0.5"],
    ["diagram", "--x", "T:0.5:1:3"],
    ["diagram", "--x", "T:0.5:1", "--y", "U:1:2:3", "--fix", "mu=1"],
    ["diagram", "--x", "T:0.5:1:3", "--y", "U:1:2:3"],
    ["diagram", "--x", "T:0.5:1:3", "--y", "U:1:2:3", "--fix", "mu"],
    ["diagram", "--x", "T:0.5:1:3", "--y", "U:1:2:3", "--fix", "mu=1", "--threads", "0"],
    ["diagram", "--x", "U:0.5:1:3", "--y", "mu:1:2:3", "--fix", "T=1", "--boundary", "b.csv"],
    ["inspect", "/nonexistent/state.json"],
])
def test_usage_errors(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == EXIT_USAGE
    assert "error" in err


@pytest.mark.parametrize("argv", [["bogus"], ["minimize", "--nope", "1"], [],
                                  ["minimize", "--format", "xml"]])
def test_parser_errors_exit_one(capsys, argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == EXIT_USAGE


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "minimize" in capsys.readouterr().out


def test_convergence_failure_exit_code(capsys):
    # a tolerance no solver can reach reports the result and exits 2
    code, rep = as_json(capsys, "canonical", "--U", "1", "--T", "1", "--rho", "0.5", "--grid", "9",
                        "--tol", "0")
    assert code == EXIT_CONVERGENCE and rep["converged"] is False


# config precedence

def test_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grid": 5, "format": "json",
                               "critical-u": {"mu": 2.0, "T": 1.0, "grid": 9}}))
    code, out, _ = run(capsys, "critical-u", "--config", str(cfg))
    rep = json.loads(out)
    assert code == EXIT_OK and rep["grid"] == 9 and rep["mu"] == 2.0
    code, out, _ = run(capsys, "critical-u", "--config", str(cfg), "--grid", "16", "--mu", "1")
    rep = json.loads(out)
    assert rep["grid"] == 16 and rep["mu"] == 1.0
    # top-level keys apply to commands without their own section
    code, out, _ = run(capsys, "critical-t", "--config", str(cfg), "--rho", "0.5")
    assert json.loads(out)["grid"] == 5


@pytest.mark.parametrize("content", ["not json", "[1, 2]"])
def test_bad_config(capsys, tmp_path, content):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(content)
    code, _, err = run(capsys, "critical-t", "--rho", "0.5", "--config", str(cfg))
    assert code == EXIT_USAGE and "config" in err


# state round trip

def test_save_and_inspect(capsys, tmp_path):
    path = tmp_path / "state.json"
    code, rep = as_json(capsys, "minimize", "--U", "1", "--mu", "1", "--T", "0.5", "--grid", "5",
                        "--save-state", str(path))
    assert code == EXIT_OK and path.exists()
    code, back = as_json(capsys, "inspect", str(path))
    assert code == EXIT_OK
    assert back["n_per_axis"] == 5 and back["U"] == 1.0
    assert back["rho0"] == rep["rho0"]
    assert back["free_energy"] == pytest.approx(rep["free_energy"], rel=1e-14)


def test_canonical_save_and_inspect(capsys, tmp_path):
    path = tmp_path / "can.json"
    _, rep = as_json(capsys, "canonical", "--U", "2", "--T", "1", "--rho", "0.5", "--grid", "5",
                     "--save-state", str(path))
    _, back = as_json(capsys, "inspect", str(path))
    assert back["rho"] == 0.5
    assert back["free_energy"] == pytest.approx(rep["free_energy"], rel=1e-14)


def test_out_file(capsys, tmp_path):
    out = tmp_path / "r.json"
    code, stdout, _ = run(capsys, "critical-u", "--mu", "1", "--T", "1", "--grid", "5",
                          "--format", "json", "--out", str(out))
    assert code == EXIT_OK and stdout == ""
    assert json.loads(out.read_text())["grid"] == 5


# diagram

def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_diagram_20x20_and_boundary(capsys, tmp_path):
    table, bound = tmp_path / "d.csv", tmp_path / "b.csv"
    argv = ["diagram", "--x", "T:0.1:2:20", "--y", "U:0.5:20:20", "--fix", "mu=1", "--grid", "9",
            "--threads", "1", "--out", str(table), "--boundary", str(bound), "--boundary-steps", "30"]
    code, _, _ = run(capsys, *argv)
    assert code == EXIT_OK
    rows = read_csv(table)
    assert len(rows) == 400
    assert list(rows[0]) == ["T", "U", "phase", "rho0", "rho_gamma", "free_energy", "branch", "converged"]
    assert all(r["converged"] == "true" for r in rows)
    curve = read_csv(bound)
    assert len(curve) == 30
    Ts = [float(r["T"]) for r in curve]
    Uc = [float(r["U_c"]) for r in curve]
    assert all(a < b for a, b in zip(Ts, Ts[1:]))
    assert all(a > b for a, b in zip(Uc, Uc[1:]))
    # rerun: byte-identical table and boundary
    first = table.read_bytes(), bound.read_bytes()
    code, _, _ = run(capsys, *argv)
    assert (table.read_bytes(), bound.read_bytes()) == first


def test_diagram_json_and_canonical(capsys, tmp_path):
    out = tmp_path / "c.json"
    code, _, _ = run(capsys, "diagram", "--ensemble", "canonical", "--x", "T:0.5:4:3", "--y", "rho:0.1:1:3",
                     "--fix", "U=1", "--grid", "5", "--threads", "1", "--format", "json", "--out", str(out))
    assert code == EXIT_OK
    rows = json.loads(out.read_text())
    assert len(rows) == 9 and rows[0]["U"] == 1.0
    assert {r["branch"] for r in rows} <= {"Condensed", "Normal"}


def test_diagram_stdout_defaults_to_csv(capsys):
    code, out, _ = run(capsys, "diagram", "--x", "T:0.5:1:2", "--y", "U:1:2:2", "--fix", "mu=1",
                       "--grid", "5", "--threads", "1")
    assert code == EXIT_OK
    assert out.splitlines()[0].startswith("T,U,phase")
    assert len(out.splitlines()) == 5


def test_diagram_axes_from_config(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"diagram": {"x": {"name": "T", "min": 0.5, "max": 1, "steps": 2},
                                           "y": "U:1:2:2", "fix": {"mu": 1}, "grid": 5, "threads": 1}}))
    code, out, _ = run(capsys, "diagram", "--config", str(cfg))
    assert code == EXIT_OK and len(out.splitlines()) == 5


# verify

def test_verify_quick_reports_known_failures(capsys):
    code, out, _ = run(capsys, "verify", "--level", "quick")
    assert code == EXIT_VERIFY
    fails = [line for line in out.splitlines() if line.startswith("FAIL")]
    assert len(fails) == 3
    assert "checks passed" in out.splitlines()[-1]
