import json
import math

import numpy as np
import pytest

from bbh.errors import DomainError
from bbh.grand import PhaseLabel, classify_phase, critical_interaction
from bbh.functional import ModelParams
from bbh.diagram import (Axis, SweepRow, SweepSpec, analytic_phase, boundary_to_csv, boundary_to_json,
                         rows_to_csv, rows_to_json, run_sweep, solve_point, trace_boundary)
from bbh.grid import bose_integral, make_grid

N = 9


def tu_spec(steps=5):
    # U_c runs from about 10 at T = 1 down to 1.4 at T = 3 on this grid
    return SweepSpec("grand", (Axis("T", 1.0, 3.0, steps), Axis("U", 0.5, 12.5, steps + 2)), {"mu": 1.0}, N)


@pytest.fixture(scope="module")
def tu_rows():
    spec = tu_spec()
    return spec, run_sweep(spec, threads=1)


def test_one_row_per_lattice_point(tu_rows):
    spec, rows = tu_rows
    assert len(rows) == 35
    assert [r.params for r in rows] == spec.points()
    assert rows[0].params == {"mu": 1.0, "T": 1.0, "U": 0.5}
    assert rows[1].params["U"] == pytest.approx(2.5)


def test_classification_matches_minimizer(tu_rows):
    spec, rows = tu_rows
    for r in rows:
        assert r.converged
        assert analytic_phase("grand", r.params, N) == r.phase
        assert (r.rho0 > 1e-9) == (r.phase == PhaseLabel.SUPERFLUID)


def test_phase_flips_at_critical_curve(tu_rows):
    spec, rows = tu_rows
    Us = spec.axes[1].values()
    for T in spec.axes[0].values():
        col = [r for r in rows if r.params["T"] == T]
        labels = [r.phase for r in col]
        # a single flip from superfluid to Mott along increasing U
        k = labels.index(PhaseLabel.MOTT)
        assert all(p == PhaseLabel.SUPERFLUID for p in labels[:k])
        assert all(p == PhaseLabel.MOTT for p in labels[k:])
        Uc = critical_interaction(1.0, T, make_grid(N))
        assert Us[k - 1] < Uc <= Us[k]


def test_boundary_sandwich(tu_rows):
    spec, rows = tu_rows
    Us = spec.axes[1].values()
    Ts = spec.axes[0].values()
    curve = trace_boundary("grand", {"mu": 1.0}, (Ts[0], Ts[-1]), len(Ts), N)
    for (T, Uc), T_row in zip(curve, Ts):
        assert T == pytest.approx(T_row)
        col = [r for r in rows if r.params["T"] == T_row]
        last_sf = max(r.params["U"] for r in col if r.phase == PhaseLabel.SUPERFLUID)
        first_mott = min(r.params["U"] for r in col if r.phase == PhaseLabel.MOTT)
        assert last_sf < Uc <= first_mott
        assert first_mott - last_sf == pytest.approx(Us[1] - Us[0])


def test_sweep_is_deterministic(tu_rows):
    spec, rows = tu_rows
    again = run_sweep(spec, threads=2)
    assert rows_to_csv(spec, rows).encode() == rows_to_csv(spec, again).encode()
    assert rows_to_json(spec, rows) == rows_to_json(spec, again)


def test_mu_sweep_boundary():
    U = 2.0
    spec = SweepSpec("grand", (Axis("T", 0.5, 2.0, 4), Axis("mu", 0.5, 20.0, 14)), {"U": U}, N)
    rows = run_sweep(spec, threads=1)
    grid = make_grid(N)
    for r in rows:
        edge = 2.0 * U * bose_integral(r.params["T"], grid)
        if r.params["mu"] < edge:
            assert r.phase == PhaseLabel.MOTT
        else:
            assert r.phase == PhaseLabel.SUPERFLUID


def test_canonical_sweep_independent_of_U():
    grid = make_grid(N)
    tables = []
    for U in (0.1, 1.0, 10.0):
        spec = SweepSpec("canonical", (Axis("T", 0.5, 4.0, 5), Axis("rho", 0.1, 1.5, 5)), {"U": U}, N)
        rows = run_sweep(spec, threads=1)
        for r in rows:
            assert r.converged
            want = r.params["rho"] > bose_integral(r.params["T"], grid)
            assert (r.phase == PhaseLabel.SUPERFLUID) == want
            assert r.rho0 + r.rho_gamma == pytest.approx(r.params["rho"], abs=1e-10)
        tables.append([r.phase for r in rows])
    assert tables[0] == tables[1] == tables[2]


def test_canonical_sweep_in_U_plane_has_no_boundary():
    spec = SweepSpec("canonical", (Axis("U", 0.1, 10.0, 4), Axis("T", 0.5, 3.0, 3)), {"rho": 0.5}, N)
    rows = run_sweep(spec, threads=1)
    by_T = {}
    for r in rows:
        by_T.setdefault(r.params["T"], set()).add(r.phase)
    assert all(len(v) == 1 for v in by_T.values())


# boundary tracing

def test_grand_boundary_monotone_and_classified(g16):
    curve = trace_boundary("grand", {"mu": 1.0}, (0.2, 3.0), 12, 16)
    Uc = [u for _, u in curve]
    assert all(a > b for a, b in zip(Uc, Uc[1:]))
    for T, u in curve:
        assert classify_phase(ModelParams(0.99 * u, 1.0, T), g16) == PhaseLabel.SUPERFLUID
        assert classify_phase(ModelParams(1.01 * u, 1.0, T), g16) == PhaseLabel.MOTT


def test_canonical_boundary_is_bose_integral(g16):
    curve = trace_boundary("canonical", {}, (0.2, 3.0), 12, 16)
    rc = [r for _, r in curve]
    assert all(a < b for a, b in zip(rc, rc[1:]))
    for T, r in curve:
        assert r == bose_integral(T, g16)


@pytest.mark.parametrize("ensemble, fixed, T_range, steps", [
    ("grand", {"mu": 0.0}, (0.5, 1.0), 4),
    ("grand", {"mu": -1.0}, (0.5, 1.0), 4),
    ("grand", {}, (0.5, 1.0), 4),
    ("grand", {"mu": 1.0}, (0.0, 1.0), 4),
    ("grand", {"mu": 1.0}, (1.0, 0.5), 4),
    ("grand", {"mu": 1.0}, (0.5, 1.0), 1),
    ("other", {"mu": 1.0}, (0.5, 1.0), 4),
])
def test_trace_boundary_rejects(ensemble, fixed, T_range, steps):
    with pytest.raises(DomainError):
        trace_boundary(ensemble, fixed, T_range, steps, N)


def test_boundary_formats():
    curve = [(0.5, 1.25), (1.0, 0.75)]
    assert boundary_to_csv("grand", curve) == "T,U_c\n0.5,1.25\n1,0.75\n"
    assert json.loads(boundary_to_json("canonical", curve)) == [{"T": 0.5, "rho_c": 1.25},
                                                                 {"T": 1.0, "rho_c": 0.75}]


# spec validation

@pytest.mark.parametrize("kwargs", [
    dict(ensemble="micro", axes=(Axis("T", 0.5, 1, 3), Axis("U", 1, 2, 3)), fixed={"mu": 1.0}),
    dict(ensemble="grand", axes=(Axis("T", 0.5, 1, 3),), fixed={"mu": 1.0, "U": 1.0}),
    dict(ensemble="grand", axes=(Axis("T", 0.5, 1, 3), Axis("T", 1, 2, 3)), fixed={"mu": 1.0}),
    dict(ensemble="grand", axes=(Axis("T", 0.5, 1, 1), Axis("U", 1, 2, 3)), fixed={"mu": 1.0}),
    dict(ensemble="grand", axes=(Axis("T", 1, 1, 3), Axis("U", 1, 2, 3)), fixed={"mu": 1.0}),
    dict(ensemble="grand", axes=(Axis("T", 1, 0.5, 3), Axis("U", 1, 2, 3)), fixed={"mu": 1.0}),
    dict(ensemble="grand", axes=(Axis("T", 0.5, math.inf, 3), Axis("U", 1, 2, 3)), fixed={"mu": 1.0}),
    dict(ensemble="grand", axes=(Axis("T", 0.5, 1, 3), Axis("U", 1, 2, 3)), fixed={}),
    dict(ensemble="grand", axes=(Axis("T", 0.5, 1, 3), Axis("U", 1, 2, 3)), fixed={"mu": 1.0, "rho": 1}),
    dict(ensemble="grand", axes=(Axis("T", 0.5, 1, 3), Axis("rho", 1, 2, 3)), fixed={"mu": 1.0}),
    dict(ensemble="grand", axes=(Axis("T", 0.5, 1, 3), Axis("U", 0, 2, 3)), fixed={"mu": 1.0}),
    dict(ensemble="grand", axes=(Axis("T", -0.5, 1, 3), Axis("U", 1, 2, 3)), fixed={"mu": 1.0}),
    dict(ensemble="canonical", axes=(Axis("T", 0.5, 1, 3), Axis("U", 1, 2, 3)), fixed={"rho": -1.0}),
    dict(ensemble="grand", axes=(Axis("T", 0.5, 1, 3), Axis("U", 1, 2, 3)), fixed={"mu": 1.0}, grid_n=1),
    dict(ensemble="grand", axes=(Axis("T", 0.5, 1, 2.5), Axis("U", 1, 2, 3)), fixed={"mu": 1.0}),
])
def test_invalid_spec_rejected(kwargs):
    with pytest.raises(DomainError):
        SweepSpec(**kwargs)


def test_threads_must_be_positive():
    with pytest.raises(DomainError):
        run_sweep(tu_spec(2), threads=0)


# rows and output

def test_failed_row_is_recorded():
    row = solve_point("grand", {"T": 1.0, "U": 1.0, "mu": float("inf")}, N)
    assert not row.converged and row.phase is None and math.isnan(row.rho0)
    assert row.error.startswith("DomainError")


def test_nan_row_serialization():
    spec = tu_spec(2)
    nan = float("nan")
    rows = [SweepRow({"mu": 1.0, "T": 0.5, "U": 1.0}, None, nan, nan, nan, "", False, "NonConvergence: x"),
            SweepRow({"mu": 1.0, "T": 0.5, "U": 2.0}, PhaseLabel.MOTT, 0.0, 0.25, -0.125, "Mott", True)]
    text = rows_to_csv(spec, rows).splitlines()
    assert text[0] == "T,U,phase,rho0,rho_gamma,free_energy,branch,converged"
    assert text[1] == "0.5,1,,nan,nan,nan,,false"
    assert text[2] == "0.5,2,MottInsulator,0,0.25,-0.125,Mott,true"
    data = json.loads(rows_to_json(spec, rows))
    assert data[0]["rho0"] is None and data[0]["error"] == "NonConvergence: x"
    assert data[1]["mu"] == 1.0 and "error" not in data[1]


def test_csv_round_trips_floats(tu_rows):
    spec, rows = tu_rows
    lines = rows_to_csv(spec, rows).splitlines()[1:]
    for line, r in zip(lines, rows):
        cells = line.split(",")
        assert float(cells[3]) == r.rho0 and float(cells[5]) == r.free_energy


def test_global_sweep_not_above_dispatch():
    spec = SweepSpec("grand", (Axis("T", 0.5, 1.0, 2), Axis("U", 2.0, 8.0, 3)), {"mu": 1.0}, N,
                     global_min=True)
    glob = run_sweep(spec, threads=1)
    plain = run_sweep(SweepSpec("grand", spec.axes, spec.fixed, N), threads=1)
    for g, p in zip(glob, plain):
        assert g.free_energy <= p.free_energy + 1e-12
    assert np.all(np.isfinite([r.free_energy for r in glob]))
