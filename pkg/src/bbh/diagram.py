"""Parameter sweeps over two of (T, U, mu, rho), boundary tracing and tabular output."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .canonical import classify_canonical, solve_canonical, solve_canonical_global
from .errors import BBHError, DomainError
from .functional import CanonicalParams, ModelParams
from .grand import (CONDENSATE_THRESHOLD, PhaseLabel, classify_phase, critical_interaction,
                    double_minimize, minimize)
from .grid import bose_integral, make_grid

ENSEMBLE_PARAMS = {"grand": ("T", "U", "mu"), "canonical": ("T", "U", "rho")}


@dataclass(frozen=True)
class Axis:
    """Uniform ladder of ``steps`` values from ``lo`` to ``hi`` inclusive."""

    name: str
    lo: float
    hi: float
    steps: int

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.steps)


@dataclass(frozen=True)
class SweepSpec:
    ensemble: str
    axes: tuple
    fixed: dict = field(default_factory=dict)
    grid_n: int = 48
    tol: float = 1e-8
    # False: the analytic-dispatch solvers; True: the lowest stationary point
    global_min: bool = False

    def __post_init__(self):
        if self.ensemble not in ENSEMBLE_PARAMS:
            raise DomainError(f"ensemble must be grand or canonical, got {self.ensemble!r}")
        names = ENSEMBLE_PARAMS[self.ensemble]
        if len(self.axes) != 2:
            raise DomainError("a sweep needs exactly two axes")
        a1, a2 = self.axes
        for ax in self.axes:
            if ax.name not in names:
                raise DomainError(f"axis {ax.name!r} is not a {self.ensemble} parameter {names}")
            if int(ax.steps) != ax.steps or ax.steps < 2:
                raise DomainError(f"axis {ax.name} needs steps >= 2, got {ax.steps!r}")
            if not (math.isfinite(ax.lo) and math.isfinite(ax.hi)) or not ax.lo < ax.hi:
                raise DomainError(f"axis {ax.name} needs a nonempty finite range, got [{ax.lo}, {ax.hi}]")
        if a1.name == a2.name:
            raise DomainError("the two axes must differ")
        rest = set(names) - {a1.name, a2.name}
        if set(self.fixed) != rest:
            raise DomainError(f"fixed values needed for exactly {sorted(rest)}, got {sorted(self.fixed)}")
        if int(self.grid_n) != self.grid_n or self.grid_n < 2:
            raise DomainError(f"grid_n must be an integer >= 2, got {self.grid_n!r}")
        # every lattice point must be a valid parameter set
        for name in names:
            lo, hi = self._range(name)
            if name == "U" and not lo > 0:
                raise DomainError("U must be > 0 over the whole sweep")
            if name in ("T", "rho") and lo < 0:
                raise DomainError(f"{name} must be >= 0 over the whole sweep")

    def _range(self, name):
        for ax in self.axes:
            if ax.name == name:
                return ax.lo, ax.hi
        v = float(self.fixed[name])
        return v, v

    def points(self) -> list:
        """Parameter dicts in row order (first axis outer, second axis inner)."""
        a1, a2 = self.axes
        out = []
        for v1 in a1.values():
            for v2 in a2.values():
                p = {k: float(v) for k, v in self.fixed.items()}
                p[a1.name] = float(v1)
                p[a2.name] = float(v2)
                out.append(p)
        return out


@dataclass(frozen=True)
class SweepRow:
    params: dict
    phase: PhaseLabel | None
    rho0: float
    rho_gamma: float
    free_energy: float
    branch: str
    converged: bool
    error: str | None = None


def solve_point(ensemble: str, params: dict, grid_n: int, tol: float = 1e-8,
                global_min: bool = False) -> SweepRow:
    """One sweep row; solver failures are recorded in the row instead of raised."""
    grid = make_grid(grid_n)
    try:
        if ensemble == "grand":
            mp = ModelParams(params["U"], params["mu"], params["T"])
            res = double_minimize(mp, grid, tol=tol) if global_min else minimize(mp, grid, tol)
            state, F, branch, ok = res.state, res.free_energy, res.branch.value, res.converged
        else:
            cp = CanonicalParams(params["U"], params["T"], params["rho"])
            res = solve_canonical_global(cp, grid) if global_min else solve_canonical(cp, grid)
            state, F = res.state, res.free_energy
            branch = "Condensed" if res.condensed else "Normal"
            ok = res.residuals.constraint < 1e-10 and res.residuals.euler_lagrange <= tol
    except (BBHError, ArithmeticError) as exc:
        nan = float("nan")
        return SweepRow(params, None, nan, nan, nan, "", False, f"{type(exc).__name__}: {exc}")
    phase = PhaseLabel.SUPERFLUID if state.rho0 > CONDENSATE_THRESHOLD else PhaseLabel.MOTT
    return SweepRow(params, phase, state.rho0, state.gamma.integrate(), F, branch, bool(ok))


def _task(args):
    return solve_point(*args)


def run_sweep(spec: SweepSpec, threads: int | None = None) -> list:
    """All rows of the sweep in spec order; ``threads`` caps worker processes."""
    tasks = [(spec.ensemble, p, spec.grid_n, spec.tol, spec.global_min) for p in spec.points()]
    workers = threads if threads is not None else (os.cpu_count() or 1)
    if workers < 1:
        raise DomainError(f"threads must be >= 1, got {threads!r}")
    workers = min(workers, len(tasks))
    if workers == 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def analytic_phase(ensemble: str, params: dict, grid_n: int) -> PhaseLabel:
    """Phase predicted by the analytic criterion at a sweep point."""
    grid = make_grid(grid_n)
    if ensemble == "grand":
        return classify_phase(ModelParams(params["U"], params["mu"], params["T"]), grid)
    if params["rho"] == 0:
        return PhaseLabel.MOTT
    return classify_canonical(params["T"], params["rho"], grid)


def trace_boundary(ensemble: str, fixed: dict, T_range, steps: int, grid_n: int) -> list:
    """(T, U_c(T)) at fixed mu (grand) or (T, rho_c(T) = J(T)) (canonical) on a uniform T ladder."""
    lo, hi = T_range
    if not 0 < lo < hi or int(steps) != steps or steps < 2:
        raise DomainError(f"boundary needs 0 < T_min < T_max and steps >= 2, got {T_range!r}, {steps!r}")
    grid = make_grid(grid_n)
    Ts = np.linspace(lo, hi, steps)
    if ensemble == "grand":
        mu = float(fixed.get("mu", float("nan")))
        if not mu > 0:
            raise DomainError(f"grand boundary needs mu > 0, got {mu!r}")
        return [(float(T), critical_interaction(mu, float(T), grid)) for T in Ts]
    if ensemble == "canonical":
        return [(float(T), bose_integral(float(T), grid)) for T in Ts]
    raise DomainError(f"ensemble must be grand or canonical, got {ensemble!r}")


# output

def _num(x: float) -> str:
    return format(float(x), ".17g")


def rows_to_csv(spec: SweepSpec, rows) -> str:
    a1, a2 = (ax.name for ax in spec.axes)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([a1, a2, "phase", "rho0", "rho_gamma", "free_energy", "branch", "converged"])
    for r in rows:
        w.writerow([_num(r.params[a1]), _num(r.params[a2]), r.phase.value if r.phase else "",
                    _num(r.rho0), _num(r.rho_gamma), _num(r.free_energy), r.branch,
                    "true" if r.converged else "false"])
    return buf.getvalue()


def _json_num(x: float):
    return float(x) if math.isfinite(x) else None


def rows_to_json(spec: SweepSpec, rows) -> str:
    names = [ax.name for ax in spec.axes]
    out = []
    for r in rows:
        obj = {n: _json_num(r.params[n]) for n in names}
        obj.update({k: _json_num(v) for k, v in r.params.items() if k not in names})
        obj.update(phase=r.phase.value if r.phase else None, rho0=_json_num(r.rho0),
                   rho_gamma=_json_num(r.rho_gamma), free_energy=_json_num(r.free_energy),
                   branch=r.branch, converged=r.converged)
        if r.error:
            obj["error"] = r.error
        out.append(obj)
    return json.dumps(out, indent=1) + "\n"


def boundary_to_csv(ensemble: str, samples) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["T", "U_c" if ensemble == "grand" else "rho_c"])
    for T, v in samples:
        w.writerow([_num(T), _num(v)])
    return buf.getvalue()


def boundary_to_json(ensemble: str, samples) -> str:
    key = "U_c" if ensemble == "grand" else "rho_c"
    return json.dumps([{"T": T, key: v} for T, v in samples], indent=1) + "\n"
