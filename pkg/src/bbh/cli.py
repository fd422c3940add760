"""Command-line entry point ``bbh``.

Exit codes: 0 success, 1 usage error, 2 convergence failure, 3 verification failure.
Option values come from flags, then the JSON file given by --config (top-level
keys for every command, a nested object named after the command for that
command only), then built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .canonical import (classify_canonical, critical_temperature, solve_canonical,
                        solve_canonical_global)
from .diagram import (Axis, SweepSpec, boundary_to_csv, boundary_to_json, rows_to_csv,
                      rows_to_json, run_sweep, trace_boundary)
from .errors import BBHError, DomainError, NonConvergence, NoSolution
from .functional import CanonicalParams, ModelParams, load_state, save_state
from .grand import critical_interaction, double_minimize, minimize
from .grid import bose_integral, make_grid

EXIT_OK, EXIT_USAGE, EXIT_CONVERGENCE, EXIT_VERIFY = 0, 1, 2, 3

DEFAULTS = {
    "grid": 48,
    "tol": 1e-8,
    "format": "text",
    "out": None,
    "threads": None,
    "seed": 0,
    "global": False,
    "save_state": None,
    "level": "quick",
    "ensemble": "grand",
    "boundary": None,
    "boundary_steps": 50,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser):
    # defaults are None so that config values can fill in what the flags leave unset
    p.add_argument("--grid", type=int, help="points per axis of the momentum grid (default 48)")
    p.add_argument("--tol", type=float, help="Euler-Lagrange residual tolerance (default 1e-8)")
    p.add_argument("--out", help="write the report or table to this file instead of stdout")
    p.add_argument("--format", choices=("text", "csv", "json"), help="output format")
    p.add_argument("--threads", type=int, help="worker cap for sweeps (default: all cores)")
    p.add_argument("--seed", type=int, help="seed for randomised checks (default 0)")
    p.add_argument("--config", help="JSON file with option values")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bbh", description="Bogoliubov Bose-Hubbard free-energy minimisation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("minimize", help="grand-canonical minimiser at (U, mu, T)")
    p.add_argument("--U", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--global", dest="global", action="store_const", const=True,
                   help="lowest stationary point over rho0 instead of the analytic dispatch")
    p.add_argument("--save-state", dest="save_state", help="write the minimising state as JSON")
    _common(p)

    p = sub.add_parser("canonical", help="canonical minimiser at (U, T, rho)")
    p.add_argument("--U", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--global", dest="global", action="store_const", const=True,
                   help="lowest canonical stationary point instead of the T_c dispatch")
    p.add_argument("--save-state", dest="save_state", help="write the minimising state as JSON")
    _common(p)

    p = sub.add_parser("critical-u", help="U_c = mu / (2 J(T))")
    p.add_argument("--mu", type=float)
    p.add_argument("--T", type=float)
    _common(p)

    p = sub.add_parser("critical-t", help="T_c with J(T_c) = rho")
    p.add_argument("--rho", type=float)
    _common(p)

    p = sub.add_parser("diagram", help="phase diagram sweep over two parameters")
    p.add_argument("--ensemble", choices=("grand", "canonical"))
    p.add_argument("--x", help="first axis NAME:MIN:MAX:STEPS, e.g. T:0.1:2:20")
    p.add_argument("--y", help="second axis NAME:MIN:MAX:STEPS, e.g. U:0.5:20:20")
    p.add_argument("--fix", action="append", metavar="NAME=VALUE", help="fixed parameter (repeatable)")
    p.add_argument("--global", dest="global", action="store_const", const=True,
                   help="lowest stationary point at every row")
    p.add_argument("--boundary", help="also write the traced phase boundary to this file")
    p.add_argument("--boundary-steps", dest="boundary_steps", type=int)
    _common(p)

    p = sub.add_parser("verify", help="run the invariant suites")
    p.add_argument("--level", choices=("quick", "full"))
    _common(p)

    p = sub.add_parser("inspect", help="summarise a saved state file")
    p.add_argument("path")
    _common(p)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over DEFAULTS."""
    opts = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config!r}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        section = cfg.get(args.command, {})
        opts.update({k.replace("-", "_"): v for k, v in cfg.items() if not isinstance(v, dict)})
        opts.update({k.replace("-", "_"): v for k, v in section.items()})
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "command"):
            opts[k] = v
    opts["command"] = args.command
    return opts


def _need(opts, *names):
    vals = []
    for n in names:
        v = opts.get(n)
        if v is None:
            raise UsageError(f"--{n} is required")
        try:
            v = float(v)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"--{n} must be a number, got {v!r}") from exc
        if not math.isfinite(v):
            raise UsageError(f"--{n} must be finite")
        vals.append(v)
    return vals


def _grid(opts):
    n = opts["grid"]
    if not isinstance(n, int) or n < 2:
        raise UsageError(f"--grid must be an integer >= 2, got {n!r}")
    return make_grid(n)


def _emit(opts, text: str):
    if opts["out"]:
        with open(opts["out"], "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _report(opts, fields: dict) -> str:
    if opts["format"] == "json":
        return json.dumps({k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                           for k, v in fields.items()}, indent=1) + "\n"
    if opts["format"] == "csv":
        keys = list(fields)
        return ",".join(keys) + "\n" + ",".join(_cell(fields[k]) for k in keys) + "\n"
    width = max(len(k) for k in fields)
    return "".join(f"{k:<{width}}  {_cell(v)}\n" for k, v in fields.items())


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def cmd_minimize(opts) -> int:
    U, mu, T = _need(opts, "U", "mu", "T")
    if not U > 0:
        raise UsageError("--U must be > 0")
    if T < 0:
        raise UsageError("--T must be >= 0")
    grid = _grid(opts)
    params = ModelParams(U, mu, T)
    res = double_minimize(params, grid, tol=opts["tol"]) if opts["global"] else minimize(params, grid, opts["tol"])
    st = res.state
    fields = {
        "phase": res.phase.label,
        "rho0": st.rho0,
        "gamma_l1": st.gamma.integrate(),
        "alpha_integral": st.alpha.integrate(),
        "free_energy": res.free_energy,
        "branch": res.branch.value,
        "el_residual": res.el_residual,
        "rho0_derivative": res.rho0_stationarity,
        "iterations": res.iterations,
        "converged": res.converged,
    }
    _emit(opts, _report(opts, fields))
    if opts["save_state"]:
        save_state(opts["save_state"], st, params)
    return EXIT_OK if res.converged else EXIT_CONVERGENCE


def cmd_canonical(opts) -> int:
    U, T, rho = _need(opts, "U", "T", "rho")
    if not U > 0 or T < 0 or rho < 0:
        raise UsageError("canonical needs U > 0, T >= 0, rho >= 0")
    grid = _grid(opts)
    params = CanonicalParams(U, T, rho)
    res = solve_canonical_global(params, grid) if opts["global"] else solve_canonical(params, grid)
    st = res.state
    ok = res.residuals.constraint < 1e-10 and res.residuals.euler_lagrange <= opts["tol"]
    fields = {
        "phase": res.phase.label,
        "condensed": res.condensed,
        "rho0": st.rho0,
        "gamma_l1": st.gamma.integrate(),
        "alpha_integral": st.alpha.integrate(),
        "free_energy": res.free_energy,
        "nu": float("nan") if res.nu is None else res.nu,
        "constraint_residual": res.residuals.constraint,
        "el_residual": res.residuals.euler_lagrange,
        "converged": ok,
    }
    if rho > 0:
        fields["T_c"] = critical_temperature(rho, grid)
        fields["analytic_phase"] = classify_canonical(T, rho, grid).label
    _emit(opts, _report(opts, fields))
    if opts["save_state"]:
        save_state(opts["save_state"], st, params)
    return EXIT_OK if ok else EXIT_CONVERGENCE


def cmd_critical_u(opts) -> int:
    mu, T = _need(opts, "mu", "T")
    if not mu > 0:
        raise UsageError("critical-u needs --mu > 0")
    if not T > 0:
        raise UsageError("critical-u needs --T > 0")
    grid = _grid(opts)
    _emit(opts, _report(opts, {"U_c": critical_interaction(mu, T, grid), "J": bose_integral(T, grid),
                               "mu": mu, "T": T, "grid": grid.n_per_axis}))
    return EXIT_OK


def cmd_critical_t(opts) -> int:
    (rho,) = _need(opts, "rho")
    if not rho > 0:
        raise UsageError("critical-t needs --rho > 0")
    grid = _grid(opts)
    tc = critical_temperature(rho, grid)
    _emit(opts, _report(opts, {"T_c": tc, "J": bose_integral(tc, grid), "rho": rho,
                               "grid": grid.n_per_axis}))
    return EXIT_OK


def _axis(text) -> Axis:
    if not text:
        raise UsageError("diagram needs --x and --y as NAME:MIN:MAX:STEPS")
    if isinstance(text, dict):
        return Axis(str(text["name"]), float(text["min"]), float(text["max"]), int(text["steps"]))
    parts = str(text).split(":")
    if len(parts) != 4:
        raise UsageError(f"axis must be NAME:MIN:MAX:STEPS, got {text!r}")
    try:
        return Axis(parts[0], float(parts[1]), float(parts[2]), int(parts[3]))
    except ValueError as exc:
        raise UsageError(f"bad axis {text!r}: {exc}") from exc


def _fixed(items) -> dict:
    if isinstance(items, dict):
        return {k: float(v) for k, v in items.items()}
    out = {}
    for item in items or []:
        name, sep, value = str(item).partition("=")
        if not sep:
            raise UsageError(f"--fix expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError as exc:
            raise UsageError(f"--fix {item!r}: {exc}") from exc
    return out


def cmd_diagram(opts) -> int:
    fmt = opts["format"] if opts["format"] != "text" else "csv"
    try:
        spec = SweepSpec(opts["ensemble"], (_axis(opts.get("x")), _axis(opts.get("y"))),
                         _fixed(opts.get("fix")), grid_n=opts["grid"], tol=opts["tol"],
                         global_min=bool(opts["global"]))
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    threads = opts["threads"]
    if threads is not None and threads < 1:
        raise UsageError("--threads must be >= 1")
    rows = run_sweep(spec, threads)
    _emit(opts, rows_to_csv(spec, rows) if fmt == "csv" else rows_to_json(spec, rows))
    if opts["boundary"]:
        t_ax = next((ax for ax in spec.axes if ax.name == "T"), None)
        if t_ax is None:
            raise UsageError("--boundary needs T as one of the sweep axes")
        lo = t_ax.lo if t_ax.lo > 0 else t_ax.values()[1]
        samples = trace_boundary(spec.ensemble, spec.fixed, (lo, t_ax.hi), opts["boundary_steps"],
                                 spec.grid_n)
        text = boundary_to_csv(spec.ensemble, samples) if fmt == "csv" else boundary_to_json(spec.ensemble, samples)
        with open(opts["boundary"], "w", newline="") as fh:
            fh.write(text)
    return EXIT_OK if all(r.converged for r in rows) else EXIT_CONVERGENCE


def cmd_verify(opts) -> int:
    from .verify import timed_suite

    checks, seconds = timed_suite(opts["level"], opts["seed"])
    if opts["format"] == "json":
        text = json.dumps({"level": opts["level"], "seconds": seconds,
                           "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail}
                                      for c in checks]}, indent=1) + "\n"
    else:
        width = max(len(c.name) for c in checks)
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{width}}  {c.detail}" for c in checks]
        failed = sum(not c.passed for c in checks)
        lines.append(f"{len(checks) - failed}/{len(checks)} checks passed in {seconds:.1f} s "
                     f"(level {opts['level']})")
        text = "\n".join(lines) + "\n"
    _emit(opts, text)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY


def cmd_inspect(opts) -> int:
    try:
        state, params = load_state(opts["path"])
    except OSError as exc:
        raise UsageError(f"cannot read {opts['path']!r}: {exc}") from exc
    fields = {"n_per_axis": state.grid.n_per_axis, "rho0": state.rho0,
              "gamma_l1": state.gamma.integrate(), "alpha_integral": state.alpha.integrate()}
    if isinstance(params, ModelParams):
        from .functional import free_energy_grand
        fields.update(U=params.U, mu=params.mu, T=params.T, free_energy=free_energy_grand(state, params))
    elif isinstance(params, CanonicalParams):
        from .functional import free_energy_canonical
        fields.update(U=params.U, T=params.T, rho=params.rho,
                      free_energy=free_energy_canonical(state.gamma, state.alpha, params, state.excess))
    _emit(opts, _report(opts, fields))
    return EXIT_OK


COMMANDS = {
    "minimize": cmd_minimize,
    "canonical": cmd_canonical,
    "critical-u": cmd_critical_u,
    "critical-t": cmd_critical_t,
    "diagram": cmd_diagram,
    "verify": cmd_verify,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve(args)
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        print(f"bbh {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"bbh {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonConvergence, NoSolution, BBHError) as exc:
        print(f"bbh {args.command}: solver failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
