"""Invariant checks behind ``bbh verify``: gradients, convexity samples, oracle comparisons, structure."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .canonical import critical_temperature, solve_canonical, solve_canonical_global
from .functional import (BBHState, CanonicalParams, ModelParams, entropy_lower_bound_constant,
                         free_energy_grand, kinetic_minus_entropy, random_state,
                         variational_derivatives)
from .grand import critical_interaction, double_minimize, minimize
from .grid import make_grid
from .oracle import brute_force_canonical, brute_force_minimize

LEVELS = {"quick": {"n": 5, "states": 10, "pairs": 200},
          "full": {"n": 9, "states": 50, "pairs": 1000}}


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def interior_state(grid, rng: np.random.Generator, shrink: float = 0.9) -> BBHState:
    """Random state strictly inside the domain: |alpha| <= shrink sqrt(gamma(1+gamma)), rho0 >= 0.1."""
    g = rng.exponential(1.0, grid.size) + 1e-3
    u = rng.uniform(-shrink, shrink, grid.size)
    return BBHState.from_arrays(grid, g, u * np.sqrt(g * (1.0 + g)), rng.uniform(0.1, 2.0))


def gradient_error(state: BBHState, params: ModelParams, rel_step: float = 1e-5) -> float:
    """max |FD - analytic| / max |analytic| over all components of dF (central differences)."""
    grid = state.grid
    g, a, r = state.gamma.values, state.alpha.values, state.rho0
    d = variational_derivatives(state, params)
    w = grid.weights
    exact = np.concatenate([d.d_gamma.values * w, d.d_alpha.values * w, [d.d_rho0]])

    def F(gv, av, rv):
        return free_energy_grand(BBHState.from_arrays(grid, gv, av, rv), params)

    fd = np.empty_like(exact)
    room = np.sqrt(g * (1.0 + g)) - np.abs(a)
    N = grid.size
    for i in range(N):
        for j, arr in enumerate((g, a)):
            # stay well inside the domain on both sides
            cap = 0.1 * room[i] if j == 1 else min(0.1 * room[i] / (1.0 + 2.0 * g[i]), 0.1 * g[i])
            h = min(rel_step * max(1.0, abs(arr[i])), cap)
            up, dn = arr.copy(), arr.copy()
            up[i] += h
            dn[i] -= h
            if j == 0:
                fd[i] = (F(up, a, r) - F(dn, a, r)) / (2.0 * h)
            else:
                fd[N + i] = (F(g, up, r) - F(g, dn, r)) / (2.0 * h)
    h = min(rel_step * max(1.0, r), 0.5 * r)
    fd[-1] = (F(g, a, r + h) - F(g, a, r - h)) / (2.0 * h)
    return float(np.max(np.abs(fd - exact)) / np.max(np.abs(exact)))


def gradient_check(grid, params: ModelParams, rng, states: int, tol: float = 1e-5) -> Check:
    errs = [gradient_error(interior_state(grid, rng), params) for _ in range(states)]
    worst = max(errs)
    return Check(f"gradient FD vs analytic {params}", worst < tol,
                 f"{states} states, worst relative error {worst:.2e} (< {tol:g})")


def combine(x: BBHState, y: BBHState, t: float) -> BBHState:
    return BBHState.from_arrays(x.grid, t * x.gamma.values + (1 - t) * y.gamma.values,
                                t * x.alpha.values + (1 - t) * y.alpha.values,
                                t * x.rho0 + (1 - t) * y.rho0)


def convexity_violations(grid, params: ModelParams, rng, pairs: int,
                         weights=(0.25, 0.5, 0.75), slack: float = 1e-10):
    """Count (pair, t) with F(t x + (1-t) y) > t F(x) + (1-t) F(y) beyond relative slack."""
    bad = 0
    worst = 0.0
    for _ in range(pairs):
        x, y = random_state(grid, rng), random_state(grid, rng)
        fx, fy = free_energy_grand(x, params), free_energy_grand(y, params)
        for t in weights:
            chord = t * fx + (1 - t) * fy
            excess = free_energy_grand(combine(x, y, t), params) - chord
            scale = max(1.0, abs(t * fx) + abs((1 - t) * fy))
            worst = max(worst, excess / scale)
            if excess > slack * scale:
                bad += 1
    return bad, worst


def convexity_check(grid, params: ModelParams, rng, pairs: int) -> Check:
    bad, worst = convexity_violations(grid, params, rng, pairs)
    return Check(f"midpoint convexity {params}", bad == 0,
                 f"{bad} violations in {3 * pairs} samples, worst relative excess {worst:.2e}")


def oracle_points(grid):
    """(label, params) spanning superfluid / Mott at T = 0.5 and 2, mu = +-1."""
    pts = []
    for T in (0.5, 2.0):
        uc = critical_interaction(1.0, T, grid)
        pts.append((f"superfluid mu=1 T={T} U=0.5U_c", ModelParams(0.5 * uc, 1.0, T)))
        pts.append((f"Mott mu=-1 T={T} U=U_c(|mu|)", ModelParams(uc, -1.0, T)))
        pts.append((f"Mott mu=1 T={T} U=2U_c", ModelParams(2.0 * uc, 1.0, T)))
    return pts


def relative_gap(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300) if a != b else 0.0


def oracle_checks(grid, seed: int, rel: float = 1e-4) -> list:
    out = []
    for label, p in oracle_points(grid):
        o = brute_force_minimize(p, grid, seed=seed)
        m = minimize(p, grid)
        dm = double_minimize(p, grid)
        gap = relative_gap(o.free_energy, m.free_energy)
        out.append(Check(f"oracle vs closed-form branch, {label}", gap < rel and o.converged,
                         f"oracle F={o.free_energy:.10g} branch {m.branch.value} F={m.free_energy:.10g}"
                         f" rel gap {gap:.1e}"))
        gap = relative_gap(o.free_energy, dm.free_energy)
        out.append(Check(f"oracle vs global double minimisation, {label}", gap < rel and o.converged,
                         f"oracle F={o.free_energy:.10g} global F={dm.free_energy:.10g} rel gap {gap:.1e}"))
    return out


def canonical_oracle_checks(grid, seed: int, rel: float = 1e-4) -> list:
    out = []
    rho = 0.5
    tc = critical_temperature(rho, grid)
    for f in (0.9, 1.1):
        for U in (1.0, 10.0):
            p = CanonicalParams(U, f * tc, rho)
            o = brute_force_canonical(p, grid, seed=seed)
            for name, r in (("solve_canonical", solve_canonical(p, grid)),
                            ("global canonical", solve_canonical_global(p, grid))):
                gap = relative_gap(o.free_energy, r.free_energy)
                out.append(Check(f"canonical oracle vs {name}, T={f}T_c U={U:g}", gap < rel and o.converged,
                                 f"oracle F={o.free_energy:.10g} solver F={r.free_energy:.10g}"
                                 f" condensed={r.condensed} rel gap {gap:.1e}"))
    return out


def structure_problems(result, T: float, el_tol: float = 1e-8) -> list:
    """Violations of the minimiser structure: sign and size of alpha, purity at T = 0, residuals."""
    st = result.state
    a, g, r0 = st.alpha.values, st.gamma.values, st.rho0
    w = st.grid.weights
    bad = []
    if r0 > 0:
        if not np.all(a < 0):
            bad.append("alpha not negative everywhere")
        if not float(np.sum(w * np.abs(a))) < r0:
            bad.append("||alpha||_1 >= rho0")
    if (r0 == 0) != bool(np.all(a == 0)):
        bad.append("(rho0 = 0) <=> (alpha = 0) broken")
    if T == 0 and r0 > 0:
        purity = float(np.max(np.abs(a * a - g * (g + 1.0))))
        if not purity < 1e-12:
            bad.append(f"purity error {purity:.1e}")
    if not result.el_residual < el_tol:
        bad.append(f"E-L residual {result.el_residual:.1e}")
    return bad


def structure_checks(grid) -> list:
    out = []
    cases = [ModelParams(U, 1.0, 0.0) for U in (0.01, 1.0, 100.0)]
    cases.append(ModelParams(1.0, -1.0, 0.0))
    for T in (0.5, 1.0, 2.0):
        uc = critical_interaction(1.0, T, grid)
        cases += [ModelParams(f * uc, 1.0, T) for f in (0.5, 0.95, 1.0, 1.05, 2.0)]
        cases.append(ModelParams(uc, -1.0, T))
    for p in cases:
        for name, res in (("", minimize(p, grid)), ("global ", double_minimize(p, grid))):
            bad = structure_problems(res, p.T)
            out.append(Check(f"structure {name}{res.branch.value} U={p.U:.6g} mu={p.mu:g} T={p.T:g}",
                             not bad,
                             "; ".join(bad) or f"rho0={res.state.rho0:.6g} residual {res.el_residual:.1e}"))
    rho = 0.5
    tc = critical_temperature(rho, grid)
    for f in (0.0, 0.5, 0.9, 1.1):
        for U in (0.1, 10.0):
            r = solve_canonical_global(CanonicalParams(U, f * tc, rho), grid)
            st = r.state
            a = st.alpha.values
            bad = []
            if r.condensed and not (np.all(a < 0) and float(np.sum(st.grid.weights * np.abs(a))) < st.rho0):
                bad.append("alpha sign or ||alpha||_1 < rho0 broken")
            if r.residuals.constraint >= 1e-10 or r.residuals.euler_lagrange >= 1e-8:
                bad.append(f"residuals {r.residuals}")
            out.append(Check(f"canonical structure T={f}T_c U={U:g}", not bad,
                             "; ".join(bad) or f"rho0={st.rho0:.6g} condensed={r.condensed}"))
    return out


def lower_bound_check(grid, rng, samples: int, slack: float = 1e-10) -> Check:
    p = ModelParams(1.0, 1.0, 1.0)
    f_min = minimize(p, grid).free_energy
    c_t = entropy_lower_bound_constant(p.T, grid)
    below = 0
    kin = 0
    for _ in range(samples):
        st = random_state(grid, rng)
        if free_energy_grand(st, p) < f_min - slack * max(1.0, abs(f_min)):
            below += 1
        if kinetic_minus_entropy(st, p.T) < -c_t - slack * max(1.0, c_t):
            kin += 1
    return Check("lower bounds at U=1 mu=1 T=1", below == 0 and kin == 0,
                 f"{samples} states: {below} below F(minimiser), {kin} below -C_T")


def run_suite(level: str = "quick", seed: int = 0) -> list:
    """All checks at the given level; each returned Check carries its own pass flag."""
    cfg = LEVELS[level]
    grid = make_grid(cfg["n"])
    rng = np.random.default_rng(seed)
    checks = []
    for p in (ModelParams(1.0, 1.0, 1.0), ModelParams(2.0, -0.5, 0.3), ModelParams(0.5, 1.0, 0.0)):
        checks.append(gradient_check(grid, p, rng, cfg["states"]))
    for p in (ModelParams(1.0, 1.0, 1.0), ModelParams(1.0, 1.0, 0.0)):
        checks.append(convexity_check(grid, p, rng, cfg["pairs"]))
    checks += oracle_checks(grid, seed)
    checks += canonical_oracle_checks(grid, seed)
    checks += structure_checks(grid)
    checks.append(lower_bound_check(grid, rng, cfg["pairs"]))
    return checks


def timed_suite(level: str = "quick", seed: int = 0):
    t0 = time.perf_counter()
    checks = run_suite(level, seed)
    return checks, time.perf_counter() - t0
