"""Canonical minimisation at fixed total density rho = int gamma + rho0.

With rho0 = rho - I_gamma substituted, the canonical stationarity equations
produce the same closed-form fields as the grand superfluid branch, with
c = U(rho0 - I_alpha) and b = U(rho0 + I_alpha). The alpha equation fixes
c(b) exactly as in the grand case; the density constraint
I_gamma(c, b) + (b + c)/(2U) = rho replaces rho0-stationarity and is solved
for b on [0, 2U rho]. Above T_c the minimiser is a Bose distribution with a
chemical multiplier nu <= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BracketError, DomainError, NoSolution, NuBracketFailure
from .functional import BBHState, CanonicalParams, canonical_derivatives, free_energy_canonical
from .grand import BOUNDARY_RTOL, LevelModel, PhaseLabel, _Counter
from .grid import TorusGrid, bose_integral, bose_occupation, invert_bose_integral
from .roots import bisect


@dataclass(frozen=True)
class CanonicalResiduals:
    """|I_gamma + rho0 - rho| and the largest Euler-Lagrange violation.

    In the normal phase d/dgamma equals nu everywhere; the reported value is
    measured against that constant.
    """

    constraint: float
    euler_lagrange: float


@dataclass(frozen=True)
class CanonicalResult:
    state: BBHState
    free_energy: float
    nu: float | None
    condensed: bool
    residuals: CanonicalResiduals
    iterations: int = 0

    @property
    def phase(self) -> PhaseLabel:
        return PhaseLabel.SUPERFLUID if self.condensed else PhaseLabel.MOTT


def critical_temperature(rho: float, grid: TorusGrid) -> float:
    """T_c with J(T_c) = rho, resolved to full double precision."""
    if not rho > 0:
        raise DomainError(f"T_c needs rho > 0, got {rho!r}")
    return invert_bose_integral(rho, grid, tol=0.0)


def _below_critical(T: float, rho: float, grid: TorusGrid) -> bool:
    """J(T) < rho, with J(T) within relative roundoff of rho counted as critical (normal)."""
    if T == 0:
        return True
    return bose_integral(T, grid) < rho * (1.0 - BOUNDARY_RTOL)


def classify_canonical(T: float, rho: float, grid: TorusGrid) -> PhaseLabel:
    """Superfluid iff T < T_c(rho), T = 0 included. U plays no role."""
    if not rho > 0:
        raise DomainError(f"canonical classification needs rho > 0, got {rho!r}")
    if T < 0:
        raise DomainError(f"T must be >= 0, got {T!r}")
    return PhaseLabel.SUPERFLUID if _below_critical(T, rho, grid) else PhaseLabel.MOTT


def _residuals(state: BBHState, params: CanonicalParams, nu: float = 0.0) -> CanonicalResiduals:
    i_g = state.gamma.integrate()
    constraint = abs(i_g + state.rho0 - params.rho)
    dg, da = canonical_derivatives(state.gamma, state.alpha, params, state.excess)
    if params.T > 0:
        el = max(float(np.max(np.abs(dg.values - nu))), float(np.max(np.abs(da.values))))
    else:
        # pure states: gamma is tied to alpha, so only the derivative along the curve counts
        a = state.alpha.values
        along = dg.values * a / np.sqrt(a * a + 0.25) + da.values
        el = max(float(np.max(np.abs(along))), float(np.max(np.maximum(-dg.values, 0.0))))
    return CanonicalResiduals(constraint, el)


def _normal_phase(params: CanonicalParams, grid: TorusGrid) -> CanonicalResult:
    T, rho = params.T, params.rho
    model = LevelModel(grid, T)
    counter = _Counter()
    J = model.bose(0.0)

    def density(nu):
        return model.bose(-nu) - rho

    density = counter.wrap(density)
    if J <= rho:
        # T at T_c up to roundoff: the multiplier sits at its bound
        nu = 0.0
    else:
        lo, f_lo = -1.0, density(-1.0)
        while f_lo > 0:
            lo *= 2.0
            if lo < -1e300:
                raise NuBracketFailure(f"no nu <= 0 gives density {rho!r} at T={T!r}")
            f_lo = density(lo)
        nu, _ = bisect(density, lo, 0.0, f_lo=f_lo, f_hi=J - rho)
    gamma = grid.expand(bose_occupation((model.E - nu) / T))
    state = BBHState.from_arrays(grid, gamma, np.zeros(grid.size), 0.0, gamma * (1.0 + gamma))
    F = free_energy_canonical(state.gamma, state.alpha, params, state.excess)
    return CanonicalResult(state, F, nu, False, _residuals(state, params, nu), counter.n)


def _condensed_roots(params: CanonicalParams, model: LevelModel, counter, ladder=48):
    """All sign changes of h(b) = I_gamma(c(b), b) + (b + c(b))/(2U) - rho on (0, 2U rho]."""
    U, rho = params.U, params.rho

    def h(b):
        c = model.c_of_b(U, b, counter)
        return model.moments(c, b)[0] + (b + c) / (2.0 * U) - rho

    top = 2.0 * U * rho
    h0 = (model.bose(0.0) if model.T > 0 else 0.0) - rho
    tiny = top * np.array([1e-12, 1e-9, 1e-6, 1e-4])
    bs = np.concatenate([[0.0], tiny, top * (np.arange(1, ladder + 1) / ladder) ** 2])
    vals = [h0] + [h(b) for b in bs[1:]]
    roots = []
    for k in range(len(bs) - 1):
        lo, hi = vals[k], vals[k + 1]
        if hi == 0.0:
            # an exact zero is a root (at tiny scales the root sits within an ulp of the rung)
            if lo != 0.0:
                roots.append(bs[k + 1])
        elif lo != 0.0 and (lo > 0) != (hi > 0):
            b, _ = bisect(h, bs[k], bs[k + 1], f_lo=lo, f_hi=hi)
            roots.append(b)
    return roots


def _condensed_phase(params: CanonicalParams, grid: TorusGrid) -> CanonicalResult | None:
    """Lowest condensed stationary point, or None when the constraint equation has no root."""
    U, rho = params.U, params.rho
    model = LevelModel(grid, params.T)
    counter = _Counter()
    roots = _condensed_roots(params, model, counter)
    if not roots:
        return None
    best = None
    for b in roots:
        c = model.c_of_b(U, b, counter)
        rho0 = (b + c) / (2.0 * U)
        # the grand functional at mu = 0 equals the canonical one on the constraint surface
        F = model.free_energy(c, b, rho0, U, 0.0)
        if best is None or F < best[0]:
            best = (F, c, b)
    _, c, b = best
    g, a = model.fields(c, b)
    gamma, alpha = grid.expand(g), grid.expand(a)
    i_g = float(np.sum(grid.weights * gamma))
    state = BBHState.from_arrays(grid, gamma, alpha, rho - i_g, grid.expand(model.excess(c, b)))
    F = free_energy_canonical(state.gamma, state.alpha, params, state.excess)
    return CanonicalResult(state, F, None, True, _residuals(state, params), counter.n)


def solve_canonical(params: CanonicalParams, grid: TorusGrid) -> CanonicalResult:
    """Minimiser of the canonical functional at density rho.

    rho = 0 gives the zero state. For J(T) >= rho the normal phase is returned
    with its multiplier nu <= 0; below T_c (and at T = 0) the condensed branch.
    When several condensed stationary points exist the lowest free energy wins.
    """
    rho, T = params.rho, params.T
    if rho == 0:
        # the feasible set is the single point gamma = alpha = 0
        return CanonicalResult(BBHState.vacuum(grid), 0.0, None, False, CanonicalResiduals(0.0, 0.0))
    if _below_critical(T, rho, grid):
        try:
            res = _condensed_phase(params, grid)
        except BracketError as exc:
            raise NoSolution(str(exc)) from exc
        if res is None:
            raise NoSolution("no condensed stationary point satisfies the density constraint")
        return res
    return _normal_phase(params, grid)


def solve_canonical_global(params: CanonicalParams, grid: TorusGrid) -> CanonicalResult:
    """Lowest free energy among all canonical stationary points.

    The reduced canonical functional carries -(U/2) I_gamma^2 and is not
    convex. Above T_c and at large U a condensed stationary point can undercut
    the normal phase that solve_canonical returns there, so the condensed
    branch is searched at every temperature and compared.
    """
    if params.rho == 0 or _below_critical(params.T, params.rho, grid):
        return solve_canonical(params, grid)
    normal = _normal_phase(params, grid)
    condensed = _condensed_phase(params, grid)
    if condensed is not None and condensed.free_energy < normal.free_energy:
        return condensed
    return normal
