"""Grand-canonical minimisation: closed-form branches, double minimisation and phase labels.

Every closed-form field depends on two scalars, the shift c and the pairing
b, through E = eps + c and x = sqrt(E^2 - b^2):

    gamma = b^2 / (2x(E + x)) + E n(x) / x,   alpha = -(b / 2x)(1 + 2 n(x)),

with n(x) = 1/(exp(x/T) - 1) (zero at T = 0). In terms of the unknowns,
c = U(rho0 - I_alpha) and b = U(rho0 + I_alpha). The alpha equation
I_alpha(c, b) = (b - c)/(2U) is strictly increasing in c at fixed b, so each
branch becomes a nested pair of bisections.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BranchInfeasible, DomainError, NonConvergence, NoSolution, SingularDerivative
from .functional import (BBHState, ModelParams, entropy_lower_bound_constant,
                         free_energy_grand, variational_derivatives)
from .grid import ScalarField, TorusGrid, bose_integral, bose_occupation
from .roots import bisect, expand_upper

BOUNDARY_RTOL = 1e-12
DEFAULT_TOL = 1e-8
CONDENSATE_THRESHOLD = 1e-9


class Branch(str, enum.Enum):
    VACUUM = "Vacuum"
    MOTT = "MottNormal"
    SUPERFLUID = "Superfluid"
    ZERO_T_SUPERFLUID = "ZeroTSuperfluid"


class PhaseLabel(str, enum.Enum):
    SUPERFLUID = "Superfluid"
    MOTT = "MottInsulator"

    @property
    def label(self) -> str:
        return self.value


@dataclass(frozen=True)
class BranchCoefficients:
    """A(p) = (eps + c)/T and B = b/T (T = 0: no rescaling)."""

    a_field: ScalarField
    b_scalar: float


@dataclass(frozen=True)
class MinimizerResult:
    state: BBHState
    free_energy: float
    branch: Branch
    el_residual: float
    rho0_stationarity: float
    iterations: int
    converged: bool = True
    coefficients: BranchCoefficients | None = field(default=None, repr=False)

    @property
    def phase(self) -> PhaseLabel:
        return PhaseLabel.SUPERFLUID if self.state.rho0 > 0 else PhaseLabel.MOTT


class _Counter:
    def __init__(self):
        self.n = 0

    def wrap(self, func):
        def counted(x):
            self.n += 1
            return func(x)
        return counted


class LevelModel:
    """Closed-form fields summed over the energy levels of a grid."""

    def __init__(self, grid: TorusGrid, T: float):
        self.grid = grid
        lv = grid.levels
        self.E = lv.energies
        self.w = lv.weights
        self.T = float(T)
        self.e_min = float(lv.energies.min())

    def moments(self, c, b):
        return kernels.bogoliubov_moments(self.E, self.w, c, b, self.T)

    def fields(self, c, b):
        return kernels.bogoliubov_fields(self.E, c, b, self.T)

    def bose(self, shift):
        return kernels.bose_moment(self.E, self.w, shift, self.T)

    def c_of_b(self, U, b, counter=None):
        """Shift c > b solving I_alpha(c, b) = (b - c)/(2U); c = 0 when b = 0."""
        if b == 0.0:
            return 0.0

        # unknown d = c - b >= 0; at d = 2U|I_alpha(b, b)| the residual is >= 0 up to roundoff
        def resid(d):
            return d / (2.0 * U) + self.moments(b + d, b)[1]

        if counter is not None:
            resid = counter.wrap(resid)
        f_lo = resid(0.0)
        if f_lo >= 0:
            return b
        hi = 2.0 * U * (-self.moments(b, b)[1])
        f_hi = resid(hi)
        while f_hi < 0:
            hi *= 2.0
            f_hi = resid(hi)
        d, _ = bisect(resid, 0.0, hi, f_lo=f_lo, f_hi=f_hi)
        return b + d

    def free_energy(self, c, b, rho0, U, mu):
        """Grand free energy of the closed-form state (c, b, rho0), summed over levels."""
        g, a = self.fields(c, b)
        w = self.w
        i_g = float(np.sum(w * g))
        i_a = float(np.sum(w * a))
        F = (float(np.sum(w * (self.E - mu) * g)) - mu * rho0
             + 0.5 * U * i_a ** 2 + U * i_g ** 2 + U * rho0 * i_a
             + 2.0 * U * rho0 * i_g + 0.5 * U * rho0 ** 2)
        if self.T > 0:
            F -= self.T * self.entropy(c, b)
        return F

    def excess(self, c, b):
        """beta^2 - 1/4 = n(x)(1 + n(x)) per level (beta = coth(x/2T)/2 on the closed form)."""
        if self.T == 0:
            return np.zeros_like(self.E)
        e = self.E + c
        x = np.sqrt((e - b) * (e + b))
        nb = bose_occupation(x / self.T)
        return nb * (1.0 + nb)

    def entropy(self, c, b):
        s, _, _ = kernels.entropy_terms(self.excess(c, b))
        return float(np.sum(self.w * s))


def critical_interaction(mu: float, T: float, grid: TorusGrid) -> float:
    """U_c = mu / (2 J(T))."""
    if not mu > 0:
        raise DomainError(f"U_c needs mu > 0, got {mu!r}")
    if not T > 0:
        raise DomainError(f"U_c needs T > 0, got {T!r}")
    return mu / (2.0 * bose_integral(T, grid))


def _mott_regime(params: ModelParams, grid: TorusGrid) -> bool:
    """True when U J(T) >= mu/2 (boundary included, up to relative roundoff)."""
    if params.mu <= 0:
        return True
    return params.U * bose_integral(params.T, grid) >= 0.5 * params.mu * (1.0 - BOUNDARY_RTOL)


def classify_phase(params: ModelParams, grid: TorusGrid) -> PhaseLabel:
    """Analytic phase label: Superfluid iff U J(T) < mu/2 (T > 0), iff mu > 0 (T = 0)."""
    if params.T == 0:
        return PhaseLabel.SUPERFLUID if params.mu > 0 else PhaseLabel.MOTT
    return PhaseLabel.MOTT if _mott_regime(params, grid) else PhaseLabel.SUPERFLUID


# ----------------------------------------------------------------- Mott branch

def _mott_shift(params: ModelParams, model: LevelModel, counter=None):
    """Shift s = 2UG - mu >= max(0, -mu) solving (s + mu)/(2U) = sum Bose((eps + s)/T)."""
    U, mu = params.U, params.mu

    def resid(s):
        return (s + mu) / (2.0 * U) - model.bose(s)

    if counter is not None:
        resid = counter.wrap(resid)
    lo = max(0.0, -mu)
    f_lo = resid(lo)
    if f_lo > 0:
        if mu > 0 and f_lo <= BOUNDARY_RTOL * mu / (2.0 * U) * 4.0:
            return lo
        raise NoSolution("Mott equation has no solution with G >= mu/(2U); parameters are superfluid")
    if f_lo == 0:
        return lo
    hi, f_hi = expand_upper(resid, lo, max(1.0, abs(mu)), 1e300)
    s, _ = bisect(resid, lo, hi, f_lo=f_lo, f_hi=f_hi)
    return s


def solve_mott_branch(params: ModelParams, grid: TorusGrid):
    """(G, gamma) with G = int gamma and gamma = 1/(exp((eps - mu + 2UG)/T) - 1)."""
    if not params.T > 0:
        raise DomainError("the Mott branch needs T > 0")
    model = LevelModel(grid, params.T)
    s = _mott_shift(params, model)
    G = (s + params.mu) / (2.0 * params.U)
    gamma = bose_occupation((model.E + s) / params.T)
    return G, ScalarField(grid, grid.expand(gamma))


# ------------------------------------------------------------ condensed branch

def _superfluid_roots(params: ModelParams, model: LevelModel, counter, ladder=48):
    """All sign changes of g(b) = 2U I_gamma(c(b), b) + b - mu on (0, mu], refined.

    g(0+) = 2U J - mu < 0 (or -mu at T = 0) and g(mu) > 0; several roots mean
    several stationary points, and the caller keeps the lowest free energy.
    """
    U, mu = params.U, params.mu

    def g(b):
        c = model.c_of_b(U, b, counter)
        return 2.0 * U * model.moments(c, b)[0] + b - mu

    g0 = (2.0 * U * model.bose(0.0) if model.T > 0 else 0.0) - mu
    tiny = mu * np.array([1e-12, 1e-9, 1e-6, 1e-4])
    bs = np.concatenate([[0.0], tiny, mu * (np.arange(1, ladder + 1) / ladder) ** 2])
    vals = [g0] + [g(b) for b in bs[1:]]
    roots = []
    for k in range(len(bs) - 1):
        lo, hi = vals[k], vals[k + 1]
        if hi == 0.0:
            # an exact zero is a root (at tiny scales the root sits within an ulp of the rung)
            if lo != 0.0:
                roots.append(bs[k + 1])
        elif lo != 0.0 and (lo > 0) != (hi > 0):
            b, _ = bisect(g, bs[k], bs[k + 1], f_lo=lo, f_hi=hi)
            roots.append(b)
    return roots


def _condensed_result(params, grid, model, c, b, rho0, branch, counter, tol):
    g, a = model.fields(c, b)
    if not np.all(np.isfinite(g)) or not np.all(np.isfinite(a)):
        raise BranchInfeasible("closed form left its domain (E^2 <= b^2)")
    state = BBHState.from_arrays(grid, grid.expand(g), grid.expand(a), rho0,
                                 grid.expand(model.excess(c, b)))
    T = params.T
    coeffs = BranchCoefficients(
        ScalarField(grid, grid.expand((model.E + c) / T if T > 0 else model.E + c)),
        b / T if T > 0 else b)
    res, drho = residuals(state, params)
    return MinimizerResult(state=state, free_energy=free_energy_grand(state, params), branch=branch,
                           el_residual=res, rho0_stationarity=drho, iterations=counter.n,
                           converged=bool(res <= tol), coefficients=coeffs)


def _solve_condensed(params: ModelParams, grid: TorusGrid, branch: Branch, tol: float):
    model = LevelModel(grid, params.T)
    counter = _Counter()
    roots = _superfluid_roots(params, model, counter)
    if not roots:
        raise NoSolution("no condensed stationary point on (0, mu]")
    best = None
    for b in roots:
        c = model.c_of_b(params.U, b, counter)
        rho0 = (b + c) / (2.0 * params.U)
        F = model.free_energy(c, b, rho0, params.U, params.mu)
        if best is None or F < best[0]:
            best = (F, c, b, rho0)
    _, c, b, rho0 = best
    return _condensed_result(params, grid, model, c, b, rho0, branch, counter, tol)


def solve_superfluid_branch(params: ModelParams, grid: TorusGrid, tol: float = DEFAULT_TOL) -> MinimizerResult:
    """Condensed stationary point for T > 0, mu > 0, U J(T) < mu/2."""
    if not params.T > 0:
        raise DomainError("the finite-temperature superfluid branch needs T > 0")
    if not params.mu > 0:
        raise DomainError("the superfluid branch needs mu > 0")
    if _mott_regime(params, grid):
        raise NoSolution("U J(T) >= mu/2: no superfluid branch from the analytic criterion")
    return _solve_condensed(params, grid, Branch.SUPERFLUID, tol)


def solve_zero_temperature(params: ModelParams, grid: TorusGrid, tol: float = DEFAULT_TOL) -> MinimizerResult:
    """T = 0: vacuum for mu <= 0, pure-state condensate (alpha^2 = gamma(1+gamma)) for mu > 0."""
    if params.T != 0:
        raise DomainError("solve_zero_temperature needs T = 0")
    if params.mu <= 0:
        state = BBHState.vacuum(grid)
        return MinimizerResult(state=state, free_energy=0.0, branch=Branch.VACUUM, el_residual=0.0,
                               rho0_stationarity=-params.mu, iterations=0, converged=True)
    return _solve_condensed(params, grid, Branch.ZERO_T_SUPERFLUID, tol)


def _mott_result(params, grid, tol):
    model = LevelModel(grid, params.T)
    counter = _Counter()
    s = _mott_shift(params, model, counter)
    gamma = grid.expand(bose_occupation((model.E + s) / params.T))
    state = BBHState.from_arrays(grid, gamma, np.zeros(grid.size), 0.0, gamma * (1.0 + gamma))
    res, drho = residuals(state, params)
    coeffs = BranchCoefficients(ScalarField(grid, grid.expand((model.E + s) / params.T)), 0.0)
    return MinimizerResult(state=state, free_energy=free_energy_grand(state, params), branch=Branch.MOTT,
                           el_residual=res, rho0_stationarity=drho, iterations=counter.n,
                           converged=bool(res <= tol), coefficients=coeffs)


def residuals(state: BBHState, params: ModelParams):
    """(Euler-Lagrange violation, dF/drho0) of a state.

    T > 0: max of |dF/dgamma|, |dF/dalpha| and the rho0 condition (equality if
    rho0 > 0, dF/drho0 >= 0 if rho0 = 0). T = 0: the gamma direction is one
    sided (gamma >= Phi(alpha)) and alpha moves along the pure-state curve.
    """
    T = params.T
    if T > 0:
        d = variational_derivatives(state, params)
        dg, da = d.d_gamma.values, d.d_alpha.values
        core = max(float(np.max(np.abs(dg))), float(np.max(np.abs(da))))
    else:
        d = variational_derivatives(state, params)
        dg, da = d.d_gamma.values, d.d_alpha.values
        a = state.alpha.values
        along = dg * a / np.sqrt(a * a + 0.25) + da
        core = max(float(np.max(np.abs(along))), float(np.max(np.maximum(-dg, 0.0))))
    drho = d.d_rho0
    rho_part = abs(drho) if state.rho0 > 0 else max(0.0, -drho)
    return max(core, rho_part), drho


def minimize(params: ModelParams, grid: TorusGrid, tol: float = DEFAULT_TOL) -> MinimizerResult:
    """Dispatch on the analytic phase criterion and solve the matching branch.

    T = 0 goes to solve_zero_temperature; T > 0 with mu <= 0 or U J(T) >= mu/2
    to the Mott branch; otherwise to the superfluid branch. Above U_c at low
    temperature the Mott state can be a local minimum only; see double_minimize.
    """
    if params.T == 0:
        return solve_zero_temperature(params, grid, tol)
    if _mott_regime(params, grid):
        return _mott_result(params, grid, tol)
    return solve_superfluid_branch(params, grid, tol)


# --------------------------------------------------------- fixed-rho0 problem

@dataclass(frozen=True)
class InnerSolution:
    rho0: float
    c: float
    b: float
    free_energy: float
    d_rho0: float


def _inner(rho0: float, params: ModelParams, model: LevelModel, counter=None) -> InnerSolution:
    """Minimiser over (gamma, alpha) at fixed rho0.

    Stationarity gives c = -mu + 2U I_gamma + 2U rho0 and b = U I_alpha + U rho0.
    At fixed c the b equation is decreasing on (0, min(U rho0, E_min + c)); the
    outer c equation runs from +inf at c -> -E_min (T > 0) down to -inf.
    """
    U, mu, T = params.U, params.mu, params.T
    if rho0 < 0:
        raise DomainError(f"rho0 must be >= 0, got {rho0!r}")
    if rho0 == 0.0 and T == 0.0:
        # no entropy and no pairing: all thermal weight sits on the lowest level
        i_g = max(mu - model.e_min, 0.0) / (2.0 * U)
        F = (model.e_min - mu) * i_g + U * i_g ** 2
        return InnerSolution(0.0, float("nan"), 0.0, F, -mu + 2.0 * U * i_g)

    def b_of_c(c):
        if rho0 == 0.0:
            return 0.0
        top = model.e_min + c

        def h(b):
            return U * model.moments(c, b)[1] + U * rho0 - b

        if counter is not None:
            h = counter.wrap(h)
        if U * rho0 < top:
            b, _ = bisect(h, 0.0, U * rho0, f_lo=U * rho0)
        else:
            b, _ = bisect(h, 0.0, top, f_lo=U * rho0, f_hi=-1.0)
        return b

    def k(c):
        b = b_of_c(c)
        return -mu + 2.0 * U * model.moments(c, b)[0] + 2.0 * U * rho0 - c

    lo = -model.e_min
    start = max(lo + 1.0, -mu + 2.0 * U * rho0)
    f_start = k(start)
    if f_start > 0:
        hi, f_hi = expand_upper(k, start, 1.0, 1e300)
        lo_, f_lo = start, f_start
    else:
        if T == 0:
            probe = lo + 1e-12 * max(1.0, abs(lo))
            if k(probe) <= 0:
                raise NonConvergence("fixed-rho0 minimiser at T = 0 is not of closed form for this rho0")
        hi, f_hi = start, f_start
        lo_, f_lo = lo, 1.0
    c, _ = bisect(k, lo_, hi, f_lo=f_lo, f_hi=f_hi)
    b = b_of_c(c)
    F = model.free_energy(c, b, rho0, U, mu)
    i_g, i_a = model.moments(c, b)
    return InnerSolution(rho0, c, b, F, -mu + U * i_a + 2.0 * U * i_g + U * rho0)


def f_of_rho0(rho0: float, params: ModelParams, grid: TorusGrid) -> float:
    """f(rho0) = min over (gamma, alpha) of the grand free energy at fixed rho0."""
    return _inner(float(rho0), params, LevelModel(grid, params.T)).free_energy


def rho0_upper_bound(params: ModelParams, grid: TorusGrid, f0: float) -> float:
    """rho0 beyond which f(rho0) > f(0) is certain.

    Uses F >= -C_T + (U/2)rho0^2 - (U/2 + mu)rho0 + (U/2)rho_g^2 - mu rho_g and
    min over rho_g of the last bracket >= -max(mu, 0)^2 / (2U).
    """
    U, mu = params.U, params.mu
    c_t = entropy_lower_bound_constant(params.T, grid) if params.T > 0 else 0.0
    K = f0 + c_t + max(mu, 0.0) ** 2 / (2.0 * U)
    a = 0.5 * U + mu
    return (a + math.sqrt(max(a * a + 2.0 * U * K, 0.0))) / U


def double_minimize(params: ModelParams, grid: TorusGrid, ladder: int = 48,
                    tol: float = DEFAULT_TOL) -> MinimizerResult:
    """Global minimum of f(rho0) by a ladder scan plus refinement of dF/drho0 = 0.

    Unlike minimize(), this does not trust the analytic dispatch and so also
    finds condensed states that undercut a metastable Mott state.
    """
    if params.T == 0:
        return minimize(params, grid, tol)
    model = LevelModel(grid, params.T)
    counter = _Counter()
    f0 = _inner(0.0, params, model, counter)
    r_max = max(rho0_upper_bound(params, grid, f0.free_energy), 1e-12)
    rs = r_max * (np.arange(ladder + 1) / ladder) ** 2
    sols = [f0] + [_inner(float(r), params, model, counter) for r in rs[1:]]
    k = int(np.argmin([s.free_energy for s in sols]))
    best = sols[k]
    if k > 0 or best.d_rho0 < 0:
        lo = sols[k - 1] if k > 0 else sols[0]
        hi = sols[k + 1] if k + 1 < len(sols) else sols[k]
        cands = []
        for left, right in ((lo, best), (best, hi)):
            if left.d_rho0 < 0 < right.d_rho0:
                r, _ = bisect(lambda x: _inner(x, params, model, counter).d_rho0,
                              left.rho0, right.rho0, f_lo=left.d_rho0, f_hi=right.d_rho0)
                cands.append(_inner(r, params, model, counter))
        if cands:
            best = min(cands + [best], key=lambda s: s.free_energy)
    if best.rho0 == 0.0:
        if not (_mott_regime(params, grid)):
            # tiny discrete artifact: the rho0 = 0 point cannot be a minimiser here
            raise NonConvergence("double minimisation ended at rho0 = 0 in the superfluid regime")
        return _mott_result(params, grid, tol)
    return _condensed_result(params, grid, model, best.c, best.b, best.rho0, Branch.SUPERFLUID, counter, tol)
