"""Brute-force descent minimisers used as independent checks of the closed-form solvers.

The descent runs on the full grid in coordinates (alpha, eta, rho0) with
gamma = Phi(alpha) + eta, Phi(a) = sqrt(a^2 + 1/4) - 1/2. The domain
alpha^2 <= gamma(1+gamma) becomes the box eta >= 0, rho0 >= 0, so the
projection is exact, and beta^2 - 1/4 = eta(2R + eta) with R = sqrt(a^2 + 1/4)
has no cancellation. Steps use a two-metric projection: on the free
coordinates the metric is a diagonal curvature estimate plus the rank-two
coupling through I_gamma and I_alpha (inverted by Woodbury), on coordinates
pinned at a bound it is the diagonal alone. Armijo backtracking accepts steps.

With a cap gamma <= kappa the thermal coordinate becomes v = eta / (kappa - Phi)
in [0, 1] and |alpha| <= sqrt(kappa(kappa+1)), so the capped domain is a box too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .functional import (BBHState, CanonicalParams, ModelParams, free_energy_canonical,
                         free_energy_grand, random_state)
from .grand import Branch, MinimizerResult, residuals, rho0_upper_bound
from .grid import TorusGrid

ARMIJO = 1e-4
BACKTRACK = 0.5
# at T > 0 eta may shrink by at most this factor per step (fraction to the boundary)
SHRINK = 0.1


@dataclass
class _Objective:
    grid: TorusGrid
    U: float
    mu: float
    T: float
    cap: float | None = None
    # canonical augmented-Lagrangian term lam*h + sigma/2*h^2 with h = I_gamma + rho0 - rho
    lam: float = 0.0
    sigma: float = 0.0
    rho: float = 0.0

    def __post_init__(self):
        self.E = self.grid.energies
        self.w = self.grid.weights
        self.N = self.grid.size
        self.floor = 1e-300 if self.T > 0 else 0.0
        N = self.N
        # box bounds of z = (alpha, v, rho0); v is eta without a cap and eta/(cap - Phi) with one
        self.lo = np.concatenate([np.full(N, -np.inf), np.full(N, self.floor), [0.0]])
        self.hi = np.full(2 * N + 1, np.inf)
        if self.cap is not None:
            A = np.sqrt(self.cap * (self.cap + 1.0))
            self.lo[:N] = -A
            self.hi[:N] = A
            self.hi[N:2 * N] = 1.0

    def split(self, z):
        N = self.N
        return z[:N], z[N:2 * N], z[2 * N]

    def gamma(self, a, eta):
        """gamma = Phi(alpha) + eta and R = sqrt(alpha^2 + 1/4) (uncapped coordinates)."""
        R = np.sqrt(a * a + 0.25)
        return R - 0.5 + eta, R

    def coords(self, a, v):
        """gamma, eta, R and the partial derivatives of gamma and eta in (alpha, v)."""
        R = np.sqrt(a * a + 0.25)
        phi = R - 0.5
        dphi = a / R
        if self.cap is None:
            one = np.ones_like(v)
            return phi + v, v, R, dphi, one, np.zeros_like(v), one, np.ones_like(v)
        room = np.maximum(self.cap - phi, 0.0)
        eta = v * room
        # gamma = (1 - v) Phi + v cap
        return phi + eta, eta, R, dphi * (1.0 - v), room, -v * dphi, room, 1.0 - v

    def project(self, z, bounds=None):
        """Clip onto the box, or onto the tighter ``bounds`` = (lo, hi) if given."""
        lo, hi = (self.lo, self.hi) if bounds is None else bounds
        return np.minimum(np.maximum(z, lo), hi)

    def barrier(self, z):
        """Box for the next step at T > 0 (fraction to the boundary).

        The entropy derivative is infinite on pure states, so v may shrink by at
        most a factor SHRINK per step, and under a cap so may the room kappa - Phi(alpha).
        """
        N = self.N
        lo, hi = self.lo.copy(), self.hi.copy()
        lo[N:2 * N] = np.maximum(SHRINK * z[N:2 * N], self.floor)
        if self.cap is not None:
            a = z[:N]
            room = self.cap - (np.sqrt(a * a + 0.25) - 0.5)
            top = self.cap + 0.5 - SHRINK * room
            amax = np.sqrt(np.maximum(top * top - 0.25, 0.0))
            lo[:N] = np.maximum(lo[:N], -amax)
            hi[:N] = np.minimum(hi[:N], amax)
        return lo, hi

    def value(self, z, grad=True):
        a, v, r0 = self.split(z)
        w, E, U, T = self.w, self.E, self.U, self.T
        g, eta, R, dg_da, dg_dv, de_da, de_dv, curv = self.coords(a, v)
        i_g = float(np.sum(w * g))
        i_a = float(np.sum(w * a))
        h = i_g + r0 - self.rho
        mu = self.mu - self.lam - self.sigma * h if self.sigma else self.mu
        val = (float(np.sum(w * (E - self.mu) * g)) - self.mu * r0
               + 0.5 * U * i_a ** 2 + U * i_g ** 2 + U * r0 * i_a
               + 2.0 * U * r0 * i_g + 0.5 * U * r0 ** 2)
        if self.sigma:
            val += self.lam * h + 0.5 * self.sigma * h * h
        D = eta * (2.0 * R + eta)
        if T > 0:
            s, L, beta = kernels.entropy_terms(D)
            val -= T * float(np.sum(w * s))
        if not grad:
            return val
        dg = E - mu + 2.0 * U * i_g + 2.0 * U * r0
        da = U * i_a + U * r0
        # Phi'' = 1/(4 R^3), scaled by (1 - v) under a cap
        h_a = np.abs(dg) * curv * 0.25 / R ** 3
        h_v = np.zeros(self.N)
        ga_loc = 0.0
        gv_loc = 0.0
        if T > 0:
            ds = L / (2.0 * beta)
            dD_da = de_da * (2.0 * R + 2.0 * eta) + 2.0 * eta * a / R
            dD_dv = de_dv * (2.0 * R + 2.0 * eta)
            ga_loc = -T * ds * dD_da
            gv_loc = -T * ds * dD_dv
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                s2 = 1.0 / (4.0 * beta ** 2 * D) + L / (4.0 * beta ** 3)
                s2 = np.where(np.isfinite(s2), s2, 1e300)
                h_v = np.minimum(T * s2 * dD_dv ** 2, 1e300)
                h_a = h_a + np.minimum(T * s2 * dD_da ** 2, 1e300)
                # D = gamma(gamma + 1) - alpha^2 also bends in alpha, which matters on the cap
                D_aa = (2.0 * g + 1.0) * curv * 0.25 / R ** 3 + 2.0 * dg_da ** 2 - 2.0
                h_a = h_a + np.minimum(T * np.abs(ds * D_aa), 1e300)
        # d/dgamma at fixed alpha without entropy; used to pick the corner representative (T = 0)
        self.dg = dg
        g_a = w * (dg * dg_da + da + ga_loc)
        g_v = w * (dg * dg_dv + gv_loc)
        g_r = -mu + U * i_a + 2.0 * U * i_g + U * r0
        G = np.concatenate([g_a, g_v, [g_r]])
        H = np.concatenate([w * (h_a + 1e-12), w * (h_v + 1e-12), [U + self.sigma]])
        # collective curvature (2U + sigma) dI_g dI_g^T + U dI_a dI_a^T as K^T K
        K = np.zeros((2, 2 * self.N + 1))
        K[0, :self.N] = w * dg_da
        K[0, self.N:2 * self.N] = w * dg_dv
        K[0] *= np.sqrt(2.0 * U + self.sigma)
        K[1, :self.N] = np.sqrt(U) * w
        return val, G, (H, K)

    def kkt(self, z, G):
        """Projected-gradient norm with the gradient taken per unit quadrature weight."""
        N = self.N
        scale = np.concatenate([self.w, self.w, [1.0]])
        return float(np.max(np.abs(self.project(z - G / scale) - z)))

    def corners(self, z):
        """Re-represent capped points at |alpha| = sqrt(kappa(kappa+1)), where v has no effect.

        There gamma = kappa whatever v is, so the choice only matters for the next
        step: v = 0 follows the pure-state curve down (taken when dF/dgamma > 0),
        v = 1 stays on the cap. Returns True if z changed.
        """
        if self.cap is None or self.T > 0:
            return False
        N = self.N
        a, v = z[:N], z[N:2 * N]
        at = np.abs(a) >= self.hi[:N]
        want = np.where(self.dg > 0, 0.0, 1.0)
        change = at & (v != want)
        v[change] = want[change]
        return bool(np.any(change))

    def to_state(self, z) -> BBHState:
        a, v, r0 = self.split(z)
        g, eta, R = self.coords(a, v)[:3]
        D = eta * (2.0 * R + eta)
        return BBHState.from_arrays(self.grid, g, a.copy(), float(r0), D)

    def from_state(self, state: BBHState):
        a = state.alpha.values
        if self.cap is not None:
            # start strictly inside: Phi(alpha) <= kappa / 2 keeps the entropy slope finite
            top = 0.5 * self.cap + 0.5
            a = np.clip(a, -np.sqrt(top * top - 0.25), np.sqrt(top * top - 0.25))
        phi = np.sqrt(a * a + 0.25) - 0.5
        eta = np.maximum(state.gamma.values - phi, 0.0)
        if self.cap is None:
            v = eta
        else:
            room = np.maximum(self.cap - phi, 0.0)
            v = np.divide(eta, room, out=np.zeros_like(eta), where=room > 0)
        return self.project(np.concatenate([a, v, [state.rho0]]))


def _scaled(G, metric, free):
    """(H + K^T K)^-1 G on the free coordinates, H^-1 G elsewhere."""
    H, K = metric
    p = G / H
    Kf = K[:, free]
    Hf = H[free]
    M = np.eye(K.shape[0]) + (Kf / Hf) @ Kf.T
    p[free] -= (Kf.T @ np.linalg.solve(M, Kf @ p[free])) / Hf
    return p


def _descend(obj: _Objective, z, tol, maxiter, fix_rho0=False):
    z = obj.project(z)
    val, G, metric = obj.value(z)
    if obj.corners(z):
        val, G, metric = obj.value(z)
    if fix_rho0:
        G[-1] = 0.0
    step = 1.0
    pgn = np.inf
    N = obj.N
    for it in range(1, maxiter + 1):
        # the entropy acts like a barrier: stop eta from collapsing onto the floor,
        # where the function value no longer resolves progress
        bounds = obj.barrier(z) if obj.T > 0 else None
        # coordinates sitting on a bound and pushed against it keep the diagonal metric
        eps = min(1e-8, pgn)
        free = ~(((z <= obj.lo + eps) & (G > 0)) | ((z >= obj.hi - eps) & (G < 0)))
        d = obj.project(z - step * _scaled(G, metric, free), bounds) - z
        slope = float(G @ d)
        if not slope < 0:
            d = obj.project(z - step * G / metric[0], bounds) - z
            slope = float(G @ d)
        noise = 8.0 * 2.220446049250313e-16 * (1.0 + abs(val))
        t = 1.0
        while True:
            zn = obj.project(z + t * d, bounds)
            vn = obj.value(zn, grad=False)
            if vn <= val + ARMIJO * t * slope + noise or t < 1e-20:
                break
            t *= BACKTRACK
        z = zn
        val, G, metric = obj.value(z)
        if obj.corners(z):
            val, G, metric = obj.value(z)
        if fix_rho0:
            G[-1] = 0.0
        pgn = obj.kkt(z, G)
        if pgn < tol:
            return z, val, it, pgn, True
        step = min(1.0, 2.0 * step) if t == 1.0 else step * t
    return z, val, maxiter, pgn, False


def _label(state: BBHState, T: float) -> Branch:
    if state.rho0 > 0:
        return Branch.ZERO_T_SUPERFLUID if T == 0 else Branch.SUPERFLUID
    if T == 0 and not np.any(state.gamma.values):
        return Branch.VACUUM
    return Branch.MOTT


def brute_force_minimize(params: ModelParams, grid: TorusGrid, cap: float | None = None,
                         initial: BBHState | None = None, seed: int = 0,
                         tol: float = 1e-7, maxiter: int = 20000,
                         profile: int = 24) -> MinimizerResult:
    """Global minimum of the grand functional by projected descent (n <= 12 intended).

    The functional is convex in (gamma, alpha) at fixed rho0, so the search
    descends at each rho0 of a ladder on [0, r_max] (r_max from a lower bound on
    F), polishes the best rung with rho0 free, and compares with a free descent
    from ``initial`` or a random feasible state drawn with ``seed``.
    ``profile=0`` keeps only the free descent. ``converged`` is False when the
    chosen descent hit the iteration cap; the result is then the best state reached.
    """
    obj = _Objective(grid, params.U, params.mu, params.T, cap)
    if initial is None:
        initial = random_state(grid, np.random.default_rng(seed))
    runs = [_descend(obj, obj.from_state(initial), tol, maxiter)]
    if profile > 0:
        z = obj.from_state(initial)
        z[-1] = 0.0
        rungs = [_descend(obj, z, tol, maxiter, fix_rho0=True)]
        r_max = rho0_upper_bound(params, grid, rungs[0][1]) if params.U > 0 else 0.0
        for r in r_max * (np.arange(1, profile + 1) / profile) ** 2:
            z = rungs[-1][0].copy()
            z[-1] = r
            rungs.append(_descend(obj, z, tol, maxiter, fix_rho0=True))
        best = min(rungs, key=lambda run: run[1])
        runs.append(_descend(obj, best[0], tol, maxiter))
    z, val, it, pgn, ok = min(runs, key=lambda run: run[1])
    state = obj.to_state(z)
    try:
        res, drho = residuals(state, params)
    except ValueError:
        res, drho = float("inf"), float("nan")
    return MinimizerResult(state=state, free_energy=free_energy_grand(state, params),
                           branch=_label(state, params.T), el_residual=res, rho0_stationarity=drho,
                           iterations=it, converged=ok)


@dataclass(frozen=True)
class CanonicalOracleResult:
    state: BBHState
    free_energy: float
    constraint_residual: float
    iterations: int
    converged: bool


def _augmented(obj: _Objective, z, tol, maxiter, outer, fix_rho0=False):
    """Multiplier loop lam <- lam + sigma h on h = I_gamma + rho0 - rho.

    sigma grows tenfold whenever |h| fails to drop by a factor 4, and the loop
    stops once |h| < tol / 10 with the inner descent converged.
    """
    obj.lam = 0.0
    obj.sigma = 10.0 * obj.U
    total = 0
    prev = np.inf
    val = np.nan
    for _ in range(outer):
        z, val, it, _, inner_ok = _descend(obj, z, tol, maxiter, fix_rho0)
        total += it
        a, eta, r0 = obj.split(z)
        g, _ = obj.gamma(a, eta)
        h = float(np.sum(obj.w * g)) + r0 - obj.rho
        if abs(h) < 0.1 * tol and inner_ok:
            return z, val, total, True
        obj.lam += obj.sigma * h
        if abs(h) > 0.25 * prev:
            obj.sigma = min(10.0 * obj.sigma, 1e10 * obj.U)
        prev = abs(h)
    return z, val, total, False


def brute_force_canonical(params: CanonicalParams, grid: TorusGrid, initial: BBHState | None = None,
                          seed: int = 0, tol: float = 1e-7, maxiter: int = 20000,
                          outer: int = 60, profile: int = 16) -> CanonicalOracleResult:
    """Global descent on the density-constrained problem by an augmented Lagrangian.

    The constraint I_gamma + rho0 = rho is enforced by the multiplier update
    lam <- lam + sigma h, each inner problem being the grand descent with
    mu = 0 plus lam h + sigma h^2 / 2. The reduced functional is not convex,
    but it is at fixed rho0, so rho0 = rho - lambda is held on a ladder of
    lambda in (0, rho], the best rung is polished with rho0 free and compared
    with a free run from ``initial`` (or a random state drawn with ``seed``).
    The final state is put exactly on the constraint by setting
    rho0 = rho - I_gamma (or, if I_gamma > rho, scaling the thermal part down
    onto the surface with rho0 = 0).
    """
    U, T, rho = params.U, params.T, params.rho
    obj = _Objective(grid, U, 0.0, T, None, 0.0, 10.0 * U, rho)
    if initial is None:
        initial = random_state(grid, np.random.default_rng(seed))
    z0 = obj.from_state(initial)
    runs = [_augmented(obj, z0, tol, maxiter, outer)]
    if profile > 0 and rho > 0:
        rungs = []
        z = z0
        for lam in rho * np.arange(profile, 0, -1) / profile:
            z = z.copy()
            z[-1] = rho - lam
            z, val, it, _ = _augmented(obj, z, tol, maxiter, outer, fix_rho0=True)
            rungs.append((z, val, it))
        best = min(rungs, key=lambda run: run[1])
        runs.append(_augmented(obj, best[0], tol, maxiter, outer))
    z, _, total, ok = min(runs, key=lambda run: run[1])
    state = _onto_constraint(obj, z, rho)
    F = free_energy_canonical(state.gamma, state.alpha, params, state.excess)
    c_res = abs(float(np.sum(grid.weights * state.gamma.values)) + state.rho0 - rho)
    return CanonicalOracleResult(state, F, c_res, total, ok)


def _onto_constraint(obj: _Objective, z, rho) -> BBHState:
    a, eta, _ = obj.split(z)
    g, R = obj.gamma(a, eta)
    i_g = float(np.sum(obj.w * g))
    if i_g <= rho:
        return BBHState.from_arrays(obj.grid, g, a.copy(), rho - i_g, eta * (2.0 * R + eta))
    # shrink (alpha, eta) radially until I_gamma = rho; gamma is increasing along the ray
    lo, hi = 0.0, 1.0
    for _ in range(200):
        t = 0.5 * (lo + hi)
        gt, _ = obj.gamma(t * a, t * eta)
        if float(np.sum(obj.w * gt)) > rho:
            hi = t
        else:
            lo = t
    gt, Rt = obj.gamma(lo * a, lo * eta)
    et = lo * eta
    return BBHState.from_arrays(obj.grid, gt, lo * a, max(rho - float(np.sum(obj.w * gt)), 0.0),
                                et * (2.0 * Rt + et))
