"""States, the grand and canonical free-energy functionals, entropy and derivatives."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from . import kernels
from .errors import DomainError, SingularDerivative
from .grid import ScalarField, TorusGrid, integrate, make_grid

FEAS_TOL = 1e-12
BOUNDARY_FLOOR = 0.0


def _finite(name, value):
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ModelParams:
    """Grand-canonical parameters (hopping rescaled to 1)."""

    U: float
    mu: float
    T: float

    def __post_init__(self):
        for name in ("U", "mu", "T"):
            _finite(name, getattr(self, name))
        if not self.U > 0:
            raise DomainError(f"U must be > 0, got {self.U!r}")
        if self.T < 0:
            raise DomainError(f"T must be >= 0, got {self.T!r}")


@dataclass(frozen=True)
class CanonicalParams:
    """Canonical parameters at fixed total density rho."""

    U: float
    T: float
    rho: float

    def __post_init__(self):
        for name in ("U", "T", "rho"):
            _finite(name, getattr(self, name))
        if not self.U > 0:
            raise DomainError(f"U must be > 0, got {self.U!r}")
        if self.T < 0:
            raise DomainError(f"T must be >= 0, got {self.T!r}")
        if self.rho < 0:
            raise DomainError(f"rho must be >= 0, got {self.rho!r}")


def _excess(gamma, alpha):
    """D = gamma(1+gamma) - alpha^2 = beta^2 - 1/4, checked against the domain."""
    gamma = np.asarray(gamma, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    scale = 1.0 + gamma * (1.0 + gamma)
    if np.any(gamma < -FEAS_TOL):
        raise DomainError("gamma must be nonnegative")
    D = gamma * (1.0 + gamma) - alpha * alpha
    if np.any(D < -FEAS_TOL * scale):
        raise DomainError("alpha^2 <= gamma(1+gamma) violated")
    return np.maximum(D, 0.0)


def beta_of(gamma_value, alpha_value):
    """beta = sqrt((1/2 + gamma)^2 - alpha^2), in [1/2, gamma + 1/2]."""
    D = _excess(gamma_value, alpha_value)
    beta = np.sqrt(0.25 + D)
    return float(beta) if beta.ndim == 0 else beta


def entropy_density(gamma_value, alpha_value):
    """(beta+1/2)ln(beta+1/2) - (beta-1/2)ln(beta-1/2), zero on the pure-state boundary."""
    D = _excess(gamma_value, alpha_value)
    s, _, _ = kernels.entropy_terms(np.atleast_1d(D))
    return float(s[0]) if D.ndim == 0 else s.reshape(D.shape)


@dataclass(frozen=True, eq=False)
class BBHState:
    """(gamma, alpha, rho0) on a grid, inside the domain alpha^2 <= gamma(1+gamma).

    ``excess`` optionally carries D = beta^2 - 1/4 computed without
    cancellation. Near the pure-state boundary D is far below the rounding
    error of gamma(1+gamma) - alpha^2, and the entropy derivative depends on
    it through ln D; solvers that know D in closed form pass it along.
    """

    gamma: ScalarField
    alpha: ScalarField
    rho0: float
    excess: np.ndarray | None = None

    def __post_init__(self):
        if self.gamma.grid != self.alpha.grid:
            raise DomainError("gamma and alpha live on different grids")
        _finite("rho0", self.rho0)
        if self.rho0 < 0:
            raise DomainError(f"rho0 must be >= 0, got {self.rho0!r}")
        D = _excess(self.gamma.values, self.alpha.values)
        object.__setattr__(self, "rho0", float(self.rho0))
        if self.excess is not None:
            ex = np.array(self.excess, dtype=float)
            g = self.gamma.values
            if ex.shape != D.shape or np.any(ex < 0) or not np.all(np.isfinite(ex)):
                raise DomainError("excess must be a nonnegative finite field")
            slack = 1e-12 * (1.0 + g * (1.0 + g))
            if np.any(np.abs(ex - D) > slack):
                raise DomainError("excess disagrees with gamma(1+gamma) - alpha^2")
            ex.flags.writeable = False
            object.__setattr__(self, "excess", ex)

    @property
    def grid(self) -> TorusGrid:
        return self.gamma.grid

    @property
    def beta_excess(self) -> np.ndarray:
        """D = beta^2 - 1/4 at every grid point (carried value when available)."""
        if self.excess is not None:
            return self.excess
        return _excess(self.gamma.values, self.alpha.values)

    @classmethod
    def from_arrays(cls, grid, gamma, alpha, rho0, excess=None) -> "BBHState":
        return cls(ScalarField(grid, gamma), ScalarField(grid, alpha), rho0, excess)

    @classmethod
    def vacuum(cls, grid) -> "BBHState":
        zero = np.zeros(grid.size)
        return cls.from_arrays(grid, zero, zero, 0.0)


@dataclass(frozen=True)
class DerivativeBundle:
    d_gamma: ScalarField
    d_alpha: ScalarField
    d_rho0: float


@dataclass(frozen=True)
class StateSummary:
    rho_gamma: float
    int_alpha: float
    rho_total: float
    free_energy: float


def _entropy_integral(grid, gamma, alpha, excess=None):
    D = _excess(gamma, alpha) if excess is None else excess
    s, _, _ = kernels.entropy_terms(D)
    return float(np.sum(s * grid.weights))


def grand_terms(grid, gamma, alpha, rho0, params: ModelParams, excess=None):
    """Free energy of raw arrays."""
    w = grid.weights
    i_g = float(np.sum(w * gamma))
    i_a = float(np.sum(w * alpha))
    kin = float(np.sum(w * grid.energies * gamma))
    U, mu, T = params.U, params.mu, params.T
    F = (kin - mu * i_g - mu * rho0
         + 0.5 * U * i_a ** 2 + U * i_g ** 2 + U * rho0 * i_a
         + 2.0 * U * rho0 * i_g + 0.5 * U * rho0 ** 2)
    if T > 0:
        F -= T * _entropy_integral(grid, gamma, alpha, excess)
    return F


def free_energy_grand(state: BBHState, params: ModelParams) -> float:
    """Grand free energy of a state: kinetic - mu N - T S + interaction terms."""
    return grand_terms(state.grid, state.gamma.values, state.alpha.values, state.rho0, params,
                       state.excess)


def canonical_rho0(gamma: ScalarField, rho: float) -> float:
    """rho - int gamma, rejecting states whose thermal density exceeds rho."""
    i_g = integrate(gamma)
    rho0 = rho - i_g
    if rho0 < -FEAS_TOL * max(1.0, rho):
        raise DomainError(f"int gamma = {i_g!r} exceeds rho = {rho!r}")
    return max(rho0, 0.0)


def free_energy_canonical(gamma: ScalarField, alpha: ScalarField, params: CanonicalParams,
                          excess=None) -> float:
    """Canonical free energy with rho0 = rho - int gamma substituted."""
    grid = gamma.grid
    rho0 = canonical_rho0(gamma, params.rho)
    w = grid.weights
    g, a = gamma.values, alpha.values
    i_g = float(np.sum(w * g))
    i_a = float(np.sum(w * a))
    U, T, rho = params.U, params.T, params.rho
    F = (float(np.sum(w * grid.energies * g))
         + 0.5 * U * rho ** 2 + 0.5 * U * (i_a ** 2 + i_g ** 2) + U * rho0 * (i_a + i_g))
    if T > 0:
        F -= T * _entropy_integral(grid, g, a, excess)
    return F


def _entropy_factor(gamma, alpha, excess=None):
    """L / beta with L = ln((beta+1/2)/(beta-1/2)), raising on the pure-state boundary."""
    D = _excess(gamma, alpha) if excess is None else excess
    s, L, beta = kernels.entropy_terms(D)
    bad = ~np.isfinite(L) | (D <= BOUNDARY_FLOOR)
    if np.any(bad):
        raise SingularDerivative(
            f"entropy derivative singular at {int(bad.sum())} grid points (beta <= 1/2 + floor)", mask=bad)
    return L / beta


def variational_derivatives(state: BBHState, params: ModelParams) -> DerivativeBundle:
    """Functional derivatives of the grand free energy per unit quadrature weight."""
    grid = state.grid
    g, a = state.gamma.values, state.alpha.values
    U, mu, T = params.U, params.mu, params.T
    i_g = integrate(state.gamma)
    i_a = integrate(state.alpha)
    r0 = state.rho0
    dg = grid.energies - mu + 2.0 * U * i_g + 2.0 * U * r0
    da = np.full(grid.size, U * i_a + U * r0)
    if T > 0:
        k = _entropy_factor(g, a, state.excess)
        dg = dg - T * (g + 0.5) * k
        da = da + T * a * k
    dr = -mu + U * i_a + 2.0 * U * i_g + U * r0
    return DerivativeBundle(ScalarField(grid, dg), ScalarField(grid, da), float(dr))


def canonical_derivatives(gamma: ScalarField, alpha: ScalarField, params: CanonicalParams,
                          excess=None):
    """(d/dgamma, d/dalpha) of the reduced canonical functional (rho0 = rho - int gamma)."""
    grid = gamma.grid
    g, a = gamma.values, alpha.values
    U, T, rho = params.U, params.T, params.rho
    i_g = integrate(gamma)
    i_a = integrate(alpha)
    dg = grid.energies - U * i_g + U * rho - U * i_a
    da = np.full(grid.size, U * i_a + U * rho - U * i_g)
    if T > 0:
        k = _entropy_factor(g, a, excess)
        dg = dg - T * (g + 0.5) * k
        da = da + T * a * k
    return ScalarField(grid, dg), ScalarField(grid, da)


def project_to_domain(raw_gamma: ScalarField, raw_alpha: ScalarField, raw_rho0: float) -> BBHState:
    """Pointwise clamp into the domain: gamma >= 0, |alpha| <= sqrt(gamma(1+gamma)), rho0 >= 0."""
    g = np.maximum(raw_gamma.values, 0.0)
    bound = np.sqrt(g * (1.0 + g))
    a = np.clip(raw_alpha.values, -bound, bound)
    return BBHState.from_arrays(raw_gamma.grid, g, a, max(float(raw_rho0), 0.0))


def entropy_lower_bound_constant(T: float, grid: TorusGrid) -> float:
    """C_T = -T int ln(1 - exp(-eps/T)); kinetic + (-T S) >= -C_T on the whole domain."""
    if not T > 0:
        raise DomainError(f"C_T needs T > 0, got {T!r}")
    lv = grid.levels
    return float(-T * np.sum(lv.weights * np.log(-np.expm1(-lv.energies / T))))


def kinetic_minus_entropy(state: BBHState, T: float) -> float:
    """int eps gamma - T S of a state."""
    grid = state.grid
    kin = float(np.sum(grid.weights * grid.energies * state.gamma.values))
    if T > 0:
        kin -= T * _entropy_integral(grid, state.gamma.values, state.alpha.values, state.excess)
    return kin


def summarize(state: BBHState, params: ModelParams) -> StateSummary:
    i_g = integrate(state.gamma)
    return StateSummary(rho_gamma=i_g, int_alpha=integrate(state.alpha),
                        rho_total=i_g + state.rho0, free_energy=free_energy_grand(state, params))


def random_state(grid: TorusGrid, rng: np.random.Generator) -> BBHState:
    """gamma ~ Exp(1), alpha = u sqrt(gamma(1+gamma)) with u ~ U[-1,1], rho0 ~ U[0,2]."""
    g = rng.exponential(1.0, grid.size)
    u = rng.uniform(-1.0, 1.0, grid.size)
    a = u * np.sqrt(g * (1.0 + g))
    return BBHState.from_arrays(grid, g, a, rng.uniform(0.0, 2.0))


# serialization

Params = Union[ModelParams, CanonicalParams]


def state_to_dict(state: BBHState, params: Params | None = None) -> dict:
    doc = {
        "format": "bbh-state",
        "version": 1,
        "n_per_axis": state.grid.n_per_axis,
        "order": "lexicographic (j1, j2, j3), p_j = odd multiples of pi/n folded into [-pi, pi)",
        "rho0": state.rho0,
        "gamma": state.gamma.values.tolist(),
        "alpha": state.alpha.values.tolist(),
    }
    if state.excess is not None:
        doc["beta_excess"] = state.excess.tolist()
    if isinstance(params, ModelParams):
        doc["params"] = {"ensemble": "grand", "U": params.U, "mu": params.mu, "T": params.T}
    elif isinstance(params, CanonicalParams):
        doc["params"] = {"ensemble": "canonical", "U": params.U, "T": params.T, "rho": params.rho}
    return doc


def state_from_dict(doc: dict):
    """Inverse of state_to_dict; returns (state, params or None)."""
    if doc.get("format") != "bbh-state":
        raise DomainError("not a bbh-state document")
    grid = make_grid(int(doc["n_per_axis"]))
    ex = doc.get("beta_excess")
    state = BBHState.from_arrays(grid, np.array(doc["gamma"], dtype=float),
                                 np.array(doc["alpha"], dtype=float), float(doc["rho0"]),
                                 None if ex is None else np.array(ex, dtype=float))
    p = doc.get("params")
    params = None
    if p is not None:
        if p["ensemble"] == "grand":
            params = ModelParams(U=p["U"], mu=p["mu"], T=p["T"])
        else:
            params = CanonicalParams(U=p["U"], T=p["T"], rho=p["rho"])
    return state, params


def save_state(path, state: BBHState, params: Params | None = None) -> None:
    Path(path).write_text(json.dumps(state_to_dict(state, params)) + "\n")


def load_state(path):
    return state_from_dict(json.loads(Path(path).read_text()))
