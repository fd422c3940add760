"""Momentum torus discretisation, lattice dispersion and the Bose integral J(T)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from . import kernels
from .errors import BracketError, DomainError
from .roots import bisect, expand_upper


def bose_occupation(x):
    """1/(e^x - 1) elementwise; overflow of e^x gives the exact limit 0."""
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(x)


def dispersion(p):
    """Lattice kinetic energy 4 * sum_k sin^2(p_k / 2) of a momentum triple (or array of triples)."""
    p = np.asarray(p, dtype=float)
    return 4.0 * np.sum(np.sin(0.5 * p) ** 2, axis=-1)


def axis_momenta(n: int) -> np.ndarray:
    """Sorted per-axis momenta: the odd multiples of pi/n folded into [-pi, pi).

    The set is mirror symmetric bit for bit and never contains 0. For even n
    it coincides with the half-step shifted midpoints -pi + (j + 1/2) 2pi/n.
    """
    k = np.arange(1, n + 1, 2)
    positive = k[k < n] * np.pi / n
    parts = [-positive[::-1], positive]
    if n % 2 == 1:
        parts.insert(0, np.array([-np.pi]))
    return np.concatenate(parts)


@dataclass(frozen=True)
class EnergyLevels:
    """Distinct dispersion values of a grid with their total quadrature weights.

    ``TorusGrid.level_index`` maps grid points back to levels.
    """

    energies: np.ndarray
    weights: np.ndarray
    counts: np.ndarray


@dataclass(frozen=True, eq=False)
class TorusGrid:
    """Tensor grid on the 3-torus with equal weights 1/n^3."""

    n_per_axis: int

    def __post_init__(self):
        if int(self.n_per_axis) != self.n_per_axis or self.n_per_axis < 2:
            raise DomainError(f"grid needs n >= 2, got {self.n_per_axis!r}")

    def __eq__(self, other):
        return isinstance(other, TorusGrid) and other.n_per_axis == self.n_per_axis

    def __hash__(self):
        return hash(("TorusGrid", self.n_per_axis))

    @property
    def size(self) -> int:
        return self.n_per_axis ** 3

    @cached_property
    def axis(self) -> np.ndarray:
        return axis_momenta(self.n_per_axis)

    @cached_property
    def _axis_levels(self):
        e1 = 4.0 * np.sin(0.5 * self.axis) ** 2
        values, inverse, counts = np.unique(e1, return_inverse=True, return_counts=True)
        return values, inverse, counts

    @cached_property
    def points(self) -> np.ndarray:
        a = self.axis
        p1, p2, p3 = np.meshgrid(a, a, a, indexing="ij")
        return np.stack([p1.ravel(), p2.ravel(), p3.ravel()], axis=1)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.size, 1.0 / self.size)
        w.flags.writeable = False
        return w

    @cached_property
    def levels(self) -> EnergyLevels:
        values, _, counts = self._axis_levels
        m = values.size
        # all triples a <= b <= c over the distinct per-axis values
        a_idx, b_idx, c_idx = [], [], []
        for a in range(m):
            for b in range(a, m):
                c = np.arange(b, m)
                a_idx.append(np.full(c.size, a))
                b_idx.append(np.full(c.size, b))
                c_idx.append(c)
        a_idx = np.concatenate(a_idx)
        b_idx = np.concatenate(b_idx)
        c_idx = np.concatenate(c_idx)
        energies = values[a_idx] + values[b_idx] + values[c_idx]
        perms = np.where((a_idx == b_idx) & (b_idx == c_idx), 1,
                         np.where((a_idx == b_idx) | (b_idx == c_idx), 3, 6))
        mult = perms * counts[a_idx] * counts[b_idx] * counts[c_idx]
        w = mult / float(self.size)
        for arr in (energies, w, mult):
            arr.flags.writeable = False
        return EnergyLevels(energies=energies, weights=w, counts=mult)

    @cached_property
    def level_index(self) -> np.ndarray:
        """Level of every grid point, in lexicographic (j1, j2, j3) order."""
        values, inverse, _ = self._axis_levels
        m = values.size
        lookup = np.empty((m, m, m), dtype=np.int64)
        pos = 0
        for a in range(m):
            for b in range(a, m):
                c = np.arange(b, m)
                lookup[a, b, c] = pos + np.arange(c.size)
                pos += c.size
        n = self.n_per_axis
        j1, j2, j3 = np.meshgrid(inverse, inverse, inverse, indexing="ij")
        trip = np.sort(np.stack([j1.ravel(), j2.ravel(), j3.ravel()], axis=1), axis=1)
        idx = lookup[trip[:, 0], trip[:, 1], trip[:, 2]]
        assert idx.size == n ** 3
        idx.flags.writeable = False
        return idx

    @cached_property
    def energies(self) -> np.ndarray:
        """Dispersion at every grid point, consistent bit for bit with the level values."""
        e = self.levels.energies[self.level_index]
        e.flags.writeable = False
        return e

    @property
    def min_energy(self) -> float:
        return float(self.levels.energies.min())

    def expand(self, level_values) -> np.ndarray:
        """Full-grid array from per-level values."""
        return np.asarray(level_values, dtype=float)[self.level_index]

    def negate_index(self) -> np.ndarray:
        """Permutation taking point p to the point -p."""
        n = self.n_per_axis
        a = self.axis
        # position of -a[j] along the axis; -pi maps to itself for odd n
        neg = np.searchsorted(a, -a)
        if n % 2 == 1:
            neg[0] = 0
        j1, j2, j3 = np.meshgrid(neg, neg, neg, indexing="ij")
        return (j1 * n * n + j2 * n + j3).ravel()


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values sampled on every point of a TorusGrid."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise DomainError(f"field needs {self.grid.size} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: TorusGrid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.size, float(value)))

    def integrate(self) -> float:
        return integrate(self)


@lru_cache(maxsize=16)
def make_grid(n: int) -> TorusGrid:
    """Cached grid with n points per axis (n >= 2)."""
    return TorusGrid(n)


def integrate(field) -> float:
    """Quadrature sum_i w_i f_i of a ScalarField."""
    return float(np.sum(field.values * field.grid.weights))


def bose_integral(T: float, grid: TorusGrid) -> float:
    """Quadrature value of J(T) = int (exp(eps/T) - 1)^-1 dp."""
    if not T > 0:
        raise DomainError(f"J(T) needs T > 0, got {T!r}")
    lv = grid.levels
    return kernels.bose_moment(lv.energies, lv.weights, 0.0, T)


def invert_bose_integral(target: float, grid: TorusGrid, tol: float = 1e-10,
                         t_max: float = 1e8) -> float:
    """Temperature T with J(T) = target, by geometric bracket expansion and bisection."""
    if not target > 0:
        raise DomainError(f"J^-1 needs a positive target, got {target!r}")

    def resid(T):
        return -target if T <= 0.0 else bose_integral(T, grid) - target

    try:
        hi, f_hi = expand_upper(resid, 0.0, 1.0, t_max)
    except BracketError as exc:
        raise BracketError(f"J(T) stays below {target!r} up to T={t_max!r}") from exc
    T, _ = bisect(resid, 0.0, hi, f_lo=-target, f_hi=f_hi, xtol=tol)
    return T
