"""Pure numpy versions of the level-sum kernels (fallback for the compiled core)."""

import numpy as np


def bose_moment(energies, weights, shift, T):
    # expm1 overflowing to inf gives the correct zero occupation
    with np.errstate(over="ignore"):
        return float(np.sum(weights / np.expm1((energies + shift) / T)))


def bogoliubov_fields(energies, c, b, T):
    e = energies + c
    x = np.sqrt((e - b) * (e + b))
    with np.errstate(over="ignore"):
        nb = 1.0 / np.expm1(x / T) if T > 0.0 else 0.0
    gamma = b * b / (2.0 * x * (e + x)) + e * nb / x
    alpha = -(b / (2.0 * x)) * (1.0 + 2.0 * nb)
    return gamma, alpha


def bogoliubov_moments(energies, weights, c, b, T):
    gamma, alpha = bogoliubov_fields(energies, c, b, T)
    return float(np.sum(weights * gamma)), float(np.sum(weights * alpha))


def entropy_terms(excess):
    D = np.maximum(excess, 0.0)
    beta = np.sqrt(0.25 + D)
    d = D / (beta + 0.5)
    l1 = np.log1p(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        logd = np.log(d)
        # for d >= 1 use L = log1p(1/d) and s = ln(1+d) + d L, which avoid the cancellation
        big = d >= 1.0
        L = np.where(big, np.log1p(1.0 / np.where(big, d, 1.0)), np.where(d > 0.0, l1 - logd, np.inf))
        s = np.where(big, l1 + d * L, np.where(d > 0.0, (1.0 + d) * l1 - d * logd, 0.0))
    return s, L, beta
