# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled level-sum kernels. Semantics match bbh._kernels_py exactly."""

import numpy as np

from libc.math cimport sqrt, expm1, log1p, log, INFINITY


def bose_moment(const double[::1] energies, const double[::1] weights,
                double shift, double T):
    cdef Py_ssize_t i, n = energies.shape[0]
    cdef double acc = 0.0
    with nogil:
        for i in range(n):
            acc += weights[i] / expm1((energies[i] + shift) / T)
    return acc


def bogoliubov_moments(const double[::1] energies, const double[::1] weights,
                       double c, double b, double T):
    cdef Py_ssize_t i, n = energies.shape[0]
    cdef double e, x, nb, g, a
    cdef double sg = 0.0, sa = 0.0
    with nogil:
        for i in range(n):
            e = energies[i] + c
            x = sqrt((e - b) * (e + b))
            if T > 0.0:
                nb = 1.0 / expm1(x / T)
            else:
                nb = 0.0
            g = b * b / (2.0 * x * (e + x)) + e * nb / x
            a = -(b / (2.0 * x)) * (1.0 + 2.0 * nb)
            sg += weights[i] * g
            sa += weights[i] * a
    return sg, sa


def bogoliubov_fields(const double[::1] energies, double c, double b, double T):
    cdef Py_ssize_t i, n = energies.shape[0]
    gamma = np.empty(n)
    alpha = np.empty(n)
    cdef double[::1] gv = gamma
    cdef double[::1] av = alpha
    cdef double e, x, nb
    with nogil:
        for i in range(n):
            e = energies[i] + c
            x = sqrt((e - b) * (e + b))
            if T > 0.0:
                nb = 1.0 / expm1(x / T)
            else:
                nb = 0.0
            gv[i] = b * b / (2.0 * x * (e + x)) + e * nb / x
            av[i] = -(b / (2.0 * x)) * (1.0 + 2.0 * nb)
    return gamma, alpha


def entropy_terms(const double[::1] excess):
    """Entropy s, log ratio L = ln((beta+1/2)/(beta-1/2)) and beta from D = beta^2 - 1/4."""
    cdef Py_ssize_t i, n = excess.shape[0]
    s = np.empty(n)
    L = np.empty(n)
    beta = np.empty(n)
    cdef double[::1] sv = s
    cdef double[::1] lv = L
    cdef double[::1] bv = beta
    cdef double D, bt, d, l1
    with nogil:
        for i in range(n):
            D = excess[i]
            if D < 0.0:
                D = 0.0
            bt = sqrt(0.25 + D)
            d = D / (bt + 0.5)
            l1 = log1p(d)
            bv[i] = bt
            if d >= 1.0:
                # (1+d)ln(1+d) - d ln d cancels for large d; this form has two positive terms
                lv[i] = log1p(1.0 / d)
                sv[i] = l1 + d * lv[i]
            elif d > 0.0:
                sv[i] = (1.0 + d) * l1 - d * log(d)
                lv[i] = l1 - log(d)
            else:
                sv[i] = 0.0
                lv[i] = INFINITY
    return s, L, beta
