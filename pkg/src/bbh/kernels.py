"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``BBH_PURE_PYTHON=1``
to force the numpy fallback. The compiled loops call scalar libm, while numpy
evaluates exp/log with SIMD, so above a per-kernel length the numpy version is
faster and is used instead (crossovers measured by benchmarks/bench_kernels.py).
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("BBH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


# array lengths from which numpy beats the compiled loop
CROSSOVER = {"bose_moment": 400, "bogoliubov": 1500, "entropy_terms": 2000}


def _pick(name, n):
    return _impl if n < CROSSOVER[name] else _kernels_py


def _c(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def bose_moment(energies, weights, shift, T):
    """sum_i w_i / (exp((E_i + shift)/T) - 1)."""
    return float(_pick("bose_moment", len(energies)).bose_moment(_c(energies), _c(weights), float(shift), float(T)))


def bogoliubov_moments(energies, weights, c, b, T):
    """(int gamma, int alpha) of the Bogoliubov closed form at shift c, pairing b."""
    g, a = _pick("bogoliubov", len(energies)).bogoliubov_moments(_c(energies), _c(weights), float(c), float(b), float(T))
    return float(g), float(a)


def bogoliubov_fields(energies, c, b, T):
    return _pick("bogoliubov", len(energies)).bogoliubov_fields(_c(energies), float(c), float(b), float(T))


def entropy_terms(excess):
    """(s, L, beta) from the excess D = gamma(1+gamma) - alpha^2."""
    return _pick("entropy_terms", len(excess)).entropy_terms(_c(excess))
