"""Bracketed scalar root finding for the monotone equations of the solvers."""

import math

from scipy.optimize import brentq

from .errors import BracketError

_RTOL = 4.0 * 2.220446049250313e-16


def bisect(func, lo, hi, f_lo=None, f_hi=None, xtol=1e-300, maxiter=500):
    """Root of ``func`` on ``[lo, hi]`` given a sign change (Brent's method).

    ``f_lo`` / ``f_hi`` may be supplied to skip evaluating an endpoint, e.g.
    where ``func`` is singular; only their sign matters there. Returns
    ``(root, evaluations)``.
    """
    if f_lo is None:
        f_lo = func(lo)
    if f_hi is None:
        f_hi = func(hi)
    if f_lo == 0.0:
        return lo, 0
    if f_hi == 0.0:
        return hi, 0
    if (f_lo > 0) == (f_hi > 0):
        raise BracketError(f"no sign change on [{lo!r}, {hi!r}]: f={f_lo!r}, {f_hi!r}")
    calls = [0]

    def wrapped(x):
        if x == lo:
            return f_lo
        if x == hi:
            return f_hi
        calls[0] += 1
        return func(x)

    root = brentq(wrapped, lo, hi, xtol=max(xtol, 1e-300), rtol=_RTOL, maxiter=maxiter)
    return root, calls[0]


def expand_upper(func, lo, step, limit, factor=2.0):
    """Grow ``hi = lo + step*factor**k`` until ``func(hi)`` changes sign from ``func(lo)``.

    Returns ``(hi, f_hi)``. Raises BracketError once ``hi`` exceeds ``limit``.
    """
    f_lo = func(lo)
    hi = lo + step
    while True:
        f_hi = func(hi)
        if (f_hi > 0) != (f_lo > 0) or f_hi == 0.0:
            return hi, f_hi
        if not math.isfinite(hi) or hi > limit:
            raise BracketError(f"bracket expansion passed {limit!r}")
        step *= factor
        hi = lo + step
