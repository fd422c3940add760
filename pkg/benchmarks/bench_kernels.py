"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 48] [--repeat 50]

The level kernels run on the distinct energy levels of an n^3 grid (about 2.6k
at n = 48), entropy_terms on all n^3 points.
"""

import argparse
import timeit

import numpy as np

from bbh import _kernels_py, kernels
from bbh.grid import make_grid

try:
    from bbh import _kernels
except ImportError:
    _kernels = None


def cases(n):
    lv = make_grid(n).levels
    E, w = np.ascontiguousarray(lv.energies), np.ascontiguousarray(lv.weights)
    rng = np.random.default_rng(0)
    D = rng.exponential(1.0, make_grid(n).size)
    return {
        "bose_moment": lambda m: m.bose_moment(E, w, 0.1, 1.0),
        "bogoliubov_moments": lambda m: m.bogoliubov_moments(E, w, 0.5, 0.3, 1.0),
        "bogoliubov_fields": lambda m: m.bogoliubov_fields(E, 0.5, 0.3, 1.0),
        "entropy_terms": lambda m: m.entropy_terms(D),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=48)
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
    def best(fn, mod):
        return min(timeit.repeat(lambda: fn(mod), number=args.repeat, repeat=3)) / args.repeat * 1e6

    # "dispatched" is what the solvers call: compiled below the crossover length, numpy above
    print(f"n = {args.n}, backend {kernels.BACKEND}")
    print(f"{'kernel':<20} {'numpy us':>10} {'cython us':>10} {'speedup':>8} {'dispatched us':>14}")
    for name, fn in cases(args.n).items():
        t_py = best(fn, _kernels_py)
        t_auto = best(fn, kernels)
        if _kernels is None:
            print(f"{name:<20} {t_py:>10.1f} {'-':>10} {'-':>8} {t_auto:>14.1f}")
            continue
        t_cy = best(fn, _kernels)
        print(f"{name:<20} {t_py:>10.1f} {t_cy:>10.1f} {t_py / t_cy:>7.1f}x {t_auto:>14.1f}")


if __name__ == "__main__":
    main()
