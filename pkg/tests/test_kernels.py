import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbh import _kernels_py, kernels
from bbh.grid import make_grid

compiled = pytest.importorskip("bbh._kernels")


def levels(n):
    lv = make_grid(n).levels
    return np.ascontiguousarray(lv.energies), np.ascontiguousarray(lv.weights)


@settings(max_examples=40)
@given(n=st.integers(2, 20), shift=st.floats(0.0, 5.0), T=st.floats(0.01, 50.0))
def test_bose_moment_backends_agree(n, shift, T):
    E, w = levels(n)
    a = compiled.bose_moment(E, w, shift, T)
    b = _kernels_py.bose_moment(E, w, shift, T)
    assert a == pytest.approx(b, rel=1e-13)


@settings(max_examples=40)
@given(n=st.integers(2, 20), c=st.floats(0.0, 5.0), frac=st.floats(0.0, 0.999),
       T=st.one_of(st.just(0.0), st.floats(0.01, 20.0)))
def test_bogoliubov_backends_agree(n, c, frac, T):
    E, w = levels(n)
    b = frac * (E.min() + c)
    if T == 0.0 and b == 0.0:
        return
    g1, a1 = compiled.bogoliubov_fields(E, c, b, T)
    g2, a2 = _kernels_py.bogoliubov_fields(E, c, b, T)
    assert np.allclose(g1, g2, rtol=1e-13, atol=0)
    assert np.allclose(a1, a2, rtol=1e-13, atol=0)
    m1 = compiled.bogoliubov_moments(E, w, c, b, T)
    m2 = _kernels_py.bogoliubov_moments(E, w, c, b, T)
    assert np.allclose(m1, m2, rtol=1e-12, atol=1e-300)


@given(st.lists(st.one_of(st.just(0.0), st.floats(0.0, 1e8)), min_size=1, max_size=50))
def test_entropy_terms_backends_agree(D):
    D = np.array(D)
    s1, L1, b1 = compiled.entropy_terms(D)
    s2, L2, b2 = _kernels_py.entropy_terms(D)
    assert np.allclose(s1, s2, rtol=1e-13, atol=0)
    assert np.allclose(b1, b2, rtol=1e-15, atol=0)
    assert np.array_equal(np.isinf(L1), np.isinf(L2))
    fin = np.isfinite(L1)
    assert np.allclose(L1[fin], L2[fin], rtol=1e-13, atol=1e-300)


@pytest.mark.parametrize("n", [5, 48])
def test_dispatcher_matches_fallback(n):
    E, w = levels(n)
    assert kernels.bose_moment(E, w, 0.1, 1.0) == pytest.approx(_kernels_py.bose_moment(E, w, 0.1, 1.0), rel=1e-13)
    D = np.random.default_rng(0).exponential(1.0, make_grid(n).size)
    assert np.allclose(kernels.entropy_terms(D)[0], _kernels_py.entropy_terms(D)[0], rtol=1e-13)


def test_pure_python_switch(tmp_path):
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-c", "import bbh.kernels as k; print(k.BACKEND)"],
                         env={"BBH_PURE_PYTHON": "1", "PATH": ""}, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND == "cython"


# (D, s, L) evaluated with 40-digit arithmetic
ENTROPY_REFERENCE = [
    (1e-12, 2.8631021115901417e-11, 27.631021115930548),
    (0.75, 0.95477125244221923, 1.0986122886681097),
    (3.0, 1.5761997778913905, 0.56961810003669262),
    (1e6, 7.9077553623154621, 0.00099999995833333802),
    (1e12, 14.815510557964357, 9.9999999999995833e-7),
]


@pytest.mark.parametrize("impl", [compiled, _kernels_py], ids=["cython", "numpy"])
@pytest.mark.parametrize("D, s_ref, L_ref", ENTROPY_REFERENCE)
def test_entropy_terms_high_precision(impl, D, s_ref, L_ref):
    s, L, _ = impl.entropy_terms(np.array([D]))
    assert s[0] == pytest.approx(s_ref, rel=1e-14)
    assert L[0] == pytest.approx(L_ref, rel=1e-14)
