import numpy as np
import pytest

from bbh.grid import make_grid


@pytest.fixture(scope="session")
def g5():
    return make_grid(5)


@pytest.fixture(scope="session")
def g9():
    return make_grid(9)


@pytest.fixture(scope="session")
def g16():
    return make_grid(16)


@pytest.fixture(scope="session")
def g48():
    return make_grid(48)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
