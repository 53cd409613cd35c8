import numpy as np
import pytest

from parapde.spectral import TorusGrid, build_lp_bank


@pytest.fixture(scope="session")
def grid64():
    return TorusGrid(d=1, n=64)


@pytest.fixture(scope="session")
def bank64(grid64):
    return build_lp_bank(grid64)


@pytest.fixture(scope="session")
def grid2d():
    return TorusGrid(d=2, n=32)


@pytest.fixture(scope="session")
def bank2d(grid2d):
    return build_lp_bank(grid2d)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
