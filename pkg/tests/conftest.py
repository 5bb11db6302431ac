import numpy as np
import pytest

from maxbound.marginals import GaussianFamily, ScaledUniformFamily


@pytest.fixture(scope="session")
def gauss():
    return GaussianFamily(sigma=1.0)


@pytest.fixture(scope="session")
def uni():
    return ScaledUniformFamily(half_width=1.0)


@pytest.fixture(scope="session")
def fast_grid():
    """Coarse solver grid for tests that only care about plumbing."""
    from maxbound.solver import SolverGrid

    return SolverGrid(n0=8, rungs=2, nx=80)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
