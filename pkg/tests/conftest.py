import numpy as np
import pytest

from openweyl.integrator import IntegratorConfig
from openweyl.model import ModelParams


@pytest.fixture(scope="session")
def params():
    return ModelParams(lam=0.1, omega=0.1, hbar=1.0)


@pytest.fixture(scope="session")
def E18(params):
    return 1.8 * params.saddle_energy


@pytest.fixture(scope="session")
def icfg():
    return IntegratorConfig(step=0.05, tolerance=1e-9)


@pytest.fixture(scope="session")
def near_zero_coupling():
    """Effectively linear dynamics; lam must stay positive by contract."""
    return ModelParams(lam=1e-300, omega=0.1, hbar=1.0)


def assert_allclose(*args, **kwargs):
    return np.testing.assert_allclose(*args, **kwargs)
