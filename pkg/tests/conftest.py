import numpy as np
import pytest

from granubath.analytics import SteadyPrediction
from granubath.kinematics import CrossSection, kernel_constants


@pytest.fixture(scope="session")
def unit_cs():
    return CrossSection(kind="constant", b0_prime=1.0)


@pytest.fixture(scope="session")
def kc3(unit_cs):
    return kernel_constants(unit_cs, 3)


@pytest.fixture(scope="session")
def prediction(kc3):
    return SteadyPrediction.from_kernel(kc3, 3, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)
