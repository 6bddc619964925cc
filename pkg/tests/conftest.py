import numpy as np
import pytest

from growthlab import Config, Params


@pytest.fixture
def peak4():
    """Four sites with a single strict peak at site 2."""
    return Params((1.0, 3.0, 1.0, 1.0))


@pytest.fixture
def saddle5():
    """Equal pair {2, 3} between a lower left and a higher right neighbour."""
    return Params((0.5, 1.0, 1.0, 2.0, 0.8))


@pytest.fixture
def flat4():
    return Params((1.0, 1.0, 1.0, 1.0))


@pytest.fixture
def zeros4():
    return Config.zeros(4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
