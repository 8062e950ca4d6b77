import numpy as np
import pytest

from ppolab.rng import RngStream


@pytest.fixture
def rng():
    return RngStream(20240607)


@pytest.fixture
def nprng():
    # independent generator for building test inputs, never for the code under test
    return np.random.default_rng(12345)
