import numpy as np
import pytest

from ebm2.legendre import SpectralGrid
from ebm2.model import ModelParams, default_forcing


@pytest.fixture
def grid16():
    return SpectralGrid(16)


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def forcing16(grid16):
    return default_forcing(grid16)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)
