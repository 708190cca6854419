import numpy as np
import pytest

from phantoms import make_phantom


@pytest.fixture
def phantom():
    return make_phantom()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
