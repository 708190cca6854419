import numpy as np
import pytest


@pytest.fixture
def flat_phantom():
    """64x64 piecewise-constant image with a rectangle and a disc."""
    img = np.full((64, 64), 0.25, dtype=np.float32)
    img[6:58, 6:30] = 0.75
    yy, xx = np.ogrid[:64, :64]
    img[(yy - 32) ** 2 + (xx - 46) ** 2 <= 144] = 0.5
    return img


@pytest.fixture
def rng():
    return np.random.default_rng(4321)
