import numpy as np
import pytest

from evolba.harness import synthetic_image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def image32():
    return synthetic_image(0)


def random_image(rng, w=8, h=8):
    return rng.uniform(0.0, 1.0, size=(h, w, 3))
