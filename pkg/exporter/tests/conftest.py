import numpy as np
import pytest


@pytest.fixture()
def np_rng():
    return np.random.default_rng(20240802)
