import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("fracap", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("fracap")


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)
