import numpy as np
import pytest

from helpers import bimodal_model, single_mode_model


@pytest.fixture
def bench():
    """The 4-dimensional two-mode benchmark model."""
    return bimodal_model()


@pytest.fixture
def bench_scalar():
    """Scalar variant of the two-mode benchmark."""
    return bimodal_model(z=1)


@pytest.fixture
def lgss():
    """Plain scalar linear-Gaussian system (r = 1)."""
    return single_mode_model()


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)
