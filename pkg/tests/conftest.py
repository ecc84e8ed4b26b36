import numpy as np
import pytest

from risksde import SDESpec


@pytest.fixture
def vp_spec():
    return SDESpec(family="vp", T=1.0, beta_min=0.1, beta_max=20.0, dim=2)


@pytest.fixture
def ve_spec():
    return SDESpec(family="ve", T=1.0, sigma_min=0.01, sigma_max=50.0, dim=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
