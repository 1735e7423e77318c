import numpy as np
import pytest

from skullkit import fixtures


@pytest.fixture(scope="session")
def proxy_set():
    return fixtures.make_real_proxy_set(60, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
