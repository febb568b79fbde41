import numpy as np
import pytest

from rtoep.domains import catalog_lookup


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def disk():
    return catalog_lookup("ball-lambda", 1, {"lambda": 0.0})


@pytest.fixture(scope="session")
def ball2():
    return catalog_lookup("ball-lambda", 2, {"lambda": 0.0})
