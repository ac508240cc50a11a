import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dbarlab.catalog import catalog_weight

settings.register_profile("lab", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def catalog():
    return {k: catalog_weight(k) for k in ("z2_n1", "z2_n2", "z4_n1", "zsq2_n2", "z1_4_z2_4", "z1_2_z2_4")}
