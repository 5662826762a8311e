import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def within_se(mean, se, nsigma=3.0, slack=1e-12):
    """Monte Carlo pass rule: |mean| <= nsigma * se (+ a tiny absolute slack)."""
    return np.all(np.abs(mean) <= nsigma * np.asarray(se) + slack)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
