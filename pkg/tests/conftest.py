import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mgst.design import DesignSpec
from mgst.statistic import LinearStatistic, SignedProductStatistic

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

M = np.array([[40.0, 10.0], [10.0, 40.0]])
THETA0 = np.zeros(2)
THETA_A = np.array([1.625, 1.625])


def make_spec(stat, K=5, nuisance=M, alpha=0.025, beta=0.1, **kw):
    return DesignSpec(K=K, alpha=alpha, beta=beta, theta0=THETA0, thetaA=THETA_A, nuisance=nuisance,
                      statistic=stat, **kw)


@pytest.fixture
def linear_spec():
    return make_spec(LinearStatistic([1.0, 1.0]))


@pytest.fixture
def product_spec():
    return make_spec(SignedProductStatistic())


def random_spd(rng, p, scale=1.0):
    a = rng.normal(size=(p, p))
    return scale * (a @ a.T + p * np.eye(p))
