from functools import lru_cache

import numpy as np
import pytest

from handlemaslov.lagrangians import build_scenario_A, build_scenario_B
from handlemaslov.maslov import scenario_indices
from handlemaslov.smoothfn import default_profiles


@lru_cache(maxsize=None)
def profiles(epsilon=0.05, psi_shape="cubic"):
    return default_profiles(epsilon=epsilon, psi_shape=psi_shape)


@lru_cache(maxsize=None)
def scenario_a(n, gauge_k=0, epsilon=0.05, psi_shape="cubic"):
    return build_scenario_A(n, profiles(epsilon, psi_shape), gauge_k=gauge_k)


@lru_cache(maxsize=None)
def scenario_b(n, epsilon=0.01):
    return build_scenario_B(n, profiles(epsilon))


@lru_cache(maxsize=None)
def indices_a(n, gauge_k=0, epsilon=0.05, psi_shape="cubic"):
    return scenario_indices(scenario_a(n, gauge_k, epsilon, psi_shape))


@lru_cache(maxsize=None)
def indices_b(n, epsilon=0.01):
    return scenario_indices(scenario_b(n, epsilon))["gamma5*...*gamma1"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
