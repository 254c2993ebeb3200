import numpy as np
import pytest

import markovgate as mg


def ar1_path(n, rho=0.95, c=0.00425, noise_sd=0.02, seed=0, x0=0.085):
    """Plain AR(1) path of length n + 2 (stationary-ish start)."""
    rng = np.random.default_rng(seed)
    vals = np.empty(n + 2)
    vals[0] = x0
    eps = noise_sd * rng.standard_normal(n + 1)
    for i in range(n + 1):
        vals[i + 1] = c + rho * vals[i] + eps[i]
    return vals


@pytest.fixture
def small_sample():
    vals = ar1_path(60, seed=5)
    return mg.TripleSample.from_path(vals, 1.0 / 52.0)


@pytest.fixture
def small_bw():
    return mg.Bandwidths(b1=0.03, b2=0.03, h1=0.03, h2=0.03, h3=0.03)


@pytest.fixture(scope="session")
def ou_path_600():
    return mg.simulate(mg.ModelSpec(), mg.SimConfig(n_obs=600, seed=11))


@pytest.fixture(scope="session")
def ou_sample_600(ou_path_600):
    return mg.TripleSample.from_path(ou_path_600.values, ou_path_600.delta)
