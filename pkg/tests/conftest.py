import numpy as np
import pytest

from gestruct import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def small_linear_data(rng, n=120, q=3, p=12, noise=0.1, seed=None):
    """Small dense-signal dataset with known effects for solver tests."""
    if seed is not None:
        rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, q))
    X = rng.normal(size=(n, p))
    alpha = rng.uniform(0.8, 1.2, size=q)
    beta = np.zeros(p)
    beta[:3] = [1.0, -0.8, 0.6]
    gamma = np.zeros((q, p))
    gamma[0, :2] = [0.5, -0.4]
    eta = beta * gamma
    y = Z @ alpha + X @ beta
    for k in range(q):
        y += Z[:, k] * (X @ eta[k])
    y += noise * rng.normal(size=n)
    return Dataset(y, Z, X), alpha, beta, eta


@pytest.fixture
def small_data(rng):
    return small_linear_data(rng)
