import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(77)


def analytic_energy_grad(x, sigma, weights=(0.5, 0.5), means=(0.2, 0.8), taus=(0.1, 0.1)):
    """Smoothed-mixture energy gradient, the ground truth for GMM pixels."""
    w = np.asarray(weights, dtype=np.float64)
    mus = np.asarray(means, dtype=np.float64)
    v = np.asarray(taus, dtype=np.float64) ** 2 + sigma * sigma
    logc = np.log(w) - 0.5 * np.log(2 * np.pi * v) - (x[..., None] - mus) ** 2 / (2 * v)
    m = logc.max(axis=-1, keepdims=True)
    r = np.exp(logc - m)
    r /= r.sum(axis=-1, keepdims=True)
    return np.sum(r * (x[..., None] - mus) / v, axis=-1)
