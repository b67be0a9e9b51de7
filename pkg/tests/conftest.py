import numpy as np
import pytest

from hpr.model import make_operator, make_reference, simulate_measurements


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_op(rng):
    r = make_reference(8, rng)
    return make_operator(8, 1.0, 2, r)


@pytest.fixture
def small_instance(small_op, rng):
    x = rng.random((8, 8))
    meas = simulate_measurements(small_op, x, 0.1, 1.0, 99)
    return small_op, x, meas
