import mpmath
import numpy as np
import pytest

from hpr.gradients import (
    LineSearchError,
    StepPolicy,
    backtracking_step,
    finite_diff_grad,
    grad_gaussian,
    grad_pg,
    grad_poisson,
    lemma1_mu,
    lipschitz_report,
    pg_objective,
    theorem1_l,
)
from hpr.likelihood import PgNoiseModel, nll_gaussian, nll_poisson, phi
from hpr.model import make_operator, make_reference, simulate_measurements
from hpr.solvers import SolverConfig, wf

mpmath.mp.dps = 40


def rel_err(got, want):
    return np.linalg.norm(got - want) / np.linalg.norm(want)


class TestGradPg:
    def test_zero_field_zero_gradient(self):
        op = make_operator(8, 1.0, 2, np.zeros((8, 8)))
        model = PgNoiseModel(sigma=1.0, b_bar=np.full(op.m, 0.5))
        g = grad_pg(op, np.zeros((8, 8)), np.ones(op.m), model)
        assert np.all(g == 0)

    def test_matches_finite_differences(self, small_instance):
        op, x, meas = small_instance
        model = PgNoiseModel(sigma=1.0, b_bar=meas.b_bar)
        g = grad_pg(op, x, meas.y, model)
        fd = finite_diff_grad(pg_objective(op, meas, model), x, 1e-5)
        assert rel_err(g, fd) < 1e-5

    def test_small_sigma_matches_poisson(self, rng):
        r = make_reference(8, rng)
        op = make_operator(8, 1.0, 2, r)
        x = rng.random((8, 8))
        u = op.intensity(x) + 0.2
        y = np.round(u)  # integer-ish counts
        model = PgNoiseModel(sigma=0.05, b_bar=np.full(op.m, 0.2))
        g_pg = grad_pg(op, x, y, model)
        g_p = grad_poisson(op, x, y, np.full(op.m, 0.2))
        assert rel_err(g_pg, g_p) < 1e-3

    def test_poisson_fallback_switches_factor(self, rng):
        r = make_reference(8, rng)
        op = make_operator(8, 3.0, 2, r)
        x = rng.random((8, 8))
        y = op.intensity(x) + 0.1 + 1.0
        model_on = PgNoiseModel(sigma=1.0, b_bar=np.full(op.m, 0.1), poisson_fallback=0.0)
        g_on = grad_pg(op, x, y, model_on)
        g_pois = grad_poisson(op, x, y, np.full(op.m, 0.1))
        np.testing.assert_allclose(g_on, g_pois, rtol=1e-12)


class TestSimpleGradients:
    def test_stationary_at_consistent_measurements(self, rng):
        r = make_reference(8, rng)
        op = make_operator(8, 1.0, 2, r)
        x = rng.random((8, 8))
        b = np.full(op.m, 0.1)
        y = op.intensity(x) + b
        assert np.linalg.norm(grad_gaussian(op, x, y, b)) < 1e-10
        assert np.linalg.norm(grad_poisson(op, x, y, b)) < 1e-10

    def test_gaussian_matches_finite_differences(self, small_instance):
        op, x, meas = small_instance

        def f(z):
            return nll_gaussian(op.intensity(z) + meas.b_bar, meas.y)

        g = grad_gaussian(op, x, meas.y, meas.b_bar)
        assert rel_err(g, finite_diff_grad(f, x, 1e-5)) < 1e-6

    def test_poisson_matches_finite_differences(self, small_instance):
        op, x, meas = small_instance
        y = np.maximum(meas.y, 0.0)

        def f(z):
            return nll_poisson(op.intensity(z) + meas.b_bar, y)

        g = grad_poisson(op, x, y, meas.b_bar)
        assert rel_err(g, finite_diff_grad(f, x, 1e-5)) < 1e-6

    def test_gaussian_gradient_linear_in_residual(self, rng):
        # residual doubles (f fixed) -> gradient doubles; prefactor is 4
        r = make_reference(8, rng)
        op = make_operator(8, 1.0, 2, r)
        x = rng.random((8, 8))
        b = np.full(op.m, 0.1)
        u = op.intensity(x) + b
        d = rng.random(op.m)
        g1 = grad_gaussian(op, x, u - d, b)
        g2 = grad_gaussian(op, x, u - 2 * d, b)
        np.testing.assert_allclose(g2, 2 * g1, rtol=1e-10)
        f = op.forward(x)
        direct = 4.0 * op.adjoint(d * f)
        np.testing.assert_allclose(g1, direct, rtol=1e-10)

    def test_poisson_zero_intensity_raises(self):
        op = make_operator(8, 1.0, 2, np.zeros((8, 8)))
        with pytest.raises(ZeroDivisionError):
            grad_poisson(op, np.zeros((8, 8)), np.ones(op.m), np.zeros(op.m))


class TestLipschitz:
    def test_lemma1_reference_value(self):
        # sigma = 1, y_max = 1: (1 - e^-1) e = e - 1
        assert lemma1_mu(1.0, 1.0) == pytest.approx(np.e - 1.0, rel=1e-12)

    def test_lemma1_vanishes_for_large_sigma(self):
        assert lemma1_mu(1e6, 5.0) < 1e-9

    def test_lemma1_overflow_sentinel(self):
        assert lemma1_mu(0.1, 50.0) == np.inf

    def test_lemma1_dominates_empirical_phi_slope(self):
        # mu bounds |d phi/du| everywhere and is attained in the u -> 0 limit
        h = 1e-7
        for sigma in (0.5, 1.0, 1.5):
            y_max = 8.0
            mu = lemma1_mu(sigma, y_max)
            for y in range(0, int(y_max) + 1):
                mu_y = lemma1_mu(sigma, y)
                for u in np.concatenate([np.linspace(1e-6, 0.5, 25),
                                         np.linspace(0.6, 50.0, 30)]):
                    slope = (phi(u + h, y, sigma) - phi(u - h, y, sigma)) / (2 * h)
                    assert abs(slope) <= mu_y * (1 + 1e-6)
                    assert abs(slope) <= mu * (1 + 1e-6)

    def test_lemma1_sharp_at_zero(self):
        # the slope bound is exact in the u -> 0 limit
        for sigma, y in ((1.0, 4.0), (1.5, 8.0), (1.0, 1.0)):
            h = 1e-9
            d0 = (phi(h, y, sigma) - phi(0.0, y, sigma)) / h
            assert d0 == pytest.approx(lemma1_mu(sigma, y), rel=1e-5)

    def test_theorem1_c_zero_degenerates(self):
        val = theorem1_l(2.0, 3.0, 0.0, 1.0, 5.0)
        assert val == pytest.approx(2 * 2.0**2, rel=1e-12)

    def test_theorem1_matches_extended_precision(self):
        s, i, c, sigma, y_max = 1.5, 2.5, 1.0, 1.2, 6.0
        got = theorem1_l(s, i, c, sigma, y_max)
        s_, i_, c_, sg, ym = (mpmath.mpf(v) for v in (s, i, c, sigma, y_max))
        mu = (1 - mpmath.e ** (-1 / sg**2)) * mpmath.e ** ((2 * ym - 1) / sg**2)
        want = 4 * c_**2 * s_**2 * i_**2 * mu + 2 * s_**2 * abs(1 - c_**2 * i_**2 * mu)
        assert got == pytest.approx(float(want), rel=1e-12)

    def test_gradient_lipschitz_bound_on_random_pairs(self, rng):
        r = make_reference(8, rng)
        op = make_operator(8, 0.5, 2, r)
        x_ref = rng.random((8, 8))
        meas = simulate_measurements(op, x_ref, 0.1, 1.5, 11)
        report = lipschitz_report(op, meas, c_bound=1.0)
        model = PgNoiseModel(sigma=1.5, b_bar=meas.b_bar)
        assert np.isfinite(report.l_pg)
        for _ in range(50):
            x1 = rng.random((8, 8))
            x2 = rng.random((8, 8))
            g1 = grad_pg(op, x1, meas.y, model)
            g2 = grad_pg(op, x2, meas.y, model)
            assert np.linalg.norm(g1 - g2) <= report.l_pg * np.linalg.norm(x1 - x2)


class TestBacktracking:
    def test_quadratic_step_near_optimum(self):
        # f(t) = 0.5 L ||t||^2: exact minimizer of the line search is 1/L
        lip = 4.0
        f = lambda t: 0.5 * lip * float(np.dot(t, t))
        x = np.array([2.0])
        d = -lip * x  # negative gradient
        mu = backtracking_step(f, x, d, StepPolicy(kind="backtracking"))
        assert 0.5 / lip <= mu <= 1.0 / lip + 1e-12

    def test_descent_lemma_immediate_accept(self):
        lip = 2.0
        f = lambda t: 0.5 * lip * float(np.dot(t, t))
        x = np.array([1.0, -3.0])
        d = -lip * x
        policy = StepPolicy(kind="backtracking", mu_init=1.0 / lip)
        assert backtracking_step(f, x, d, policy) == 1.0 / lip

    def test_ascent_direction_rejected(self):
        f = lambda t: float(np.dot(t, t))
        x = np.array([1.0])
        with pytest.raises(LineSearchError):
            backtracking_step(f, x, np.array([1.0]), slope=1.0)


class TestFiniteDiff:
    def test_exact_on_linear(self):
        a = np.arange(1.0, 10.0).reshape(3, 3)
        f = lambda z: float(np.sum(a * z))
        g = finite_diff_grad(f, np.zeros((3, 3)), 1e-5)
        np.testing.assert_allclose(g, a, rtol=1e-9)

    def test_exact_on_quadratic(self):
        f = lambda z: float(np.sum(z**2))
        x = np.arange(4.0)
        np.testing.assert_allclose(finite_diff_grad(f, x, 1e-4), 2 * x, atol=1e-7)


def test_wf_descent_with_lipschitz_step(rng):
    # mu = 0.9 / theorem1_L keeps the PG objective nonincreasing
    r = make_reference(8, rng)
    op = make_operator(8, 0.5, 2, r)
    x_true = rng.random((8, 8))
    meas = simulate_measurements(op, x_true, 0.1, 1.5, 21)
    config = SolverConfig(likelihood="pg", step=StepPolicy(kind="lipschitz", safety=0.9),
                          max_iters=50)
    run = wf(op, meas, config, x0=np.full((8, 8), 0.5))
    obj = np.asarray(run.trace["objective"])
    assert np.all(np.diff(obj) <= 1e-10)
