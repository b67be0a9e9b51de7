import numpy as np
import pytest

from hpr.priors import (
    BuiltinDenoiser,
    GmmPrior,
    GmmScoreProvider,
    IdentityDenoiser,
    NoiseSchedule,
    ZeroScoreProvider,
    default_test_prior,
    gmm_energy,
    gmm_score_grad,
    gmm_score_lipschitz,
    huber_tv_energy,
    huber_tv_grad,
    make_geometric_schedule,
)


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    flat = g.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        step = np.zeros_like(xf)
        step[i] = h
        flat[i] = (f((xf + step).reshape(x.shape)) - f((xf - step).reshape(x.shape))) / (2 * h)
    return g


class TestGmm:
    def test_single_component_closed_form(self, rng):
        prior = GmmPrior(weights=(1.0,), means=(0.3,), variances=(0.04,))
        x = rng.random((5, 5))
        for sigma in (0.0, 0.1):
            got = gmm_score_grad(prior, x, sigma)
            np.testing.assert_allclose(got, (x - 0.3) / (0.04 + sigma**2), rtol=1e-12)

    def test_symmetric_mixture_zero_at_center(self):
        prior = GmmPrior(weights=(0.5, 0.5), means=(-0.4, 0.4), variances=(0.02, 0.02))
        assert gmm_score_grad(prior, np.zeros(1), 0.05)[0] == pytest.approx(0.0, abs=1e-14)

    def test_three_component_matches_numeric_gradient(self, rng):
        prior = GmmPrior(weights=(0.2, 0.5, 0.3), means=(0.1, 0.5, 0.9),
                         variances=(0.01, 0.02, 0.005))
        sigma = 0.07
        xs = rng.uniform(-0.2, 1.2, 100)
        got = gmm_score_grad(prior, xs, sigma)
        want = numeric_grad(lambda z: gmm_energy(prior, z, sigma), xs)
        assert np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-6)) < 1e-6

    def test_energy_minimized_at_mode(self):
        prior = GmmPrior(weights=(1.0,), means=(0.5,), variances=(0.01,))
        e_mode = gmm_energy(prior, np.full((4, 4), 0.5))
        e_off = gmm_energy(prior, np.full((4, 4), 0.7))
        assert e_mode < e_off

    def test_smoothing_parameter_identity(self, rng):
        base = default_test_prior()
        widened = GmmPrior(weights=base.weights, means=base.means,
                           variances=tuple(v + 0.05**2 for v in base.variances))
        x = rng.random((6, 6))
        assert gmm_energy(base, x, 0.05) == pytest.approx(gmm_energy(widened, x, 0.0), rel=1e-14)
        np.testing.assert_allclose(gmm_score_grad(base, x, 0.05),
                                   gmm_score_grad(widened, x, 0.0), rtol=1e-12)

    def test_score_is_gradient_field_line_integral(self, rng):
        # integral of the score along a segment equals the energy difference
        prior = default_test_prior()
        sigma = 0.05
        for _ in range(5):
            a = rng.uniform(0, 1, (4, 4))
            b = rng.uniform(0, 1, (4, 4))
            ts = np.linspace(0, 1, 2001)
            vals = np.array([
                float(np.sum(gmm_score_grad(prior, a + t * (b - a), sigma) * (b - a)))
                for t in ts
            ])
            integral = np.trapezoid(vals, ts)
            diff = gmm_energy(prior, b, sigma) - gmm_energy(prior, a, sigma)
            assert abs(integral - diff) < 1e-5 * max(1.0, abs(diff))

    def test_score_bounded_on_box_by_tail_bound(self):
        prior = default_test_prior()
        sigma = 0.05
        grid = np.linspace(0.0, 1.0, 2001)
        smax = np.max(np.abs(gmm_score_grad(prior, grid, sigma)))
        v_min = min(prior.variances) + sigma**2
        spread = max(abs(g - m) for g in (0.0, 1.0) for m in prior.means)
        assert np.isfinite(smax)
        assert smax <= spread / v_min

    def test_smoothed_score_lipschitz_finite(self):
        prior = default_test_prior()
        for sigma in (0.005, 0.05, 0.1):
            assert np.isfinite(gmm_score_lipschitz(prior, sigma))

    def test_validation(self):
        with pytest.raises(ValueError):
            GmmPrior(weights=(0.5, 0.6), means=(0, 1), variances=(0.1, 0.1))
        with pytest.raises(ValueError):
            GmmPrior(weights=(1.0,), means=(0.0,), variances=(0.0,))


class TestProviders:
    def test_gmm_provider_exposes_energy(self, rng):
        prov = GmmScoreProvider()
        assert prov.has_energy
        x = rng.random((4, 4))
        assert np.isfinite(prov.energy(x, 0.1))
        assert prov.score_grad(x, 0.1).shape == x.shape

    def test_zero_provider(self, rng):
        prov = ZeroScoreProvider()
        x = rng.random((3, 3))
        assert np.all(prov.score_grad(x, 0.1) == 0)
        assert prov.energy(x, 0.1) == 0.0


class TestHuberTv:
    def test_constant_image_zero_gradient(self):
        g = huber_tv_grad(np.full((6, 6), 0.4), 0.05, 2.0)
        assert np.all(g == 0)

    def test_lambda_zero(self, rng):
        assert np.all(huber_tv_grad(rng.random((5, 5)), 0.05, 0.0) == 0)

    def test_matches_numeric_gradient(self, rng):
        x = rng.random((8, 8))
        got = huber_tv_grad(x, 0.05, 1.3)
        want = numeric_grad(lambda z: huber_tv_energy(z, 0.05, 1.3), x)
        assert np.max(np.abs(got - want)) < 1e-6 * max(1.0, np.max(np.abs(want)))


class TestBuiltinDenoise:
    def test_zero_strength_is_identity(self, rng):
        x = rng.random((8, 8))
        for kind in BuiltinDenoiser.KINDS:
            out = BuiltinDenoiser(kind).denoise(x, 0.0)
            np.testing.assert_array_equal(out, x)

    def test_median_preserves_constant(self):
        x = np.full((8, 8), 0.7)
        out = BuiltinDenoiser("median").denoise(x, 1.0)
        np.testing.assert_allclose(out, x)

    def test_tv_prox_does_not_increase_tv_energy(self, rng):
        x = np.clip(rng.random((12, 12)) + 0.3 * rng.standard_normal((12, 12)), 0, 1)
        den = BuiltinDenoiser("tvprox", tv_weight=0.2)
        out = den.denoise(x, 1.0)
        assert huber_tv_energy(out, 0.05, 1.0) <= huber_tv_energy(x, 0.05, 1.0)

    def test_identity_denoiser(self, rng):
        x = rng.random((4, 4))
        np.testing.assert_array_equal(IdentityDenoiser().denoise(x, 1.0), x)


class TestSchedule:
    def test_paper_schedule_endpoints_and_ratio(self):
        sched = make_geometric_schedule(0.1, 0.005, 20)
        lv = np.asarray(sched.levels)
        assert lv.size == 20
        assert lv[0] == pytest.approx(0.1)
        assert lv[-1] == pytest.approx(0.005)
        ratios = lv[1:] / lv[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)

    def test_two_levels(self):
        sched = make_geometric_schedule(0.1, 0.01, 2)
        assert sched.levels == (0.1, 0.01)

    def test_ordering_violations_rejected(self):
        with pytest.raises(ValueError):
            make_geometric_schedule(0.005, 0.1, 5)
        with pytest.raises(ValueError):
            NoiseSchedule(levels=(0.1, 0.1), passes_per_level=1)
        with pytest.raises(ValueError):
            NoiseSchedule(levels=(0.1, -0.05), passes_per_level=1)
