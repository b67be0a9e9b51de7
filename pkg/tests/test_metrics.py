import numpy as np
import pytest

from hpr.metrics import SSIM_K1, SSIM_K2, SSIM_WINDOW, nrmse, ssim


def ssim_scalar_oracle(x, y, dynamic_range=1.0):
    """Direct loop-and-formula SSIM, independent of the library path."""
    w = SSIM_WINDOW
    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2
    vals = []
    for i in range(x.shape[0] - w + 1):
        for j in range(x.shape[1] - w + 1):
            a = x[i : i + w, j : j + w].ravel()
            b = y[i : i + w, j : j + w].ravel()
            ma, mb = a.mean(), b.mean()
            va = ((a - ma) ** 2).mean()
            vb = ((b - mb) ** 2).mean()
            cov = ((a - ma) * (b - mb)).mean()
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2))
                        / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


class TestNrmse:
    def test_identical_images(self, rng):
        x = rng.random((8, 8))
        assert nrmse(x, x) == 0.0

    def test_zero_estimate_is_hundred_percent(self, rng):
        x = rng.random((8, 8)) + 0.1
        assert nrmse(np.zeros_like(x), x) == pytest.approx(100.0, rel=1e-12)

    def test_hand_built_pair(self):
        x_true = np.array([[3.0, 0.0], [0.0, 4.0]])
        x_hat = np.array([[3.0, 1.0], [0.0, 4.0]])
        # ||diff|| = 1, ||truth|| = 5 -> 20%
        assert nrmse(x_hat, x_true) == pytest.approx(20.0, rel=1e-12)

    def test_zero_truth_rejected(self):
        with pytest.raises(ValueError):
            nrmse(np.ones((4, 4)), np.zeros((4, 4)))


class TestSsim:
    def test_self_similarity_is_one(self, rng):
        x = rng.random((16, 16))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_constant_offset_penalized(self):
        x = np.full((12, 12), 0.4)
        assert ssim(x + 0.2, x) < 1.0

    def test_matches_scalar_oracle(self, rng):
        x = rng.random((16, 16))
        y = np.clip(x + 0.1 * rng.standard_normal((16, 16)), 0, 1)
        assert ssim(x, y) == pytest.approx(ssim_scalar_oracle(x, y), abs=1e-8)

    def test_image_smaller_than_window_rejected(self, rng):
        with pytest.raises(ValueError):
            ssim(rng.random((6, 6)), rng.random((6, 6)))

    def test_range_bounds(self, rng):
        x = rng.random((16, 16))
        y = rng.random((16, 16))
        assert -1.0 <= ssim(x, y) <= 1.0
