"""Reconstruction quality metrics: NRMSE (percent) and SSIM.

NRMSE is 100 * ||xhat - x|| / ||x||; callers apply the global sign
correction first.  SSIM uses the standard constants K1 = 0.01, K2 = 0.03
with 8x8 uniform windows sliding over every fully interior position.
"""

from __future__ import annotations

import numpy as np

SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def nrmse(x_hat, x_true):
    """Normalized root mean squared error in percent."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x_true = np.asarray(x_true, dtype=np.float64)
    denom = np.linalg.norm(x_true)
    if denom == 0:
        raise ValueError("ground truth has zero norm")
    return float(100.0 * np.linalg.norm(x_hat - x_true) / denom)


def _window_moments(a, w):
    """Means of all w-by-w windows via a 2-D summed-area table."""
    s = np.cumsum(np.cumsum(a, axis=0), axis=1)
    s = np.pad(s, ((1, 0), (1, 0)))
    total = s[w:, w:] - s[:-w, w:] - s[w:, :-w] + s[:-w, :-w]
    return total / (w * w)


def ssim(x_hat, x_true, dynamic_range=1.0):
    """Mean local SSIM over all valid 8x8 windows."""
    x = np.asarray(x_hat, dtype=np.float64)
    y = np.asarray(x_true, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("images must share a shape")
    w = SSIM_WINDOW
    if min(x.shape) < w:
        raise ValueError(f"images must be at least {w}x{w}")
    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2
    mx = _window_moments(x, w)
    my = _window_moments(y, w)
    vx = _window_moments(x * x, w) - mx * mx
    vy = _window_moments(y * y, w) - my * my
    cxy = _window_moments(x * y, w) - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))
