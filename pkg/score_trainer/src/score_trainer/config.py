"""Training configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def geometric_levels(hi=0.1, lo=0.005, count=20):
    """Descending geometric noise levels from hi to lo."""
    if not hi > lo > 0:
        raise ValueError("need hi > lo > 0")
    t = np.arange(count) / max(count - 1, 1)
    return tuple(float(v) for v in hi * (lo / hi) ** t)


@dataclass
class TrainConfig:
    """Knobs shared by both trainers.

    Noise levels apply to the score network only; the denoiser trains at a
    single noise level (`dncnn_sigma`, on the 0-1 pixel scale, default
    15/255 following the usual 8-bit convention).
    """

    data_dir: str | None = None
    patch_size: int = 40
    noise_levels: tuple = field(default_factory=geometric_levels)
    epochs: int = 400
    batch_size: int = 32
    learning_rate: float = 1e-3
    checkpoint_path: str | None = None
    kernel_size: int = 3
    width: int = 48
    depth: int = 4
    dncnn_sigma: float = 15.0 / 255.0
    level_weighting: str = "sigma2"  # or "uniform"
    ema_decay: float = 0.999  # 0 serves the raw final weights
    refit_batches: int = 200  # closed-form head solve sample size
    seed: int = 0

    def __post_init__(self):
        levels = tuple(float(v) for v in self.noise_levels)
        if any(s <= 0 for s in levels):
            raise ValueError("noise levels must be positive")
        if any(b >= a for a, b in zip(levels[:-1], levels[1:])):
            raise ValueError("noise levels must be exported in descending order")
        self.noise_levels = levels
        if self.patch_size < 1:
            raise ValueError("patch size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.level_weighting not in ("uniform", "sigma2"):
            raise ValueError("level_weighting must be 'uniform' or 'sigma2'")
