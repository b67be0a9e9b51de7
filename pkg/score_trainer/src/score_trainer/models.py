"""Network architectures.

NoiseCondScoreNet regresses the denoising score target (x - x_noisy)/sigma^2
from the noisy image and the noise level (fed as a constant log-sigma
channel), so one network covers the whole annealing schedule.

DnCnn is the classic residual denoiser: a Conv/ReLU/BatchNorm stack whose
output is the noise estimate; the clean image is input minus output.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn


class NoiseCondScoreNet(nn.Module):
    """Score network s(x, sigma) parameterized as network(x, sigma) / sigma.

    The raw network regresses the unit-scale noise, so its output range is
    O(1) at every level of the annealing table; dividing by sigma recovers
    the score, whose magnitude grows as the noise shrinks.  An affine skip
    from the inputs carries the near-linear bulk of the score and the final
    layer is linear in the penultimate features, so both can be polished by
    an exact least-squares refit after gradient training.
    """

    N_SHAPES = 6  # learned nonlinear channels modulated per level

    def __init__(self, width=48, depth=4, kernel_size=3,
                 levels=(0.1, 0.05, 0.025, 0.0125, 0.00625)):
        super().__init__()
        pad = kernel_size // 2
        layers = [nn.Conv2d(2, width, kernel_size, padding=pad), nn.SiLU()]
        for _ in range(max(depth - 2, 0)):
            layers += [nn.Conv2d(width, width, kernel_size, padding=pad), nn.SiLU()]
        self.body = nn.Sequential(*layers)
        self.mix = nn.Conv2d(width, self.N_SHAPES, 1)
        self.out = nn.Conv2d(width, 1, 1)
        # fixed radial-basis channels over the pixel value: a coarse grid
        # across the working range plus a fine grid where pixel densities
        # transition; together with the learned shape channels they make the
        # per-level head expressive enough for an exact least-squares solve
        coarse = torch.linspace(-0.4, 1.4, 17)
        fine = torch.linspace(0.3, 0.7, 15)
        centers = torch.cat([coarse, fine])
        widths = torch.cat([torch.full((17,), 0.12), torch.full((15,), 0.03)])
        self.register_buffer("rbf_centers", centers)
        self.register_buffer("rbf_widths", widths)
        n_feats = 2 + self.N_SHAPES + centers.numel()
        # per-level modulation keeps neighboring noise scales from smearing;
        # the head is linear in its parameters so the refit solves it exactly
        self.head = nn.Parameter(torch.zeros(len(levels), n_feats))
        self.register_buffer("level_table",
                             torch.tensor(sorted(levels, reverse=True),
                                          dtype=torch.float32))
        self.arch = {"kind": "ncsn", "width": width, "depth": depth,
                     "kernel_size": kernel_size,
                     "levels": tuple(float(v) for v in sorted(levels, reverse=True))}

    def level_index(self, sigma, batch):
        """Nearest level in log scale; sigma may be a scalar or a 1-D tensor."""
        logs = torch.log(self.level_table)
        if torch.is_tensor(sigma):
            query = torch.log(sigma).view(-1, 1)
        else:
            query = torch.full((batch, 1), float(np.log(sigma)))
        return torch.argmin(torch.abs(query - logs[None, :]), dim=1)

    def _inputs(self, x, sigma):
        if x.dim() == 2:
            x = x[None, None]
        elif x.dim() == 3:
            x = x[:, None]
        if torch.is_tensor(sigma):
            cond = torch.log(sigma).to(x.dtype).view(-1, 1, 1, 1).expand_as(x)
        else:
            cond = torch.full_like(x, float(np.log(sigma)))
        return torch.cat([x, cond], dim=1)

    def features(self, x, sigma):
        """(body maps, per-level head features, level index).

        Head features: pixel value, a constant, the learned shape channels,
        and the fixed radial-basis channels.
        """
        u = self._inputs(x, sigma)
        h = self.body(u)
        xx = u[:, :1]
        ones = torch.ones_like(xx)
        rbf = torch.exp(
            -((xx[:, 0, :, :, None] - self.rbf_centers) / self.rbf_widths) ** 2 / 2.0
        ).permute(0, 3, 1, 2)
        feats = torch.cat([xx, ones, self.mix(h), rbf], dim=1)
        return h, feats, self.level_index(sigma, u.shape[0])

    def raw(self, x, sigma):
        """Unit-scale prediction (the negated noise)."""
        h, feats, idx = self.features(x, sigma)
        w = self.head[idx].view(feats.shape[0], -1, 1, 1)
        return (self.out(h) + (w * feats).sum(dim=1, keepdim=True)).squeeze(1)

    def forward(self, x, sigma):
        out = self.raw(x, sigma)
        if torch.is_tensor(sigma):
            return out / sigma.to(out.dtype).view(-1, *([1] * (out.dim() - 1)))
        return out / float(sigma)


class DnCnn(nn.Module):
    def __init__(self, width=48, depth=6, kernel_size=3):
        super().__init__()
        pad = kernel_size // 2
        layers = [nn.Conv2d(1, width, kernel_size, padding=pad), nn.ReLU(inplace=True)]
        for _ in range(max(depth - 2, 0)):
            layers += [
                nn.Conv2d(width, width, kernel_size, padding=pad, bias=False),
                nn.BatchNorm2d(width),
                nn.ReLU(inplace=True),
            ]
        layers.append(nn.Conv2d(width, 1, kernel_size, padding=pad))
        self.net = nn.Sequential(*layers)
        self.arch = {"kind": "dncnn", "width": width, "depth": depth,
                     "kernel_size": kernel_size}

    def forward(self, x):
        if x.dim() == 2:
            x = x[None, None]
        elif x.dim() == 3:
            x = x[:, None]
        return self.net(x).squeeze(1)


def build_model(arch):
    kind = arch["kind"]
    if kind == "ncsn":
        return NoiseCondScoreNet(arch["width"], arch["depth"], arch["kernel_size"],
                                 levels=arch["levels"])
    if kind == "dncnn":
        return DnCnn(arch["width"], arch["depth"], arch["kernel_size"])
    raise ValueError(f"unknown architecture {kind!r}")
