"""Training loops and checkpoint handling.

The score network minimizes the denoising score-matching objective,
summed over the annealing levels with uniform weights:

    E[ (s(x_noisy, sigma_k) - (x - x_noisy)/sigma_k^2)^2 ],
    x_noisy = x + sigma_k * noise.

The denoiser trains with residual learning at a fixed noise level: the
network output is the noise estimate and the clean image is input minus
output.  Checkpoints are self-describing: architecture, weights, the
descending noise-level table, and training metadata.
"""

from __future__ import annotations

import numpy as np
import torch

from .data import load_image_dir
from .models import DnCnn, NoiseCondScoreNet, build_model


class TrainingDiverged(RuntimeError):
    """The loss went non-finite."""


def _load_training_images(config, rng):
    if config.data_dir is None:
        raise ValueError("a data directory is required")
    return load_image_dir(config.data_dir)


class _PatchSampler:
    """Vectorized uniform patch sampling over reflection-padded images."""

    def __init__(self, images, patch_size, rng):
        if not images:
            raise ValueError("empty training set")
        if min(min(img.shape) for img in images) < patch_size:
            raise ValueError("patch size exceeds image size")
        pad = patch_size // 2
        padded = [np.pad(np.asarray(img, dtype=np.float32), pad, mode="reflect")
                  for img in images]
        shape = padded[0].shape
        if any(p.shape != shape for p in padded):
            padded = [p[: min(q.shape[0] for q in padded), : min(q.shape[1] for q in padded)]
                      for p in padded]
            shape = padded[0].shape
        self.stack = torch.from_numpy(np.stack(padded))
        self.patch = patch_size
        self.rng = rng
        self.positions = len(images) * max(shape[0] - patch_size + 1, 1) \
            * max(shape[1] - patch_size + 1, 1)

    def draw(self, count):
        n, rows, cols = self.stack.shape
        img = torch.from_numpy(self.rng.integers(0, n, count))
        r = torch.from_numpy(self.rng.integers(0, rows - self.patch + 1, count))
        c = torch.from_numpy(self.rng.integers(0, cols - self.patch + 1, count))
        ar = torch.arange(self.patch)
        rows_idx = r[:, None, None] + ar[None, :, None]
        cols_idx = c[:, None, None] + ar[None, None, :]
        return self.stack[img[:, None, None], rows_idx, cols_idx]


def _steps_per_epoch(images, config):
    # one epoch visits roughly every training pixel once
    total = sum(img.size for img in images)
    return max(1, int(np.ceil(total / (config.batch_size * config.patch_size**2))))


def _cosine_schedule(opt, config, steps_per_epoch):
    """Hold the peak rate for the first half, then anneal cosine-style."""
    total = max(config.epochs * steps_per_epoch, 1)
    hold = total // 2

    def factor(step):
        if step <= hold:
            return 1.0
        t = (step - hold) / max(total - hold, 1)
        floor = 1.0 / 150.0
        return floor + (1.0 - floor) * 0.5 * (1.0 + np.cos(np.pi * min(t, 1.0)))

    return torch.optim.lr_scheduler.LambdaLR(opt, factor)


def _refit_head(model, sampler, level_t, config, rng):
    """Exact least-squares refit of the per-level head.

    The raw prediction is linear in the head weights, so minimizing the
    score-matching objective over them (with the gradient-trained body and
    its output held as an offset) is a per-level normal-equations solve.
    Gradient noise in the head then scales as sqrt(params/samples); the
    sample count is chosen so the residual sits well below the truncation
    of the served score's accuracy, and no backward passes are needed.
    """
    n_levels, n_feats = model.head.shape
    xtx = torch.zeros(n_levels, n_feats, n_feats, dtype=torch.float64)
    xty = torch.zeros(n_levels, n_feats, dtype=torch.float64)
    with torch.no_grad():
        for _ in range(max(config.refit_batches, 1)):
            x = sampler.draw(config.batch_size)
            sigma = level_t[torch.from_numpy(rng.integers(0, level_t.numel(), x.shape[0]))]
            sb = sigma.view(-1, 1, 1)
            noise = torch.randn_like(x)
            h, feats, idx = model.features(x + sb * noise, sigma)
            pixels = h.shape[2] * h.shape[3]
            offset = model.out(h).squeeze(1)
            rows = feats.permute(0, 2, 3, 1).reshape(-1, n_feats).to(torch.float64)
            target = (-noise - offset).reshape(-1).to(torch.float64)
            row_level = idx.repeat_interleave(pixels)
            for k in torch.unique(row_level):
                sel = row_level == k
                r = rows[sel]
                xtx[k] += r.T @ r
                xty[k] += r.T @ target[sel]
        eye = torch.eye(n_feats, dtype=torch.float64)
        for k in range(n_levels):
            beta = torch.linalg.solve(xtx[k] + 1e-7 * eye, xty[k])
            model.head[k].copy_(beta.to(torch.float32))


class _Ema:
    """Exponential moving average of the weights; averages out target noise."""

    def __init__(self, model, decay):
        self.decay = decay
        self.shadow = {k: v.detach().clone() for k, v in model.state_dict().items()}
        self._backup = None

    def update(self, model):
        if self.decay <= 0:
            return
        with torch.no_grad():
            for k, v in model.state_dict().items():
                if v.dtype.is_floating_point:
                    self.shadow[k].mul_(self.decay).add_(v, alpha=1.0 - self.decay)
                else:
                    self.shadow[k].copy_(v)

    def copy_to(self, model):
        if self.decay <= 0:
            return
        self._backup = {k: v.detach().clone() for k, v in model.state_dict().items()}
        model.load_state_dict(self.shadow)

    def restore(self, model):
        if self.decay <= 0 or self._backup is None:
            return
        model.load_state_dict(self._backup)
        self._backup = None


def train_ncsn(config, images=None, epoch_callback=None):
    """Train the noise-conditional score network; returns a checkpoint dict."""
    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    if images is None:
        images = _load_training_images(config, rng)
    model = NoiseCondScoreNet(config.width, config.depth, config.kernel_size,
                              levels=config.noise_levels)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    levels = config.noise_levels
    sampler = _PatchSampler(images, config.patch_size, rng)
    steps = _steps_per_epoch(images, config)
    sched = _cosine_schedule(opt, config, steps)
    level_t = torch.tensor(levels, dtype=torch.float32)
    ema = _Ema(model, config.ema_decay)
    for epoch in range(config.epochs):
        for _ in range(steps):
            x = sampler.draw(config.batch_size)
            sigma = level_t[torch.from_numpy(rng.integers(0, len(levels), x.shape[0]))]
            sb = sigma.view(-1, 1, 1)
            noise = torch.randn_like(x)
            # regression target (x - x_noisy)/sigma^2 = -noise/sigma
            residual = model(x + sb * noise, sigma) + noise / sb
            if config.level_weighting == "sigma2":
                loss = torch.mean((sb * residual) ** 2)
            else:
                loss = torch.mean(residual**2)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            ema.update(model)
        if epoch_callback is not None:
            ema.copy_to(model)
            epoch_callback(epoch + 1, model)
            ema.restore(model)
    ema.copy_to(model)
    if config.epochs > 0:
        _refit_head(model, sampler, level_t, config, rng)
    checkpoint = make_checkpoint(model, config, kind="ncsn")
    if config.checkpoint_path:
        save_checkpoint(checkpoint, config.checkpoint_path)
    return checkpoint


def train_dncnn(config, images=None, epoch_callback=None):
    """Train the residual denoiser at config.dncnn_sigma; returns a checkpoint."""
    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    if images is None:
        images = _load_training_images(config, rng)
    model = DnCnn(config.width, max(config.depth, 3), config.kernel_size)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    sigma = config.dncnn_sigma
    sampler = _PatchSampler(images, config.patch_size, rng)
    steps = _steps_per_epoch(images, config)
    sched = _cosine_schedule(opt, config, steps)
    for epoch in range(config.epochs):
        for _ in range(steps):
            x = sampler.draw(config.batch_size)
            noise = sigma * torch.randn_like(x)
            out = model(x + noise)
            loss = torch.mean((out - noise) ** 2)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
        if epoch_callback is not None:
            epoch_callback(epoch + 1, model)
    model.eval()
    checkpoint = make_checkpoint(model, config, kind="dncnn")
    if config.checkpoint_path:
        save_checkpoint(checkpoint, config.checkpoint_path)
    return checkpoint


def ncsn_loss(model, x, sigma, noise):
    """The per-batch objective; zero for an oracle predicting the target."""
    target = -noise / sigma
    out = model(x + sigma * noise, sigma)
    return float(torch.mean((out - target) ** 2))


def make_checkpoint(model, config, kind):
    return {
        "format": "score-trainer-checkpoint-v1",
        "kind": kind,
        "arch": dict(model.arch),
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
        "noise_levels": list(config.noise_levels),
        "meta": {
            "epochs": config.epochs,
            "patch_size": config.patch_size,
            "learning_rate": config.learning_rate,
            "dncnn_sigma": config.dncnn_sigma,
            "served_output": "energy gradient (negated score)" if kind == "ncsn"
                             else "denoised image",
        },
    }


def save_checkpoint(checkpoint, path):
    torch.save(checkpoint, path)


def load_checkpoint(path):
    checkpoint = torch.load(path, map_location="cpu", weights_only=False)
    if checkpoint.get("format") != "score-trainer-checkpoint-v1":
        raise ValueError(f"{path}: not a score-trainer checkpoint")
    levels = checkpoint["noise_levels"]
    if any(b >= a for a, b in zip(levels[:-1], levels[1:])):
        raise ValueError("checkpoint noise-level table is not descending")
    model = build_model(checkpoint["arch"])
    model.load_state_dict(checkpoint["state_dict"])
    model.eval()
    return model, checkpoint


def infer_energy_grad(model, x32, sigma):
    """Served NCSN output: the energy gradient -s_theta, float32 in/out.

    The sign flip from score to energy gradient lives here (and therefore
    in the server), not in the client.
    """
    x = np.array(x32, dtype=np.float32, copy=True)
    with torch.no_grad():
        score = model(torch.from_numpy(x[None]), float(sigma))[0].numpy()
    return -score


def infer_denoised(model, x32, sigma_unused=0.0):
    """Served DnCNN output: input minus the predicted noise residual."""
    x = np.array(x32, dtype=np.float32, copy=True)
    with torch.no_grad():
        residual = model(torch.from_numpy(x[None]))[0].numpy()
    return x - residual
