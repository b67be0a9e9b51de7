"""Pluggable image priors.

Every prior exposes ``score_grad(x, sigma)`` returning the gradient of a
regularization energy h_sigma = -log p_sigma, where p_sigma is the prior
smoothed by a Gaussian of scale sigma.  Solvers uniformly descend
``g + h``, so providers return the negated log-density gradient.  Priors
with a computable energy set ``has_energy`` and expose ``energy(x, sigma)``
for posterior comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, median_filter
from scipy.special import logsumexp


@dataclass(frozen=True)
class NoiseSchedule:
    """Descending noise levels, each used for a fixed number of passes."""

    levels: tuple
    passes_per_level: int = 1

    def __post_init__(self):
        lv = tuple(float(s) for s in self.levels)
        if any(s <= 0 for s in lv):
            raise ValueError("noise levels must be positive")
        if any(nxt >= prev for prev, nxt in zip(lv[:-1], lv[1:])):
            raise ValueError("noise levels must be strictly decreasing")
        if self.passes_per_level < 1:
            raise ValueError("passes_per_level must be >= 1")
        object.__setattr__(self, "levels", lv)

    @property
    def total_iterations(self):
        return len(self.levels) * self.passes_per_level


def make_geometric_schedule(sigma_hi, sigma_lo, k, passes_per_level=1):
    """K geometrically spaced levels descending from sigma_hi to sigma_lo."""
    if not (sigma_hi > sigma_lo > 0):
        raise ValueError("need sigma_hi > sigma_lo > 0")
    if k < 2:
        raise ValueError("need at least two levels")
    t = np.arange(k) / (k - 1)
    levels = sigma_hi * (sigma_lo / sigma_hi) ** t
    return NoiseSchedule(levels=tuple(levels), passes_per_level=passes_per_level)


@dataclass(frozen=True)
class GmmPrior:
    """Pixelwise i.i.d. Gaussian mixture prior.

    Smoothing by N(0, sigma^2) keeps the mixture Gaussian: each component
    variance grows by sigma^2, so score and energy are exact closed forms.
    """

    weights: tuple
    means: tuple
    variances: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        if np.any(np.asarray(self.variances) <= 0):
            raise ValueError("variances must be positive")
        if not (len(self.weights) == len(self.means) == len(self.variances)):
            raise ValueError("component lists must have equal length")
        object.__setattr__(self, "weights", tuple(float(v) for v in self.weights))
        object.__setattr__(self, "means", tuple(float(v) for v in self.means))
        object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))


def default_test_prior():
    """Two equal components at 0.2 and 0.8 with tau = 0.1 (binary-ish images)."""
    return GmmPrior(weights=(0.5, 0.5), means=(0.2, 0.8), variances=(0.01, 0.01))


def _gmm_log_parts(prior, x, sigma):
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(prior.weights)
    mu = np.asarray(prior.means)
    v = np.asarray(prior.variances) + sigma * sigma
    diff = x[..., None] - mu
    logc = np.log(w) - 0.5 * np.log(2.0 * np.pi * v) - diff**2 / (2.0 * v)
    return diff, v, logc


def gmm_score_grad(prior, x, sigma=0.0):
    """Exact gradient of -log(p * N(0, sigma^2)) applied pixelwise."""
    diff, v, logc = _gmm_log_parts(prior, x, sigma)
    resp = np.exp(logc - logsumexp(logc, axis=-1, keepdims=True))
    return np.sum(resp * diff / v, axis=-1)


def gmm_energy(prior, x, sigma=0.0):
    """Total energy -sum_j log(sum_m w_m N(x_j; mu_m, tau_m^2 + sigma^2))."""
    _, _, logc = _gmm_log_parts(prior, x, sigma)
    return float(-np.sum(logsumexp(logc, axis=-1)))


def gmm_score_lipschitz(prior, sigma, lo=-0.25, hi=1.25, npts=4001):
    """Bound on |d(score)/dx| over [lo, hi] by a dense finite-difference scan."""
    grid = np.linspace(lo, hi, npts)
    s = gmm_score_grad(prior, grid, sigma)
    return float(np.max(np.abs(np.diff(s))) / (grid[1] - grid[0]))


class ScoreProvider:
    """Interface for score-based priors; see module docstring for the sign."""

    has_energy = False

    def score_grad(self, x, sigma):
        raise NotImplementedError

    def energy(self, x, sigma):
        raise NotImplementedError


class GmmScoreProvider(ScoreProvider):
    """Analytic provider over a GmmPrior; exposes the exact energy."""

    has_energy = True

    def __init__(self, prior=None):
        self.prior = prior if prior is not None else default_test_prior()

    def score_grad(self, x, sigma):
        return gmm_score_grad(self.prior, x, sigma)

    def energy(self, x, sigma):
        return gmm_energy(self.prior, x, sigma)


class ZeroScoreProvider(ScoreProvider):
    """Flat prior: zero score, zero energy.  Degenerates solvers to plain WF."""

    has_energy = True

    def score_grad(self, x, sigma):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def energy(self, x, sigma):
        return 0.0


def huber(t, delta):
    """Huber penalty: quadratic inside |t| <= delta, linear outside."""
    t = np.abs(t)
    return np.where(t <= delta, 0.5 * t * t, delta * (t - 0.5 * delta))


def huber_tv_energy(x, huber_delta, lam):
    """Smoothed TV: lam * sum of Huber penalties of 4-neighbor differences.

    Forward differences inside the grid; reflective boundary, so edge
    differences vanish and contribute nothing.
    """
    x = np.asarray(x, dtype=np.float64)
    dv = np.diff(x, axis=0)
    dh = np.diff(x, axis=1)
    return float(lam * (np.sum(huber(dv, huber_delta)) + np.sum(huber(dh, huber_delta))))


def huber_tv_grad(x, huber_delta, lam):
    """Gradient of huber_tv_energy."""
    if not huber_delta > 0:
        raise ValueError("huber_delta must be positive")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    dv = np.clip(np.diff(x, axis=0), -huber_delta, huber_delta)
    dh = np.clip(np.diff(x, axis=1), -huber_delta, huber_delta)
    g[1:, :] += dv
    g[:-1, :] -= dv
    g[:, 1:] += dh
    g[:, :-1] -= dh
    return lam * g


def _div(py, px):
    d = np.zeros_like(py)
    d[:-1, :] += py[:-1, :]
    d[1:, :] -= py[:-1, :]
    d[:, :-1] += px[:, :-1]
    d[:, 1:] -= px[:, :-1]
    return d


def _fwd_grad(u):
    gy = np.zeros_like(u)
    gx = np.zeros_like(u)
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    return gy, gx


def _tv_prox(x, weight, iters=30):
    """Chambolle dual iteration for min_u ||u - x||^2/2 + weight*TV(u).

    Fixed iteration count; tau = 1/8 guarantees convergence of the dual
    sequence for the 4-neighbor discrete gradient.
    """
    py = np.zeros_like(x)
    px = np.zeros_like(x)
    tau = 0.125
    for _ in range(iters):
        gy, gx = _fwd_grad(_div(py, px) - x / weight)
        denom = 1.0 + tau * np.sqrt(gy**2 + gx**2)
        py = (py + tau * gy) / denom
        px = (px + tau * gx) / denom
    return x - weight * _div(py, px)


class Denoiser:
    """Interface: denoise(x, strength) -> array of x's shape."""

    def denoise(self, x, strength):
        raise NotImplementedError


class BuiltinDenoiser(Denoiser):
    """Desk-scale denoisers: gaussian blur, 3x3 median, or a TV prox.

    ``strength`` is the denoiser-scaling knob: the output is the blend
    x + strength * (kernel(x) - x), so strength 0 is the identity.
    """

    KINDS = ("gaussian", "median", "tvprox")

    def __init__(self, kind="gaussian", width=1.0, tv_weight=0.1, tv_iters=30):
        if kind not in self.KINDS:
            raise ValueError(f"unknown denoiser kind {kind!r}")
        self.kind = kind
        self.width = width
        self.tv_weight = tv_weight
        self.tv_iters = tv_iters

    def _kernel(self, x):
        if self.kind == "gaussian":
            return gaussian_filter(x, self.width)
        if self.kind == "median":
            return median_filter(x, size=3, mode="reflect")
        return _tv_prox(x, self.tv_weight, self.tv_iters)

    def denoise(self, x, strength=1.0):
        if strength < 0:
            raise ValueError("strength must be nonnegative")
        x = np.asarray(x, dtype=np.float64)
        if strength == 0.0:
            return x.copy()
        return x + strength * (self._kernel(x) - x)


class IdentityDenoiser(Denoiser):
    """Returns the input unchanged; makes PnP/RED degenerate to plain WF."""

    def denoise(self, x, strength=1.0):
        return np.asarray(x, dtype=np.float64).copy()
