"""Holographic forward model.

The measurement operator is an oversampled, scaled 2-D DFT of a horizontal
strip ``[x | 0 | r]``: the unknown n-by-n sample, an equally sized blank
block, and a known binary reference image.  The strip sits in the corner of
a zero-padded plane of shape ``(oversample*n, oversample*3n)``, and the DFT
uses the orthonormal (unitary) convention, so the linear part of the
operator is an exact isometry scaled by ``alpha``.

Splitting the strip gives an affine map: ``forward(x) = L x + c`` where
``L`` acts on the sample block and ``c`` is the (cached) field of the
reference alone.  Measurements are squared magnitudes corrupted by Poisson
shot noise plus additive Gaussian read noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Shape of an image or field does not match the operator."""


def make_reference(n, rng=None, density=0.15):
    """Draw a binary {0,1} random reference image of shape (n, n).

    ``density`` is the fraction of ones.  Sparse references keep the mean
    photon count of the reference block comparable to that of typical
    test samples.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    elif not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return (rng.random((n, n)) < density).astype(np.float64)


@dataclass(frozen=True)
class HolographicOperator:
    """Affine measurement operator with cached offset field and norms.

    Immutable after construction; safe to share across threads.
    """

    n: int
    oversample: int
    alpha: float
    reference: np.ndarray
    rows: int = field(init=False, repr=False)
    cols: int = field(init=False, repr=False)
    m: int = field(init=False)
    offset: np.ndarray = field(init=False, repr=False)
    spec_norm: float = field(init=False, repr=False)
    inf_norm: float = field(init=False, repr=False)

    def __post_init__(self):
        rows = self.oversample * self.n
        cols = self.oversample * 3 * self.n
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "m", rows * cols)
        plane = np.zeros((rows, cols))
        plane[: self.n, 2 * self.n : 3 * self.n] = self.reference
        c = self.alpha * np.fft.fft2(plane, norm="ortho").ravel()
        c.flags.writeable = False
        object.__setattr__(self, "offset", c)
        object.__setattr__(self, "spec_norm", _power_iteration_norm(self))
        # every row of L has n^2 entries of magnitude alpha/sqrt(P)
        object.__setattr__(
            self, "inf_norm", self.alpha * self.n**2 / np.sqrt(self.m)
        )

    # -- affine pieces ----------------------------------------------------

    def apply_linear(self, x):
        """Field of the sample block alone (no reference offset)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n, self.n):
            raise DimensionError(
                f"expected image of shape {(self.n, self.n)}, got {x.shape}"
            )
        plane = np.zeros((self.rows, self.cols))
        plane[: self.n, : self.n] = x
        return self.alpha * np.fft.fft2(plane, norm="ortho").ravel()

    def forward(self, x):
        """Complex field L x + c, flattened to length m."""
        return self.apply_linear(x) + self.offset

    def adjoint(self, f):
        """Real part of L' f restricted to the sample block.

        Satisfies Re<L x, f> = <x, adjoint(f)> for every real x.
        """
        f = np.asarray(f)
        if f.shape != (self.m,):
            raise DimensionError(f"expected field of length {self.m}, got {f.shape}")
        plane = np.fft.ifft2(f.reshape(self.rows, self.cols), norm="ortho")
        return self.alpha * plane[: self.n, : self.n].real

    def intensity(self, x):
        """Elementwise |forward(x)|^2, length m, nonnegative."""
        f = self.forward(x)
        return (f.real**2 + f.imag**2)


@dataclass(frozen=True)
class MeasurementSet:
    """Noisy squared-magnitude counts with their noise parameters."""

    y: np.ndarray
    b_bar: np.ndarray
    sigma: float

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        b = np.asarray(self.b_bar, dtype=np.float64)
        if b.ndim == 0:
            b = np.full(y.shape, float(b))
        if b.shape != y.shape:
            raise DimensionError("y and b_bar lengths differ")
        if np.any(b < 0):
            raise ValueError("b_bar must be nonnegative")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "b_bar", b)

    @property
    def m(self):
        return self.y.size


def make_operator(n, alpha, oversample, r):
    """Build the holographic operator for an n-by-n sample.

    ``r`` must be an n-by-n binary {0,1} image.  Raises on dimension or
    parameter violations.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (n, n):
        raise DimensionError(f"reference shape {r.shape} does not match n={n}")
    if not np.all((r == 0) | (r == 1)):
        raise ValueError("reference must be binary {0,1}")
    return HolographicOperator(n=n, oversample=int(oversample), alpha=float(alpha), reference=r)


def apply_forward(op, x):
    return op.forward(x)


def apply_adjoint(op, f):
    return op.adjoint(f)


def intensity(op, x):
    return op.intensity(x)


def operator_norms(op):
    """(spectral norm, infinity norm) of the linear part."""
    return op.spec_norm, op.inf_norm


def simulate_measurements(op, x, b_bar, sigma, seed):
    """Draw y ~ Poisson(|forward(x)|^2 + b_bar) + Normal(0, sigma^2).

    ``seed`` is an int or a numpy Generator; a fixed seed reproduces the
    draw exactly.  ``b_bar`` may be a scalar or a length-m array.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    b = np.asarray(b_bar, dtype=np.float64)
    if b.ndim == 0:
        b = np.full(op.m, float(b))
    if b.shape != (op.m,):
        raise DimensionError("b_bar length does not match operator")
    if np.any(b < 0):
        raise ValueError("b_bar must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = op.intensity(x) + b
    y = rng.poisson(u).astype(np.float64) + rng.normal(0.0, sigma, op.m)
    return MeasurementSet(y=y, b_bar=b, sigma=float(sigma))


def _power_iteration_norm(op, iters=30, tol=1e-8):
    """Largest singular value of the linear part by power iteration.

    Iterates v <- L'L v with Rayleigh-quotient stopping at relative change
    below ``tol``.  For this operator L'L = alpha^2 I, so convergence is
    immediate; the generic loop keeps the estimate honest for any variant.
    """
    v = np.ones((op.n, op.n))
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(iters):
        w = op.adjoint(op.apply_linear(v))
        lam = float(np.vdot(v, w).real)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        if prev > 0 and abs(lam - prev) <= tol * prev:
            prev = lam
            break
        prev = lam
    return float(np.sqrt(prev))
