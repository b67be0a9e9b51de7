"""Exact Poisson-Gaussian negative log-likelihood.

The per-measurement NLL for a mean intensity ``u`` and a (real-valued,
possibly negative) count ``y`` is

    u + log(2 pi sigma^2)/2 - log s(u, y),
    s(a, b) = sum_n a^n/n! * exp(-((b - n)/(sqrt(2) sigma))^2),

and the derivative of the per-measurement NLL with respect to u is

    phi(u; y) = 1 - s(u, y - 1)/s(u, y),

because d/da s(a, b) = s(a, b - 1).  The infinite sum is truncated at
``n+ = ceil(n* + delta*sigma)`` where n* estimates the argmax of the
summand; everything is evaluated in log domain so counts up to 1e6 neither
overflow nor underflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, lambertw, logsumexp

_SQRT2 = np.sqrt(2.0)


class TruncationError(RuntimeError):
    """The series cutoff exceeded the policy's hard cap."""


@dataclass(frozen=True)
class TruncationPolicy:
    """delta-controlled truncation of the photon-count series."""

    delta: float = 5.0
    hard_cap: int = 100_000

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.hard_cap < 1:
            raise ValueError("hard_cap must be >= 1")


DEFAULT_TRUNCATION = TruncationPolicy()


@dataclass(frozen=True)
class PgNoiseModel:
    """Noise parameters for the mixed Poisson-Gaussian likelihood.

    ``poisson_fallback`` optionally swaps the PG gradient factor for the
    plain Poisson one wherever y >= the threshold.  Off by default; turning
    it on changes the reconstruction, not just its speed.
    """

    sigma: float
    b_bar: np.ndarray
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)
    poisson_fallback: float | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        b = np.atleast_1d(np.asarray(self.b_bar, dtype=np.float64))
        if np.any(b < 0):
            raise ValueError("b_bar must be nonnegative")
        object.__setattr__(self, "b_bar", b)


def lambert_peak(a, b, sigma):
    """Location n* of the largest term of s(a, b).

    Stationarity of ``n log a - lgamma(n+1) - ((b-n)^2)/(2 sigma^2)`` gives
    n* = sigma^2 W((a/sigma^2) exp(b/sigma^2)) with W the Lambert function,
    evaluated through its log-domain asymptotic expansion when the argument
    would overflow.  Degenerate evaluations fall back to max(b, a), which
    is always an upper bound for the peak location.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    s2 = sigma * sigma
    ell = np.log(a / s2) + b / s2  # log of the Lambert argument
    if ell < 600.0:
        w = float(lambertw(np.exp(ell)).real)
    else:
        logl = np.log(ell)
        w = ell - logl + logl / ell + logl * (logl - 2.0) / (2.0 * ell * ell)
    n_star = s2 * w
    if not np.isfinite(n_star):
        return float(max(b, a))
    return float(max(n_star, 0.0))


def series_cutoff(a, b, sigma, policy=DEFAULT_TRUNCATION):
    """Truncation index n+ = ceil(n* + delta*sigma), at least 0."""
    n_star = lambert_peak(a, b, sigma) if a > 0 else 0.0
    n_plus = int(np.ceil(n_star + policy.delta * sigma))
    n_plus = max(n_plus, 0)
    if n_plus > policy.hard_cap:
        raise TruncationError(
            f"series cutoff {n_plus} exceeds hard cap {policy.hard_cap}"
        )
    return n_plus


def log_s(a, b, sigma, policy=DEFAULT_TRUNCATION):
    """log of the truncated series s(a, b); finite for all a >= 0, real b."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    if a == 0.0:
        return -((b / (_SQRT2 * sigma)) ** 2)
    n_plus = series_cutoff(a, b, sigma, policy)
    n = np.arange(n_plus + 1)
    terms = n * np.log(a) - gammaln(n + 1) - ((b - n) / (_SQRT2 * sigma)) ** 2
    return float(logsumexp(terms))


def log_s_vec(a, b, sigma, policy=DEFAULT_TRUNCATION, _shift=0.0):
    """Vectorized log_s over measurement arrays a, b (same length).

    Columns are grouped into power-of-two cutoff bands so each term table
    is at most twice the work its columns need; within a band every column
    is summed to the band's largest cutoff (extra terms past a column's own
    cutoff only tighten the truncation).  ``_shift`` subtracts a constant
    from b: the gradient factor needs s(a, b-1) over the same cutoffs as
    s(a, b).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("a and b must have the same shape")
    if np.any(a < 0):
        raise ValueError("a must be nonnegative")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("series arguments must be finite")
    out = np.empty(a.shape)
    pos = a > 0
    bz = b[~pos] - _shift
    out[~pos] = -((bz / (_SQRT2 * sigma)) ** 2)
    if not np.any(pos):
        return out
    ap, bp = a[pos], b[pos]
    cut = _cutoff_vec(ap, bp, sigma, policy)
    vals = np.empty(ap.size)
    chunk_budget = 2_000_000
    bands = np.log2(cut + 2.0).astype(np.int64)
    for band in np.unique(bands):
        idx = np.nonzero(bands == band)[0]
        nmax = int(cut[idx].max())
        step = max(1, chunk_budget // (nmax + 1))
        for start in range(0, idx.size, step):
            sl = idx[start : start + step]
            vals[sl] = _log_s_block(ap[sl], bp[sl] - _shift, nmax, sigma)
    out[pos] = vals
    return out


def _cutoff_vec(a, b, sigma, policy):
    s2 = sigma * sigma
    ell = np.log(a / s2) + b / s2
    w = np.empty_like(ell)
    small = ell < 600.0
    w[small] = lambertw(np.exp(ell[small])).real
    big = ~small
    if np.any(big):
        lb = ell[big]
        logl = np.log(lb)
        w[big] = lb - logl + logl / lb + logl * (logl - 2.0) / (2.0 * lb * lb)
    n_star = s2 * w
    n_star = np.where(np.isfinite(n_star), n_star, np.maximum(a, b))
    n_star = np.maximum(n_star, 0.0)
    cut = np.ceil(n_star + policy.delta * sigma).astype(np.int64)
    cut = np.maximum(cut, 0)
    if np.any(cut > policy.hard_cap):
        worst = int(cut.max())
        raise TruncationError(
            f"series cutoff {worst} exceeds hard cap {policy.hard_cap}"
        )
    return cut


def _log_s_block(a, b, nmax, sigma):
    n = np.arange(nmax + 1)[:, None]
    terms = (
        n * np.log(a)[None, :]
        - gammaln(n + 1)
        - ((b[None, :] - n) / (_SQRT2 * sigma)) ** 2
    )
    peak = terms.max(axis=0)
    return peak + np.log(np.sum(np.exp(terms - peak), axis=0))


def phi(u, v, sigma, policy=DEFAULT_TRUNCATION):
    """Gradient factor phi(u; v) = 1 - s(u, v-1)/s(u, v); always <= 1."""
    return 1.0 - np.exp(log_s(u, v - 1.0, sigma, policy) - log_s(u, v, sigma, policy))


def phi_vec(u, y, sigma, policy=DEFAULT_TRUNCATION):
    """Vectorized phi over measurement arrays."""
    num = log_s_vec(u, y, sigma, policy, _shift=1.0)
    den = log_s_vec(u, y, sigma, policy)
    return 1.0 - np.exp(num - den)


def nll_pg_terms(u, y, model):
    """Per-measurement PG negative log-likelihood terms."""
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(u < 0):
        raise ValueError("intensities must be nonnegative")
    sigma = model.sigma
    return (
        u
        + 0.5 * np.log(2.0 * np.pi * sigma * sigma)
        - log_s_vec(u, y, sigma, model.truncation)
    )


def nll_pg(u, y, model):
    """Total PG negative log-likelihood; u already includes the background."""
    return float(np.sum(nll_pg_terms(u, y, model)))


def nll_gaussian(u, y):
    """Squared-residual Gaussian objective ||y - u||^2 (u includes b_bar)."""
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(u < 0):
        raise ValueError("intensities must be nonnegative")
    r = y - u
    return float(np.dot(r, r))


def nll_poisson(u, y):
    """Poisson objective sum(u) - y' log(u); u must be positive where y != 0."""
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(u < 0):
        raise ValueError("intensities must be nonnegative")
    active = y != 0
    if np.any(u[active] <= 0):
        raise ValueError("log of nonpositive intensity")
    return float(np.sum(u) - np.dot(y[active], np.log(u[active])))
