"""Wirtinger gradients, Lipschitz constants, and step-size machinery.

All three likelihoods share the chain rule through the squared magnitude of
the affine field f = L x + c: the gradient is 2 Re{L'(w . f)} with a
likelihood-specific real weight vector w.  The reference offset c is part
of the field; the adjoint applies to the sample block only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .likelihood import nll_pg, phi_vec

OVERFLOW_EXPONENT = 700.0


class LineSearchError(RuntimeError):
    """Backtracking failed; the supplied direction is not a descent direction."""


@dataclass(frozen=True)
class StepPolicy:
    """Step-size rule: 'fixed', 'lipschitz', or 'backtracking'."""

    kind: str = "backtracking"
    mu: float = 1.0            # fixed step
    safety: float = 0.9        # lipschitz: step = safety / L
    armijo_c: float = 1e-4
    shrink: float = 0.5
    mu_init: float = 1.0
    max_shrinks: int = 60

    def __post_init__(self):
        if self.kind not in ("fixed", "lipschitz", "backtracking"):
            raise ValueError(f"unknown step policy {self.kind!r}")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not 0 < self.safety < 1:
            raise ValueError("safety must lie in (0, 1)")


@dataclass(frozen=True)
class LipschitzReport:
    """Constants backing a Lipschitz step size, for the run trace."""

    mu_phi: float
    l_pg: float
    y_max: float
    c_bound: float
    spec_norm: float
    inf_norm: float

    @property
    def overflowed(self):
        return not np.isfinite(self.l_pg)


def grad_pg(op, x, y, model):
    """Gradient of the PG likelihood: 2 Re{L'(phi.(|f|^2 + b; y) . f)}."""
    f = op.forward(x)
    u = f.real**2 + f.imag**2 + model.b_bar
    w = phi_vec(u, np.asarray(y, dtype=np.float64), model.sigma, model.truncation)
    if model.poisson_fallback is not None:
        big = np.asarray(y) >= model.poisson_fallback
        if np.any(big):
            w = np.where(big, 1.0 - np.asarray(y) / u, w)
    return 2.0 * op.adjoint(w * f)


def grad_gaussian(op, x, y, b_bar):
    """Gradient of ||y - b - |f|^2||^2: 4 Re{L'((|f|^2 - y + b) . f)}."""
    f = op.forward(x)
    u = f.real**2 + f.imag**2 + np.asarray(b_bar, dtype=np.float64)
    return 4.0 * op.adjoint((u - np.asarray(y, dtype=np.float64)) * f)


def grad_poisson(op, x, y, b_bar):
    """Gradient of the Poisson likelihood: 2 Re{L'((1 - y/(|f|^2+b)) . f)}."""
    f = op.forward(x)
    u = f.real**2 + f.imag**2 + np.asarray(b_bar, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(u[y != 0] <= 0):
        raise ZeroDivisionError("zero intensity at a measured count")
    w = np.ones_like(u)
    nz = y != 0
    w[nz] -= y[nz] / u[nz]
    return 2.0 * op.adjoint(w * f)


def lemma1_mu(sigma, y_max):
    """Slope bound mu = (1 - e^{-1/sigma^2}) e^{(2 y_max - 1)/sigma^2}.

    mu is the sharp bound on |d phi/du| -- the curvature of the
    per-measurement objective, attained in the limit u -> 0+ -- so phi is
    Lipschitz with constant mu.  Returns +inf when the exponent would
    overflow double precision.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    s2 = sigma * sigma
    expo = (2.0 * y_max - 1.0) / s2
    if expo > OVERFLOW_EXPONENT:
        return np.inf
    return float((1.0 - np.exp(-1.0 / s2)) * np.exp(expo))


def theorem1_l(spec_norm, inf_norm, c_bound, sigma, y_max):
    """Two-term Lipschitz constant of the PG gradient.

    4 C^2 |A|_2^2 |A|_inf^2 mu + 2 |A|_2^2 |1 - C^2 |A|_inf^2 mu| with mu
    from lemma1_mu; propagates the +inf overflow sentinel.
    """
    if not (spec_norm > 0 and inf_norm > 0):
        raise ValueError("operator norms must be positive")
    mu = lemma1_mu(sigma, y_max)
    if not np.isfinite(mu):
        return np.inf
    s2 = spec_norm * spec_norm
    i2 = inf_norm * inf_norm
    c2 = c_bound * c_bound
    return float(4.0 * c2 * s2 * i2 * mu + 2.0 * s2 * abs(1.0 - c2 * i2 * mu))


def lipschitz_report(op, meas, c_bound=1.0):
    """Assemble the Lemma-1/Theorem-1 constants for an instance."""
    y_max = float(np.max(meas.y))
    return LipschitzReport(
        mu_phi=lemma1_mu(meas.sigma, y_max),
        l_pg=theorem1_l(op.spec_norm, op.inf_norm, c_bound, meas.sigma, y_max),
        y_max=y_max,
        c_bound=c_bound,
        spec_norm=op.spec_norm,
        inf_norm=op.inf_norm,
    )


def backtracking_step(f, x, d, policy=StepPolicy(), fx=None, slope=None):
    """Largest mu = mu_init * shrink^k satisfying the Armijo condition.

    ``d`` must be a descent direction; ``slope`` is <grad f(x), d> and
    defaults to -||d||^2, exact whenever d is the negative gradient of f.
    Raises LineSearchError after ``max_shrinks`` failures.
    """
    if slope is None:
        slope = -float(np.vdot(d, d).real)
    if not slope < 0:
        raise LineSearchError("not a descent direction")
    if fx is None:
        fx = f(x)
    mu = policy.mu_init
    for _ in range(policy.max_shrinks + 1):
        if f(x + mu * d) <= fx + policy.armijo_c * mu * slope:
            return mu
        mu *= policy.shrink
    raise LineSearchError(
        f"Armijo condition unmet after {policy.max_shrinks} shrinks"
    )


def finite_diff_grad(f, x, h=1e-5):
    """Central-difference gradient oracle, one coordinate at a time."""
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = g.ravel()
    xf = x.ravel()
    for j in range(xf.size):
        step = np.zeros_like(xf)
        step[j] = h
        flat[j] = (f((xf + step).reshape(x.shape)) - f((xf - step).reshape(x.shape))) / (2 * h)
    return g


def pg_objective(op, meas, model):
    """Closure evaluating the PG likelihood of an image."""

    def value(x):
        f = op.forward(x)
        u = f.real**2 + f.imag**2 + model.b_bar
        return nll_pg(u, meas.y, model)

    return value
