"""Reconstruction algorithms.

All solvers minimize a likelihood g (Gaussian, Poisson, or exact
Poisson-Gaussian) over the box [0, C], optionally plus a prior term:
a score provider (gradient of an energy), a plug-and-play denoiser, or an
explicit regularizer gradient.  Each run returns a SolverRun carrying the
final image and a per-iteration trace; non-finite iterates abort with the
offending iteration index.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .gradients import (
    StepPolicy,
    backtracking_step,
    grad_gaussian,
    grad_pg,
    grad_poisson,
    lipschitz_report,
)
from .likelihood import PgNoiseModel, nll_gaussian, nll_pg, nll_poisson, phi_vec
from .metrics import nrmse
from .priors import NoiseSchedule, make_geometric_schedule


class SolverAbort(RuntimeError):
    """A solver hit a non-finite iterate or exhausted its budget."""

    def __init__(self, message, iteration, run=None):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration
        self.run = run


@dataclass
class SolverConfig:
    """Shared solver knobs; solvers read the fields they need."""

    likelihood: str = "pg"                 # gaussian | poisson | pg
    step: StepPolicy = field(default_factory=StepPolicy)
    epsilon: float = 1.0                   # score solvers: mu = epsilon * sigma_k^2
    schedule: NoiseSchedule | None = None
    c_bound: float = 1.0
    gamma_mode: str | float = "posterior_select"
    rho: float = 1.0
    beta: float = 0.5
    inner_t: int = 1
    outer_k: int = 50
    max_iters: int = 50
    max_seconds: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.likelihood not in ("gaussian", "poisson", "pg"):
            raise ValueError(f"unknown likelihood {self.likelihood!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if isinstance(self.gamma_mode, (int, float)) and not 0 <= self.gamma_mode <= 1:
            raise ValueError("fixed gamma must lie in [0, 1]")

    def resolved_schedule(self):
        if self.schedule is not None:
            return self.schedule
        return make_geometric_schedule(0.1, 0.005, 20, passes_per_level=10)


@dataclass
class SolverRun:
    """Final image plus the per-iteration trace of a solver run."""

    x: np.ndarray
    trace: dict
    wall_s: float
    meta: dict

    @property
    def iterations(self):
        return len(self.trace.get("objective", ()))


@dataclass(frozen=True)
class DdpmSchedule:
    """Linear-beta DDPM variance schedule with cached products."""

    t_steps: int
    betas: np.ndarray
    use_sigma_t: bool = False
    alphas: np.ndarray = field(init=False, repr=False)
    abar: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.size != self.t_steps:
            raise ValueError("betas length must equal t_steps")
        if np.any(b <= 0) or np.any(b >= 1):
            raise ValueError("betas must lie in (0, 1)")
        if np.any(np.diff(b) < 0):
            raise ValueError("betas must be ascending")
        a = 1.0 - b
        abar = np.cumprod(a)
        if np.any(np.diff(abar) >= 0):
            raise ValueError("cumulative alpha products must strictly decrease")
        object.__setattr__(self, "betas", b)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "abar", abar)


def make_ddpm_schedule(t_steps=100, beta1=1e-4, beta_t=0.3, use_sigma_t=False):
    betas = np.linspace(beta1, beta_t, t_steps)
    return DdpmSchedule(t_steps=t_steps, betas=betas, use_sigma_t=use_sigma_t)


# -- shared plumbing -------------------------------------------------------


def _make_problem(op, meas, config):
    """(value, grad) closures for the configured likelihood."""
    y = meas.y
    b = meas.b_bar
    if config.likelihood == "pg":
        model = PgNoiseModel(sigma=meas.sigma, b_bar=b)

        def value(x):
            f = op.forward(x)
            return nll_pg(f.real**2 + f.imag**2 + b, y, model)

        def grad(x):
            return grad_pg(op, x, y, model)

    elif config.likelihood == "poisson":

        def value(x):
            f = op.forward(x)
            return nll_poisson(f.real**2 + f.imag**2 + b, y)

        def grad(x):
            return grad_poisson(op, x, y, b)

    else:

        def value(x):
            f = op.forward(x)
            return nll_gaussian(f.real**2 + f.imag**2 + b, y)

        def grad(x):
            return grad_gaussian(op, x, y, b)

    return value, grad


class _Budget:
    def __init__(self, max_seconds):
        self.t0 = time.perf_counter()
        self.max_seconds = max_seconds

    def check(self, iteration):
        if self.max_seconds is not None and self.elapsed() > self.max_seconds:
            raise SolverAbort("time budget exhausted", iteration)

    def elapsed(self):
        return time.perf_counter() - self.t0


def _require_finite(arr, what, iteration):
    if not np.all(np.isfinite(arr)):
        raise SolverAbort(f"non-finite {what}", iteration)


def _default_x0(op, config):
    return np.full((op.n, op.n), 0.5 * config.c_bound)


def _clip(x, c_bound):
    return np.clip(x, 0.0, c_bound)


def _split_reg(reg):
    """Accept None, a gradient callable, or an (energy, gradient) pair."""
    if reg is None:
        return None, None
    if isinstance(reg, tuple):
        return reg
    return None, reg


def _fixed_or_search(config, value, x, g, fx, l_const=None):
    """Step size for a plain descent step with direction -g."""
    kind = config.step.kind
    if kind == "fixed":
        return config.step.mu
    if kind == "lipschitz" and l_const is not None and np.isfinite(l_const):
        return config.step.safety / l_const
    return backtracking_step(value, x, -g, config.step, fx=fx)


def _record_common(trace, obj, mu, x, x_true):
    trace.setdefault("objective", []).append(obj)
    trace.setdefault("step", []).append(mu)
    if x_true is not None:
        trace.setdefault("nrmse", []).append(nrmse(phase_correct(x, x_true), x_true))


# -- gradient-descent family ----------------------------------------------


def wf(op, meas, config, reg_grad=None, x0=None, x_true=None):
    """Wirtinger flow: projected descent on the configured likelihood.

    ``reg_grad`` may be a gradient callable or an (energy, gradient) pair;
    the energy, when given, joins the line-search objective.
    """
    reg_energy, reg_g = _split_reg(reg_grad)
    value, grad = _make_problem(op, meas, config)
    if reg_energy is not None:
        base_value = value
        value = lambda x: base_value(x) + reg_energy(x)
    l_const = None
    meta = {"solver": "wf", "likelihood": config.likelihood}
    if config.step.kind == "lipschitz":
        if config.likelihood == "pg":
            report = lipschitz_report(op, meas, config.c_bound)
            l_const = report.l_pg
            meta["lipschitz"] = report
            if report.overflowed:
                meta["step_fallback"] = "backtracking"
        else:
            meta["step_fallback"] = "backtracking"
    x = _clip(np.asarray(x0, dtype=np.float64) if x0 is not None else _default_x0(op, config), config.c_bound)
    trace = {}
    budget = _Budget(config.max_seconds)
    for k in range(config.max_iters):
        budget.check(k)
        g = grad(x)
        if reg_g is not None:
            g = g + reg_g(x)
        _require_finite(g, "gradient", k)
        fx = value(x)
        if not np.isfinite(fx):
            raise SolverAbort("non-finite objective", k)
        mu = _fixed_or_search(config, value, x, g, fx, l_const)
        x = _clip(x - mu * g, config.c_bound)
        _require_finite(x, "iterate", k)
        _record_common(trace, value(x), mu, x, x_true)
    return SolverRun(x=x, trace=trace, wall_s=budget.elapsed(), meta=meta)


def wfsd(op, meas, config, provider, x0=None, x_true=None):
    """Annealed score-regularized WF: mu = epsilon * sigma_k^2 per level."""
    value, grad = _make_problem(op, meas, config)
    schedule = config.resolved_schedule()
    x = _clip(np.asarray(x0, dtype=np.float64) if x0 is not None else _default_x0(op, config), config.c_bound)
    trace = {}
    meta = {"solver": "wfsd", "likelihood": config.likelihood,
            "levels": len(schedule.levels), "passes_per_level": schedule.passes_per_level}
    budget = _Budget(config.max_seconds)
    it = 0
    for sigma_k in schedule.levels:
        mu = config.epsilon * sigma_k * sigma_k
        for _ in range(schedule.passes_per_level):
            budget.check(it)
            g = grad(x) + provider.score_grad(x, sigma_k)
            _require_finite(g, "gradient", it)
            x = _clip(x - mu * g, config.c_bound)
            _require_finite(x, "iterate", it)
            obj = value(x)
            _record_common(trace, obj, mu, x, x_true)
            trace.setdefault("sigma_k", []).append(sigma_k)
            if provider.has_energy:
                trace.setdefault("prior_energy", []).append(provider.energy(x, sigma_k))
            it += 1
    return SolverRun(x=x, trace=trace, wall_s=budget.elapsed(), meta=meta)


def awfs(op, meas, config, provider, x0=None, x_true=None):
    """Accelerated WF with score prior: momentum candidates z and v.

    Per inner iteration both the momentum step (from the extrapolated point
    w) and the plain step (from x) are formed; gamma picks between them.
    In posterior_select mode gamma is 0 or 1 according to which projected
    candidate has the lower posterior objective, evaluated as likelihood
    plus prior energy when the provider exposes one.
    """
    value, grad = _make_problem(op, meas, config)
    schedule = config.resolved_schedule()
    select = config.gamma_mode == "posterior_select"
    if select and provider.has_energy:
        gamma_rule = "likelihood+energy"
    elif select:
        gamma_rule = "likelihood"
    else:
        gamma_rule = f"fixed({float(config.gamma_mode)})"

    def posterior(x, sigma_k):
        if provider.has_energy:
            return value(x) + provider.energy(x, sigma_k)
        return value(x)

    x = _clip(np.asarray(x0, dtype=np.float64) if x0 is not None else _default_x0(op, config), config.c_bound)
    trace = {}
    meta = {"solver": "awfs", "likelihood": config.likelihood, "gamma_rule": gamma_rule,
            "levels": len(schedule.levels), "passes_per_level": schedule.passes_per_level}
    budget = _Budget(config.max_seconds)
    it = 0
    for sigma_k in schedule.levels:
        mu = config.step.mu if config.step.kind == "fixed" else config.epsilon * sigma_k**2
        z = x.copy()
        x_prev = x.copy()
        eta_prev = 1.0
        eta_curr = 1.0
        for _ in range(schedule.passes_per_level):
            budget.check(it)
            dz = (eta_prev / eta_curr) * (z - x)
            dx = ((eta_prev - 1.0) / eta_curr) * (x - x_prev)
            w = _clip(x + dz + dx, config.c_bound)
            s_w = provider.score_grad(w, sigma_k)
            s_x = provider.score_grad(x, sigma_k)
            z_new = w - mu * (grad(w) + s_w)
            v_new = x - mu * (grad(x) + s_x)
            _require_finite(z_new, "momentum candidate", it)
            _require_finite(v_new, "plain candidate", it)
            eta_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * eta_curr * eta_curr))
            if select:
                zc = _clip(z_new, config.c_bound)
                vc = _clip(v_new, config.c_bound)
                f_z = posterior(zc, sigma_k)
                f_v = posterior(vc, sigma_k)
                gamma = 1.0 if f_z <= f_v else 0.0
                x_new, obj_new = (zc, f_z) if gamma == 1.0 else (vc, f_v)
            else:
                gamma = float(config.gamma_mode)
                if gamma == 0.0:
                    x_new = _clip(v_new, config.c_bound)
                elif gamma == 1.0:
                    x_new = _clip(z_new, config.c_bound)
                else:
                    x_new = _clip(gamma * z_new + (1.0 - gamma) * v_new, config.c_bound)
                obj_new = None
            x_prev = x
            x = x_new
            z = z_new
            eta_prev, eta_curr = eta_curr, eta_next
            if obj_new is None:
                obj_new = posterior(x, sigma_k)
            _record_common(trace, obj_new, mu, x, x_true)
            trace.setdefault("gamma", []).append(gamma)
            trace.setdefault("eta", []).append(eta_curr)
            trace.setdefault("sigma_k", []).append(sigma_k)
            it += 1
    return SolverRun(x=x, trace=trace, wall_s=budget.elapsed(), meta=meta)


def eta_sequence(count):
    """First ``count`` momentum factors: eta_0 = 1, then the half-root recurrence."""
    vals = [1.0]
    while len(vals) < count:
        e = vals[-1]
        vals.append(0.5 * (1.0 + np.sqrt(1.0 + 4.0 * e * e)))
    return vals


def dolph(op, meas, config, eps_model, ddpm=None, x_true=None):
    """Reverse-diffusion sampling alternated with likelihood descent.

    ``eps_model(x, t, ddpm)`` predicts the diffusion noise at step t
    (1-based).  The chain starts from white Gaussian noise; each reverse
    step is followed by one gradient step on the PG likelihood.  The noise
    injection sigma_t * z_t is skipped unless the schedule asks for it,
    and z_t = 0 at t = 1 regardless.
    """
    if ddpm is None:
        ddpm = make_ddpm_schedule()
    value, grad = _make_problem(op, meas, config)
    rng = np.random.default_rng(config.seed)
    x = rng.standard_normal((op.n, op.n))
    report = lipschitz_report(op, meas, config.c_bound) if config.likelihood == "pg" else None
    mu_fixed = None
    if config.step.kind == "fixed":
        mu_fixed = config.step.mu
    elif report is not None and not report.overflowed:
        mu_fixed = config.step.safety / report.l_pg
    trace = {}
    meta = {"solver": "dolph", "likelihood": config.likelihood,
            "t_steps": ddpm.t_steps, "use_sigma_t": ddpm.use_sigma_t}
    budget = _Budget(config.max_seconds)
    for t in range(ddpm.t_steps, 0, -1):
        it = ddpm.t_steps - t
        budget.check(it)
        i = t - 1
        eps_hat = eps_model(x, t, ddpm)
        x = (x - (ddpm.betas[i] / np.sqrt(1.0 - ddpm.abar[i])) * eps_hat) / np.sqrt(ddpm.alphas[i])
        if ddpm.use_sigma_t and t > 1:
            x = x + np.sqrt(ddpm.betas[i]) * rng.standard_normal(x.shape)
        _require_finite(x, "iterate", it)
        try:
            g = grad(x)
        except ValueError as exc:  # diverged far enough to overflow intensities
            raise SolverAbort(f"gradient evaluation failed ({exc})", it) from exc
        _require_finite(g, "gradient", it)
        if mu_fixed is not None:
            mu = mu_fixed
        else:
            mu = backtracking_step(value, x, -g, config.step, fx=value(x))
        x = x - mu * g
        _require_finite(x, "iterate", it)
        trace.setdefault("objective", []).append(value(x))
        trace.setdefault("step", []).append(mu)
        trace.setdefault("t", []).append(t)
        if x_true is not None:
            trace.setdefault("nrmse", []).append(nrmse(phase_correct(x, x_true), x_true))
    final = _clip(x, config.c_bound)
    return SolverRun(x=final, trace=trace, wall_s=budget.elapsed(), meta=meta)


# -- plug-and-play family ---------------------------------------------------


def pnp_admm(op, meas, config, denoiser, x0=None, x_true=None,
             strength=1.0, literal_paper=False):
    """PnP-ADMM with image-domain splitting u = x.

    Inner gradient steps act on the PG likelihood of u plus the augmented
    penalty; the x-update denoises u - eta (standard form).  The
    literal_paper flag instead re-denoises x itself each outer iteration,
    reproducing the appendix pseudocode; the trace records which form ran.
    """
    value, grad = _make_problem(op, meas, config)
    rho = config.rho
    x = _clip(np.asarray(x0, dtype=np.float64) if x0 is not None else _default_x0(op, config), config.c_bound)
    u = x.copy()
    eta = np.zeros_like(x)
    trace = {}
    meta = {"solver": "pnp_admm", "likelihood": config.likelihood,
            "rho": rho, "x_update": "literal_paper" if literal_paper else "standard",
            "eta0": 0.0}
    budget = _Budget(config.max_seconds)
    for k in range(config.outer_k):
        budget.check(k)
        for _ in range(config.inner_t):
            g_u = grad(u) + rho * (u - x - eta)
            _require_finite(g_u, "gradient", k)

            def merit(u_try):
                return value(u_try) + 0.5 * rho * float(np.sum((u_try - x - eta) ** 2))

            mu = _fixed_or_search(config, merit, u, g_u, merit(u))
            u = u - mu * g_u
            _require_finite(u, "split iterate", k)
        if literal_paper:
            x = denoiser.denoise(x, strength)
        else:
            x = denoiser.denoise(u - eta, strength)
        x = _clip(x, config.c_bound)
        _require_finite(x, "iterate", k)
        eta = eta + x - u
        _record_common(trace, value(x), float("nan"), x, x_true)
        trace.setdefault("split_residual", []).append(float(np.linalg.norm(x - u)))
    return SolverRun(x=x, trace=trace, wall_s=budget.elapsed(), meta=meta)


def pnp_pgm(op, meas, config, denoiser, x0=None, x_true=None, strength=1.0):
    """Proximal-gradient PnP: gradient step, denoise, then beta-average."""
    if not 0 <= config.beta <= 1:
        raise ValueError("pgm averaging beta must lie in [0, 1]")
    value, grad = _make_problem(op, meas, config)
    x = _clip(np.asarray(x0, dtype=np.float64) if x0 is not None else _default_x0(op, config), config.c_bound)
    trace = {}
    meta = {"solver": "pnp_pgm", "likelihood": config.likelihood, "beta": config.beta}
    budget = _Budget(config.max_seconds)
    for k in range(config.max_iters):
        budget.check(k)
        g = grad(x)
        _require_finite(g, "gradient", k)
        mu = _fixed_or_search(config, value, x, g, value(x))
        x_tilde = x - mu * g
        x_bar = denoiser.denoise(x_tilde, strength)
        x = _clip(x_tilde + config.beta * (x_bar - x_tilde), config.c_bound)
        _require_finite(x, "iterate", k)
        _record_common(trace, value(x), mu, x, x_true)
    return SolverRun(x=x, trace=trace, wall_s=budget.elapsed(), meta=meta)


def red_sd(op, meas, config, denoiser, x0=None, x_true=None, strength=1.0):
    """Regularization by denoising, steepest-descent form."""
    value, grad = _make_problem(op, meas, config)
    beta = config.beta
    x = _clip(np.asarray(x0, dtype=np.float64) if x0 is not None else _default_x0(op, config), config.c_bound)
    trace = {}
    meta = {"solver": "red_sd", "likelihood": config.likelihood, "beta": beta}
    budget = _Budget(config.max_seconds)
    for k in range(config.max_iters):
        budget.check(k)
        residual = x - denoiser.denoise(x, strength)
        g = grad(x) + beta * residual
        _require_finite(g, "gradient", k)
        mu = _fixed_or_search(config, value, x, g, value(x))
        x = _clip(x - mu * g, config.c_bound)
        _require_finite(x, "iterate", k)
        _record_common(trace, value(x), mu, x, x_true)
        trace.setdefault("red_residual", []).append(float(np.linalg.norm(residual)))
    return SolverRun(x=x, trace=trace, wall_s=budget.elapsed(), meta=meta)


def admm_intensity_split(op, meas, config, reg=None, x0=None, x_true=None):
    """ADMM on the intensity splitting u_i = |a_i' x|^2 + b_i.

    Alternates a backtracked gradient step on the series likelihood in u,
    a backtracked step on the penalty (plus optional regularizer) in x,
    and dual ascent on the intensity mismatch.
    """
    reg_energy, reg_g = _split_reg(reg)
    model = PgNoiseModel(sigma=meas.sigma, b_bar=meas.b_bar)
    y = meas.y
    rho = config.rho

    def phi_value(u_try):
        if np.any(u_try < 0):
            return np.inf
        return nll_pg(u_try, y, model)

    def phi_grad(u_now):
        return phi_vec(u_now, y, meas.sigma, model.truncation)

    x = _clip(np.asarray(x0, dtype=np.float64) if x0 is not None else _default_x0(op, config), config.c_bound)
    u = op.intensity(x) + meas.b_bar
    eta = np.zeros(op.m)
    trace = {}
    meta = {"solver": "admm_intensity_split", "likelihood": "pg", "rho": rho}
    budget = _Budget(config.max_seconds)
    for k in range(config.outer_k):
        budget.check(k)
        ax = op.intensity(x) + meas.b_bar
        g_u = phi_grad(u) + rho * (u - ax - eta)
        _require_finite(g_u, "split gradient", k)

        def merit_u(u_try):
            val = phi_value(u_try)
            if not np.isfinite(val):
                return np.inf
            return val + 0.5 * rho * float(np.sum((ax - u_try + eta) ** 2))

        if float(np.vdot(g_u, g_u).real) > 0:
            mu_u = backtracking_step(merit_u, u, -g_u, config.step, fx=merit_u(u))
            u = u - mu_u * g_u
        f = op.forward(x)
        q = f.real**2 + f.imag**2 + meas.b_bar - u + eta
        g_x = 2.0 * rho * op.adjoint(q * f)
        if reg_g is not None:
            g_x = g_x + reg_g(x)
        _require_finite(g_x, "gradient", k)

        def merit_x(x_try):
            ft = op.forward(x_try)
            qt = ft.real**2 + ft.imag**2 + meas.b_bar - u + eta
            val = 0.5 * rho * float(np.sum(qt**2))
            if reg_energy is not None:
                val += reg_energy(x_try)
            return val

        if float(np.vdot(g_x, g_x).real) > 0:
            mu_x = backtracking_step(merit_x, x, -g_x, config.step, fx=merit_x(x))
            x = _clip(x - mu_x * g_x, config.c_bound)
        _require_finite(x, "iterate", k)
        ax_new = op.intensity(x) + meas.b_bar
        eta = eta + ax_new - u
        _record_common(trace, nll_pg(np.maximum(u, 0.0), y, model), float("nan"), x, x_true)
        trace.setdefault("primal_residual", []).append(float(np.linalg.norm(ax_new - u)))
        trace.setdefault("dual_mean", []).append(float(np.mean(eta)))
        trace.setdefault("mismatch_mean", []).append(float(np.mean(ax_new - u)))
    return SolverRun(x=x, trace=trace, wall_s=budget.elapsed(), meta=meta)


# -- initialization and sign fix --------------------------------------------


def spectral_init(op, meas, iters=100, c_bound=1.0, return_rayleigh=False):
    """Leading eigenvector of the measurement-weighted quadratic form.

    Power iteration on x -> Re{L' diag(y_hat) L x} with y_hat the clamped,
    mean-normalized background-subtracted counts; the output is sign-fixed,
    rescaled to the measured energy, and projected to [0, c_bound].
    """
    if op.m < op.n * op.n:
        raise ValueError("need at least as many measurements as unknowns")
    y_hat = np.maximum(meas.y - meas.b_bar, 0.0)
    total = float(np.sum(y_hat))
    if total <= 0:
        raise ValueError("degenerate all-zero measurements")
    weights = y_hat / float(np.mean(y_hat))
    rng = np.random.default_rng(12345)
    v = rng.standard_normal((op.n, op.n))
    v /= np.linalg.norm(v)
    rayleigh = []
    for _ in range(iters):
        w = op.adjoint(weights * op.apply_linear(v))
        rayleigh.append(float(np.vdot(v, w).real))
        norm = np.linalg.norm(w)
        if norm == 0:
            break
        v = w / norm
    s = np.sign(v.sum())
    if s != 0:
        v = s * v
    offset_energy = float(np.sum(op.offset.real**2 + op.offset.imag**2))
    scale = np.sqrt(max(total - offset_energy, 0.0)) / op.alpha
    x0 = np.clip(scale * v, 0.0, c_bound)
    if return_rayleigh:
        return x0, rayleigh
    return x0


def phase_correct(x_hat, x_true):
    """Resolve the global sign: flip x_hat when it anticorrelates with truth."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    ip = float(np.vdot(x_hat, np.asarray(x_true, dtype=np.float64)).real)
    if ip == 0.0:
        return x_hat.copy()
    return np.sign(ip) * x_hat
