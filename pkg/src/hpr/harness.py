"""Experiment orchestration: simulate, initialize, solve, score, persist.

Scaling convention: experiment configs state the photon-scale factor
``alpha`` of the measurement model y ~ N(Poisson(|alpha F{strip}|^2 + b),
sigma^2) with an unnormalized DFT, the convention under which the usual
working range alpha in [0.02, 0.035] yields single-digit-to-tens photon
counts on full-size images.  The operator itself uses the unitary DFT, so
instances are built with operator scale alpha * sqrt(P), numerically the
same field.

Every run follows the same chain: simulate measurements, spectral
initialization, a Poisson WF warm start, then the configured solver, sign
correction, and metrics.  Sweeps are embarrassingly parallel; rows are
written sorted by job key so reruns with the same seeds are byte-identical.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .gradients import StepPolicy
from .imageio import write_pgm, write_raw_image
from .metrics import nrmse, ssim
from .model import make_operator, make_reference, simulate_measurements
from .priors import (
    BuiltinDenoiser,
    GmmScoreProvider,
    ZeroScoreProvider,
    default_test_prior,
    huber_tv_energy,
    huber_tv_grad,
    make_geometric_schedule,
)
from .solvers import (
    SolverAbort,
    SolverConfig,
    awfs,
    phase_correct,
    pnp_admm,
    pnp_pgm,
    red_sd,
    spectral_init,
    wf,
    wfsd,
)

CSV_VERSION = "hpr_csv_v1"
CSV_HEADER = f"{CSV_VERSION},solver,alpha,sigma,seed,status,nrmse_pct,ssim,iterations"


REFERENCE_IMAGE_SIZE = 256


def operator_alpha(alpha, n=None, oversample=2, n_ref=REFERENCE_IMAGE_SIZE):
    """Map a photon-scale alpha to the unitary operator's scale.

    ``alpha`` follows the unnormalized-DFT convention at the working image
    size ``n_ref``, under which alpha in [0.02, 0.035] yields mean photon
    counts in the single digits to tens.  The mapping alpha * sqrt(3) *
    oversample * n_ref equals alpha * sqrt(P) at n = n_ref and keeps the
    mean count per measurement invariant as images shrink to desk scale.
    """
    return alpha * np.sqrt(3.0) * oversample * n_ref


def paper_alpha_grid(points=7, lo=0.02, hi=0.035):
    """The photon-scale sweep grid: 7 points spanning [0.02, 0.035]."""
    return tuple(float(a) for a in np.linspace(lo, hi, points))


# -- synthetic ground truth ---------------------------------------------------


def synth_image(kind, n, rng, prior=None):
    """Ground-truth generators with values in [0, 1].

    gmm-texture draws i.i.d. pixels from the test prior so score-prior
    experiments are matched to their regularizer; blobs builds a smooth
    sum of bumps; checker is a two-level block pattern.
    """
    if kind == "gmm-texture":
        prior = prior if prior is not None else default_test_prior()
        w = np.asarray(prior.weights)
        comp = rng.choice(len(w), size=(n, n), p=w)
        mu = np.asarray(prior.means)[comp]
        tau = np.sqrt(np.asarray(prior.variances))[comp]
        return np.clip(mu + tau * rng.standard_normal((n, n)), 0.0, 1.0)
    if kind == "blobs":
        yy, xx = np.mgrid[0:n, 0:n] / n
        img = np.zeros((n, n))
        for _ in range(4):
            cy, cx = rng.random(2)
            width = 0.08 + 0.17 * rng.random()
            amp = 0.4 + 0.6 * rng.random()
            img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2))
        img *= 0.9 / max(img.max(), 1e-12)
        return img
    if kind == "checker":
        block = max(n // 4, 1)
        yy, xx = np.mgrid[0:n, 0:n]
        tile = ((yy // block + xx // block) % 2).astype(np.float64)
        return 0.2 + 0.6 * tile
    raise ValueError(f"unknown synthetic image kind {kind!r}")


@dataclass(frozen=True)
class Instance:
    """One simulated problem: operator, truth, measurements."""

    op: object
    x_true: np.ndarray
    meas: object
    alpha: float
    sigma: float
    seed: int


def build_instance(n=16, alpha=0.02, sigma=1.0, oversample=2, b_bar=0.1,
                   image="gmm-texture", seed=0, ref_density=0.15, prior=None):
    """Simulate one holographic PG instance at photon-scale alpha."""
    rng = np.random.default_rng(seed)
    x_true = synth_image(image, n, rng, prior=prior) if isinstance(image, str) else np.asarray(image)
    r = make_reference(n, rng, density=ref_density)
    op = make_operator(n, operator_alpha(alpha, n, oversample), oversample, r)
    meas = simulate_measurements(op, x_true, b_bar, sigma, rng)
    return Instance(op=op, x_true=x_true, meas=meas, alpha=alpha, sigma=sigma, seed=seed)


# -- solver registry ----------------------------------------------------------


def default_epsilon(inst, c_bound=1.0, sigma_hi=0.1):
    """Step factor so the first annealing level takes a near-Lipschitz step.

    Probes the local curvature of the PG gradient around the box center;
    deterministic for a given instance.
    """
    from .gradients import grad_pg
    from .likelihood import PgNoiseModel

    model = PgNoiseModel(sigma=inst.meas.sigma, b_bar=inst.meas.b_bar)
    x = np.full((inst.op.n, inst.op.n), 0.5 * c_bound)
    rng = np.random.default_rng(0)
    d = rng.standard_normal(x.shape)
    d *= 1e-4 / np.linalg.norm(d)
    g0 = grad_pg(inst.op, x, inst.meas.y, model)
    g1 = grad_pg(inst.op, x + d, inst.meas.y, model)
    l_hat = np.linalg.norm(g1 - g0) / np.linalg.norm(d)
    l_hat = max(l_hat, 1e-12)
    return float(0.9 / (l_hat * sigma_hi * sigma_hi))


def run_solver(name, spec, inst, x0, x_true):
    """Dispatch one configured solver; returns a SolverRun."""
    kind = spec.get("algorithm", "wf")
    likelihood = spec.get("likelihood", "pg")
    iters = int(spec.get("iters", 50))
    step = StepPolicy(kind=spec.get("step", "backtracking"),
                      mu=float(spec.get("mu", 1.0)))
    config = SolverConfig(
        likelihood=likelihood,
        step=step,
        c_bound=float(spec.get("c_bound", 1.0)),
        rho=float(spec.get("rho", 1.0)),
        beta=float(spec.get("beta", 0.5)),
        inner_t=int(spec.get("inner_t", 1)),
        outer_k=iters,
        max_iters=iters,
        seed=inst.seed,
    )
    if kind == "wf":
        reg = None
        if float(spec.get("tv_lambda", 0.0)) > 0:
            lam = float(spec["tv_lambda"])
            delta = float(spec.get("tv_delta", 0.05))
            reg = (lambda x: huber_tv_energy(x, delta, lam),
                   lambda x: huber_tv_grad(x, delta, lam))
        return wf(inst.op, inst.meas, config, reg_grad=reg, x0=x0, x_true=x_true)
    if kind in ("wfsd", "awfs"):
        levels = int(spec.get("levels", 20))
        passes = int(spec.get("passes", iters // max(levels, 1) or 1))
        schedule = make_geometric_schedule(
            float(spec.get("sigma_hi", 0.1)), float(spec.get("sigma_lo", 0.005)),
            levels, passes_per_level=passes)
        eps = spec.get("epsilon", "auto")
        epsilon = default_epsilon(inst) if eps == "auto" else float(eps)
        config = replace(config, schedule=schedule, epsilon=epsilon,
                         gamma_mode=spec.get("gamma_mode", "posterior_select"))
        provider = _provider_from_spec(spec)
        solve = wfsd if kind == "wfsd" else awfs
        return solve(inst.op, inst.meas, config, provider, x0=x0, x_true=x_true)
    if kind in ("pnp_admm", "pnp_pgm", "red_sd"):
        denoiser = BuiltinDenoiser(kind=spec.get("denoiser", "gaussian"),
                                   width=float(spec.get("denoiser_width", 1.0)))
        strength = float(spec.get("strength", 1.0))
        fn = {"pnp_admm": pnp_admm, "pnp_pgm": pnp_pgm, "red_sd": red_sd}[kind]
        return fn(inst.op, inst.meas, config, denoiser, x0=x0, x_true=x_true,
                  strength=strength)
    raise ValueError(f"unknown solver algorithm {kind!r}")


def _provider_from_spec(spec):
    prior_kind = spec.get("prior", "gmm")
    if prior_kind == "gmm":
        return GmmScoreProvider(default_test_prior())
    if prior_kind == "zero":
        return ZeroScoreProvider()
    raise ValueError(f"unknown prior {prior_kind!r}")


def initialize(inst, spectral_iters=100, warm_iters=50, c_bound=1.0):
    """Initialization chain: spectral estimate, then a Poisson WF warm start."""
    x_spec = spectral_init(inst.op, inst.meas, iters=spectral_iters, c_bound=c_bound)
    config = SolverConfig(likelihood="poisson", step=StepPolicy(kind="backtracking"),
                          max_iters=warm_iters, c_bound=c_bound, seed=inst.seed)
    warm = wf(inst.op, inst.meas, config, x0=x_spec)
    return warm.x


# -- experiment configuration -------------------------------------------------


DEFAULT_SOLVERS = {
    "pg-wf": {"algorithm": "wf", "likelihood": "pg", "iters": 50},
    "poisson-wf": {"algorithm": "wf", "likelihood": "poisson", "iters": 50},
}


@dataclass
class ExperimentConfig:
    """Grid of (image, alpha, sigma, seed, solver) jobs plus output paths."""

    image: str = "synthetic:gmm-texture"
    n: int = 16
    oversample: int = 2
    alphas: tuple = (0.02,)
    sigmas: tuple = (1.0,)
    b_bar: float = 0.1
    seeds: tuple = (0,)
    solvers: dict = field(default_factory=lambda: dict(DEFAULT_SOLVERS))
    outdir: str | None = None
    spectral_iters: int = 100
    warm_iters: int = 50

    def __post_init__(self):
        if not self.alphas or not self.sigmas:
            raise ValueError("alpha and sigma lists must be nonempty")
        self.alphas = tuple(float(a) for a in self.alphas)
        self.sigmas = tuple(float(s) for s in self.sigmas)
        self.seeds = tuple(int(s) for s in self.seeds)

    def jobs(self):
        for solver in sorted(self.solvers):
            for alpha in self.alphas:
                for sigma in self.sigmas:
                    for seed in self.seeds:
                        yield (solver, alpha, sigma, seed)


@dataclass(frozen=True)
class MetricRow:
    solver: str
    alpha: float
    sigma: float
    seed: int
    status: str
    nrmse_pct: float
    ssim: float
    iterations: int
    wall_ms: float

    def csv_line(self):
        # wall time stays out of the CSV so reruns are byte-identical
        return ",".join([
            self.solver,
            format(self.alpha, ".10g"),
            format(self.sigma, ".10g"),
            str(self.seed),
            self.status,
            format(self.nrmse_pct, ".10g"),
            format(self.ssim, ".10g"),
            str(self.iterations),
        ])


def _image_kind(config):
    if config.image.startswith("synthetic:"):
        return config.image.split(":", 1)[1]
    return config.image


def run_one(config, solver, alpha, sigma, seed):
    """Simulate, initialize, solve, and score a single job."""
    inst = build_instance(n=config.n, alpha=alpha, sigma=sigma,
                          oversample=config.oversample, b_bar=config.b_bar,
                          image=_image_kind(config), seed=seed)
    x0 = initialize(inst, config.spectral_iters, config.warm_iters)
    spec = config.solvers[solver]
    try:
        run = run_solver(solver, spec, inst, x0, inst.x_true)
        status = "ok"
    except SolverAbort as exc:
        return MetricRow(solver, alpha, sigma, seed, f"abort:{exc.iteration}",
                         float("nan"), float("nan"), exc.iteration, 0.0), None, inst
    x_hat = phase_correct(run.x, inst.x_true)
    before = nrmse(run.x, inst.x_true)
    after = nrmse(x_hat, inst.x_true)
    assert after <= before + 1e-12, "sign correction must not hurt NRMSE"
    row = MetricRow(solver, alpha, sigma, seed, status, after,
                    ssim(x_hat, inst.x_true), run.iterations,
                    1000.0 * run.wall_s)
    return row, run, inst


def _pool_size():
    env = os.environ.get("HPR_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def run_experiment(config):
    """Run the full grid; returns MetricRows sorted by job key.

    When ``config.outdir`` is set, writes metrics.csv, per-run JSONL
    traces, reconstructed images (exact float32 plus 8-bit preview), and
    gnuplot-ready convergence data.
    """
    jobs = list(config.jobs())
    results = {}

    def work(job):
        solver, alpha, sigma, seed = job
        return job, run_one(config, solver, alpha, sigma, seed)

    workers = min(_pool_size(), max(len(jobs), 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for job, out in pool.map(work, jobs):
                results[job] = out
    else:
        for job in jobs:
            results[job] = work(job)[1]

    rows = [results[job][0] for job in jobs]
    if config.outdir is not None:
        _write_artifacts(config, jobs, results)
    return rows


def _job_key(job):
    solver, alpha, sigma, seed = job
    return f"{solver}_a{alpha:.6g}_s{sigma:.6g}_seed{seed}"


def _write_artifacts(config, jobs, results):
    out = Path(config.outdir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(exist_ok=True)
    (out / "convergence").mkdir(exist_ok=True)
    write_metrics_csv(out / "metrics.csv", [results[j][0] for j in jobs])
    for job in jobs:
        row, run, inst = results[job]
        key = _job_key(job)
        if run is None:
            continue
        x_hat = phase_correct(run.x, inst.x_true)
        write_raw_image(out / "images" / f"{key}.f32", x_hat)
        write_pgm(out / "images" / f"{key}.pgm", x_hat)
        with open(out / "traces" / f"{key}.jsonl", "w") as fh:
            keys = sorted(run.trace)
            length = max((len(run.trace[k]) for k in keys), default=0)
            for i in range(length):
                rec = {"iter": i}
                for k in keys:
                    if i < len(run.trace[k]):
                        rec[k] = run.trace[k][i]
                fh.write(json.dumps(rec) + "\n")
        conv = run.trace.get("objective", [])
        nr = run.trace.get("nrmse", [float("nan")] * len(conv))
        with open(out / "convergence" / f"{key}.dat", "w") as fh:
            fh.write("# iter objective nrmse_pct\n")
            for i, (o, r) in enumerate(zip(conv, nr)):
                fh.write(f"{i} {o:.10g} {r:.10g}\n")
    _write_plot_stub(out / "convergence" / "plot.gp", jobs)


def _write_plot_stub(path, jobs):
    with open(path, "w") as fh:
        fh.write("set xlabel 'iteration'\nset ylabel 'NRMSE (%)'\nset key outside\n")
        fh.write("plot \\\n")
        lines = [f"  '{_job_key(job)}.dat' using 1:3 with lines title '{_job_key(job)}'"
                 for job in jobs]
        fh.write(", \\\n".join(lines) + "\n")


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.csv_line() + "\n")


def metrics_csv_bytes(rows):
    return (CSV_HEADER + "\n" + "".join(r.csv_line() + "\n" for r in rows)).encode()


def compare_likelihoods(config):
    """Poisson vs PG summary: per-solver mean and std across the alpha grid.

    Solvers are paired by every config field except the likelihood.
    Returns (rows, text table).
    """
    rows = run_experiment(config)
    groups = {}
    for row in rows:
        spec = config.solvers[row.solver]
        base = tuple(sorted((k, str(v)) for k, v in spec.items() if k != "likelihood"))
        groups.setdefault((row.solver, spec.get("likelihood", "pg"), base), []).append(row)
    summary = []
    for (solver, likelihood, _), grp in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        ok = [r for r in grp if r.status == "ok"]
        if not ok:
            continue
        nr = np.array([r.nrmse_pct for r in ok])
        ss = np.array([r.ssim for r in ok])
        summary.append({
            "solver": solver,
            "likelihood": likelihood,
            "nrmse_mean": float(nr.mean()), "nrmse_std": float(nr.std()),
            "ssim_mean": float(ss.mean()), "ssim_std": float(ss.std()),
            "runs": len(ok),
        })
    lines = [f"{'solver':<16}{'likelihood':<12}{'NRMSE%':>18}{'SSIM':>18}{'runs':>6}"]
    for s in summary:
        lines.append(
            f"{s['solver']:<16}{s['likelihood']:<12}"
            f"{s['nrmse_mean']:>9.2f} ± {s['nrmse_std']:<6.2f}"
            f"{s['ssim_mean']:>9.3f} ± {s['ssim_std']:<6.3f}{s['runs']:>6}"
        )
    return summary, "\n".join(lines)
