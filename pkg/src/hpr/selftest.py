"""Invariant battery behind ``hpr selftest``.

Each check prints one PASS/FAIL line; the suite returns a nonzero exit
code if anything fails.  These are quick smoke-level versions of the
properties the full pytest suite verifies at tighter settings.
"""

from __future__ import annotations

import sys

import numpy as np

from .gradients import finite_diff_grad, grad_pg, lemma1_mu, pg_objective
from .harness import build_instance, initialize, metrics_csv_bytes, run_experiment, ExperimentConfig
from .likelihood import PgNoiseModel, TruncationPolicy, log_s, phi
from .metrics import nrmse, ssim
from .model import make_operator, make_reference, simulate_measurements
from .priors import ZeroScoreProvider, make_geometric_schedule
from .solvers import SolverConfig, phase_correct, wf, wfsd
from .gradients import StepPolicy


def _checks(fast):
    rng = np.random.default_rng(7)
    n = 8
    r = make_reference(n, rng)
    op = make_operator(n, 1.0, 2, r)
    x1 = rng.random((n, n))
    x2 = rng.random((n, n))

    def linearity():
        lhs = op.forward(x1 + x2) - op.offset
        rhs = (op.forward(x1) - op.offset) + (op.forward(x2) - op.offset)
        return np.linalg.norm(lhs - rhs) <= 1e-12 * max(np.linalg.norm(rhs), 1.0)

    def adjoint_dot():
        for _ in range(5):
            x = rng.random((n, n))
            f = rng.standard_normal(op.m) + 1j * rng.standard_normal(op.m)
            lhs = np.vdot(op.apply_linear(x), f).real
            rhs = np.vdot(x, op.adjoint(f)).real
            if abs(lhs - rhs) > 1e-10 * max(abs(rhs), 1.0):
                return False
        return True

    def parseval():
        strip = np.concatenate([x1, np.zeros((n, n)), r], axis=1)
        return abs(np.linalg.norm(op.forward(x1)) - np.linalg.norm(strip)) < 1e-10 * np.linalg.norm(strip)

    def series_brute():
        policy = TruncationPolicy()
        for a, b, s in ((2.0, 3.0, 1.0), (10.0, 7.5, 0.5), (0.3, -2.0, 1.5)):
            terms = [k * np.log(a) - _lgamma(k + 1) - ((b - k) / (np.sqrt(2) * s)) ** 2
                     for k in range(1, 400)]
            terms.append(-((b / (np.sqrt(2) * s)) ** 2))
            brute = _logsumexp(terms)
            if abs(np.expm1(log_s(a, b, s, policy) - brute)) > 1e-8:
                return False
        return True

    def phi_bound():
        mu = lemma1_mu(1.0, 5.0)
        for u in np.linspace(0.01, 30, 40):
            h = 1e-3
            dd = (phi(u + h, 3.0, 1.0) - 2 * phi(u, 3.0, 1.0) + phi(u - h, 3.0, 1.0)) / h**2
            if abs(dd) > mu:
                return False
        return True

    def gradient_fd():
        meas = simulate_measurements(op, x1, 0.1, 1.0, 3)
        model = PgNoiseModel(sigma=1.0, b_bar=meas.b_bar)
        g = grad_pg(op, x1, meas.y, model)
        fd = finite_diff_grad(pg_objective(op, meas, model), x1, 1e-5)
        return np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(fd)

    def sim_determinism():
        a = simulate_measurements(op, x1, 0.1, 1.0, 42).y
        b = simulate_measurements(op, x1, 0.1, 1.0, 42).y
        c = simulate_measurements(op, x1, 0.1, 1.0, 43).y
        return np.array_equal(a, b) and not np.array_equal(a, c)

    def degenerate_wfsd():
        inst = build_instance(n=8, alpha=0.02, sigma=1.0, seed=1)
        x0 = initialize(inst, spectral_iters=20, warm_iters=5)
        sched = make_geometric_schedule(0.1, 0.05, 2, passes_per_level=3)
        cfg = SolverConfig(likelihood="pg", schedule=sched, epsilon=10.0)
        run_a = wfsd(inst.op, inst.meas, cfg, ZeroScoreProvider(), x0=x0)
        x = x0
        for sigma_k in sched.levels:
            cfg_w = SolverConfig(likelihood="pg", step=StepPolicy(kind="fixed", mu=10.0 * sigma_k**2),
                                 max_iters=3)
            x = wf(inst.op, inst.meas, cfg_w, x0=x).x
        return np.array_equal(run_a.x, x)

    def metrics_sane():
        img = rng.random((16, 16))
        return nrmse(img, img) == 0.0 and abs(ssim(img, img) - 1.0) < 1e-12

    def csv_determinism():
        cfg = ExperimentConfig(n=8, alphas=(0.02,), sigmas=(1.0,), seeds=(0,),
                               solvers={"pg-wf": {"algorithm": "wf", "likelihood": "pg", "iters": 3}},
                               spectral_iters=10, warm_iters=3)
        return metrics_csv_bytes(run_experiment(cfg)) == metrics_csv_bytes(run_experiment(cfg))

    def sign_fix():
        x_hat = -x1
        return np.array_equal(phase_correct(x_hat, x1), x1)

    checks = [
        ("forward linearity", linearity),
        ("adjoint dot test", adjoint_dot),
        ("Parseval", parseval),
        ("series vs brute force", series_brute),
        ("phi curvature bound", phi_bound),
        ("PG gradient vs finite differences", gradient_fd),
        ("simulation determinism", sim_determinism),
        ("metrics sanity", metrics_sane),
        ("phase correction", sign_fix),
    ]
    if not fast:
        checks += [
            ("zero-score solver degeneracy", degenerate_wfsd),
            ("sweep CSV determinism", csv_determinism),
        ]
    return checks


def _lgamma(k):
    from scipy.special import gammaln

    return float(gammaln(k))


def _logsumexp(terms):
    from scipy.special import logsumexp

    return float(logsumexp(np.asarray(terms)))


def run(fast=False, out=None):
    out = out if out is not None else sys.stdout
    failures = 0
    for name, check in _checks(fast):
        try:
            ok = check()
        except Exception as exc:  # a crash is a failure, not an abort
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        print(line, file=out)
        failures += 0 if ok else 1
    print(f"{'OK' if failures == 0 else 'FAILED'}: "
          f"{len(_checks(fast)) - failures}/{len(_checks(fast))} checks passed", file=out)
    return 0 if failures == 0 else 1
