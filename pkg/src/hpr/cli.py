"""Command-line interface.

Subcommands: simulate, reconstruct, sweep, compare, selftest.  Sweep and
compare read a flat key = value config file (# starts a comment); list
values are comma-separated, and solver definitions use dotted keys, e.g.

    alphas = 0.02, 0.035
    solver.pg-wf.algorithm = wf
    solver.pg-wf.likelihood = pg

The HPR_THREADS environment variable caps the sweep worker pool.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness, imageio, selftest
from .gradients import StepPolicy
from .metrics import nrmse, ssim
from .model import make_operator, simulate_measurements
from .solvers import SolverConfig, phase_correct, spectral_init, wf


def parse_config(text):
    """Flat key = value parser; returns a string-to-string mapping."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def experiment_from_mapping(mapping, outdir=None):
    solvers = {}
    for key, value in mapping.items():
        if key.startswith("solver."):
            _, name, field = key.split(".", 2)
            solvers.setdefault(name, {})[field] = value
    kwargs = {}
    if "image" in mapping:
        kwargs["image"] = mapping["image"]
    for key in ("n", "oversample", "spectral_iters", "warm_iters"):
        if key in mapping:
            kwargs[key] = int(mapping[key])
    if "alphas" in mapping:
        kwargs["alphas"] = _floats(mapping["alphas"])
    if "sigmas" in mapping:
        kwargs["sigmas"] = _floats(mapping["sigmas"])
    if "b_bar" in mapping:
        kwargs["b_bar"] = float(mapping["b_bar"])
    if "seeds" in mapping:
        kwargs["seeds"] = _ints(mapping["seeds"])
    if solvers:
        kwargs["solvers"] = solvers
    kwargs["outdir"] = outdir if outdir is not None else mapping.get("outdir")
    return harness.ExperimentConfig(**kwargs)


def _load_experiment(args):
    with open(args.config) as fh:
        mapping = parse_config(fh.read())
    return experiment_from_mapping(mapping, outdir=getattr(args, "outdir", None))


def cmd_simulate(args):
    rng = np.random.default_rng(args.seed)
    if args.image.startswith("synthetic:"):
        x_true = harness.synth_image(args.image.split(":", 1)[1], args.n, rng)
    else:
        x_true = imageio.read_raw_image(args.image)
        if x_true.shape[0] != args.n:
            args.n = x_true.shape[0]
    from .model import make_reference

    r = make_reference(args.n, rng, density=args.ref_density)
    alpha_op = harness.operator_alpha(args.alpha, args.n, args.oversample)
    op = make_operator(args.n, alpha_op, args.oversample, r)
    meas = simulate_measurements(op, x_true, args.b_bar, args.sigma, rng)
    imageio.write_measurements(f"{args.out}.hpm", meas, alpha_op)
    imageio.write_raw_image(f"{args.out}_ref.f32", r)
    imageio.write_raw_image(f"{args.out}_truth.f32", x_true)
    imageio.write_pgm(f"{args.out}_truth.pgm", x_true)
    print(f"wrote {args.out}.hpm  (M={meas.m}, photon alpha={args.alpha}, "
          f"operator alpha={alpha_op:.6g}, mean counts={np.mean(op.intensity(x_true) + meas.b_bar):.3g})")
    return 0


def cmd_reconstruct(args):
    y, b_bar, sigma, alpha_op = imageio.read_measurements(args.meas)
    r = imageio.read_raw_image(args.ref)
    n = r.shape[0]
    op = make_operator(n, alpha_op, args.oversample, r)
    from .model import MeasurementSet

    meas = MeasurementSet(y=y, b_bar=b_bar, sigma=sigma)
    inst = harness.Instance(op=op, x_true=None, meas=meas,
                            alpha=alpha_op, sigma=sigma, seed=args.seed)
    x0 = spectral_init(op, meas, iters=args.spectral_iters)
    if args.warm_iters > 0:
        warm = wf(op, meas, SolverConfig(likelihood="poisson",
                                         step=StepPolicy(kind="backtracking"),
                                         max_iters=args.warm_iters), x0=x0)
        x0 = warm.x
    spec = {"algorithm": args.algorithm, "likelihood": args.likelihood,
            "iters": args.iters}
    run = harness.run_solver(args.solver_name, spec, inst, x0, None)
    imageio.write_raw_image(args.out, run.x)
    imageio.write_pgm(args.out.rsplit(".", 1)[0] + ".pgm", run.x)
    msg = f"wrote {args.out}  ({run.iterations} iterations, {run.wall_s:.2f}s)"
    if args.truth:
        x_true = imageio.read_raw_image(args.truth)
        x_hat = phase_correct(run.x, x_true)
        msg += f"  NRMSE={nrmse(x_hat, x_true):.2f}%  SSIM={ssim(x_hat, x_true):.4f}"
    print(msg)
    return 0


def cmd_sweep(args):
    config = _load_experiment(args)
    rows = harness.run_experiment(config)
    if config.outdir is None:
        sys.stdout.write(harness.metrics_csv_bytes(rows).decode())
    else:
        print(f"wrote {config.outdir}/metrics.csv ({len(rows)} rows)")
    return 0


def cmd_compare(args):
    config = _load_experiment(args)
    _, table = harness.compare_likelihoods(config)
    print(table)
    return 0


def cmd_selftest(args):
    return selftest.run(fast=args.fast)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="hpr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a measurement file")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--alpha", type=float, default=0.02, help="photon-scale alpha")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--oversample", type=int, default=2)
    p.add_argument("--b-bar", type=float, default=0.1, dest="b_bar")
    p.add_argument("--image", default="synthetic:gmm-texture")
    p.add_argument("--ref-density", type=float, default=0.15, dest="ref_density")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="run one solver on one input")
    p.add_argument("--meas", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--oversample", type=int, default=2)
    p.add_argument("--algorithm", default="wf",
                   choices=("wf", "wfsd", "awfs", "pnp_admm", "pnp_pgm", "red_sd"))
    p.add_argument("--likelihood", default="pg", choices=("gaussian", "poisson", "pg"))
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--spectral-iters", type=int, default=100, dest="spectral_iters")
    p.add_argument("--warm-iters", type=int, default=50, dest="warm_iters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth", default=None)
    p.add_argument("--solver-name", default="cli", dest="solver_name")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("sweep", help="run the full experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--outdir", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="likelihood comparison summary table")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("selftest", help="run the invariant suite")
    p.add_argument("--fast", action="store_true")
    p.set_defaults(func=cmd_selftest)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
