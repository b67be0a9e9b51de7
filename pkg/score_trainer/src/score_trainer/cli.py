"""Command line: train-ncsn, train-dncnn, serve."""

from __future__ import annotations

import argparse
import sys

from .config import TrainConfig, geometric_levels
from .server import serve_checkpoint
from .training import train_dncnn, train_ncsn


def _train_config(args):
    return TrainConfig(
        data_dir=args.data,
        patch_size=args.patch_size,
        noise_levels=geometric_levels(args.sigma_hi, args.sigma_lo, args.levels),
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        checkpoint_path=args.out,
        kernel_size=args.kernel_size,
        width=args.width,
        depth=args.depth,
        dncnn_sigma=args.dncnn_sigma,
        seed=args.seed,
    )


def _add_train_args(p):
    p.add_argument("--data", required=True, help="directory of .f32/.pgm images")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--patch-size", type=int, default=40, dest="patch_size")
    p.add_argument("--batch-size", type=int, default=32, dest="batch_size")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--levels", type=int, default=20)
    p.add_argument("--sigma-hi", type=float, default=0.1, dest="sigma_hi")
    p.add_argument("--sigma-lo", type=float, default=0.005, dest="sigma_lo")
    p.add_argument("--kernel-size", type=int, default=3, dest="kernel_size")
    p.add_argument("--width", type=int, default=48)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--dncnn-sigma", type=float, default=15.0 / 255.0, dest="dncnn_sigma")
    p.add_argument("--seed", type=int, default=0)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="score-trainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-ncsn", help="train the noise-conditional score network")
    _add_train_args(p)
    p.set_defaults(kind="ncsn")

    p = sub.add_parser("train-dncnn", help="train the residual denoiser")
    _add_train_args(p)
    p.set_defaults(kind="dncnn")

    p = sub.add_parser("serve", help="serve a checkpoint over stdio (SPR1)")
    p.add_argument("checkpoint")
    p.set_defaults(kind="serve")

    args = parser.parse_args(argv)
    if args.kind == "serve":
        return serve_checkpoint(args.checkpoint)
    config = _train_config(args)
    train = train_ncsn if args.kind == "ncsn" else train_dncnn
    train(config)
    print(f"wrote {config.checkpoint_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
