"""Reference SPR1 score server, runnable as ``python -m hpr._ref_server``.

Modes:
    echo   reply with the request image unchanged (transport loopback)
    gmm    reply with the analytic smoothed-GMM energy gradient

Used by the client contract tests; learned providers live in a separate
package and speak the same protocol.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .priors import GmmPrior, default_test_prior, gmm_score_grad
from .protocol import (
    HANDSHAKE,
    MAGIC_REQUEST,
    _HEADER_REQ,
    pack_error,
    pack_reply,
    read_exact,
)

MAX_N = 4096


def serve(stdin, stdout, compute):
    greeting = read_exact(stdin, len(HANDSHAKE))
    if greeting != HANDSHAKE:
        stdout.write(pack_error("bad handshake"))
        stdout.flush()
        return 2
    stdout.write(HANDSHAKE)
    stdout.flush()
    while True:
        header = read_exact(stdin, _HEADER_REQ.size)
        if header is None:
            return 0  # clean EOF
        magic, n, sigma = _HEADER_REQ.unpack(header)
        if magic != MAGIC_REQUEST:
            stdout.write(pack_error(f"bad magic 0x{magic:08x}"))
            stdout.flush()
            return 2
        if n == 0 or n > MAX_N:
            stdout.write(pack_error(f"unsupported image size n={n}"))
            stdout.flush()
            return 2
        body = read_exact(stdin, 4 * n * n)
        if body is None:
            stdout.write(pack_error("truncated request body"))
            stdout.flush()
            return 2
        x = np.frombuffer(body, dtype=np.float32).reshape(n, n)
        stdout.write(pack_reply(compute(x, sigma)))
        stdout.flush()


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--mode", choices=("echo", "gmm"), default="gmm")
    parser.add_argument("--weights", default="0.5,0.5")
    parser.add_argument("--means", default="0.2,0.8")
    parser.add_argument("--variances", default="0.01,0.01")
    args = parser.parse_args(argv)

    if args.mode == "echo":
        compute = lambda x, sigma: x
    else:
        if (args.weights, args.means, args.variances) == ("0.5,0.5", "0.2,0.8", "0.01,0.01"):
            prior = default_test_prior()
        else:
            prior = GmmPrior(
                weights=tuple(float(v) for v in args.weights.split(",")),
                means=tuple(float(v) for v in args.means.split(",")),
                variances=tuple(float(v) for v in args.variances.split(",")),
            )
        compute = lambda x, sigma: gmm_score_grad(prior, x.astype(np.float64), sigma)

    return serve(sys.stdin.buffer, sys.stdout.buffer, compute)


if __name__ == "__main__":
    sys.exit(main())
