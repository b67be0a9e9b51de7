"""SPR1 score server: serve a trained checkpoint over stdio.

Wire format, little-endian, after a mutual b"SPR1\\n" handshake:

    request  u32 0x53505251, u32 n, f64 sigma, n*n float32 (row-major)
    reply    u32 0x53505250, u32 n, n*n float32
    error    u32 0x53505245, u32 length, utf-8 message

One reply per request, in order.  NCSN checkpoints serve the energy
gradient (the negated score); DnCNN checkpoints serve the denoised image.
A malformed or oversized frame produces an error frame and exit code 2;
EOF between frames is a clean shutdown.
"""

from __future__ import annotations

import struct
import sys

import numpy as np
import torch

from .training import infer_denoised, infer_energy_grad, load_checkpoint

HANDSHAKE = b"SPR1\n"
MAGIC_REQUEST = 0x53505251
MAGIC_REPLY = 0x53505250
MAGIC_ERROR = 0x53505245
_HEADER_REQ = struct.Struct("<IId")
MAX_N = 4096


def read_exact(stream, nbytes):
    chunks = []
    got = 0
    while got < nbytes:
        chunk = stream.read(nbytes - got)
        if not chunk:
            return None
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def _error(stdout, message):
    data = message.encode("utf-8")
    stdout.write(struct.pack("<II", MAGIC_ERROR, len(data)) + data)
    stdout.flush()
    return 2


def serve_checkpoint(path, stdin=None, stdout=None):
    """Blocking request loop; returns the process exit code."""
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    torch.set_num_threads(1)  # bit-stable replies regardless of host load
    model, checkpoint = load_checkpoint(path)
    infer = infer_energy_grad if checkpoint["kind"] == "ncsn" else infer_denoised

    greeting = read_exact(stdin, len(HANDSHAKE))
    if greeting != HANDSHAKE:
        return _error(stdout, "bad handshake")
    stdout.write(HANDSHAKE)
    stdout.flush()
    while True:
        header = read_exact(stdin, _HEADER_REQ.size)
        if header is None:
            return 0
        magic, n, sigma = _HEADER_REQ.unpack(header)
        if magic != MAGIC_REQUEST:
            return _error(stdout, f"bad magic 0x{magic:08x}")
        if n == 0 or n > MAX_N:
            return _error(stdout, f"unsupported image size n={n}")
        body = read_exact(stdin, 4 * n * n)
        if body is None:
            return _error(stdout, "truncated request body")
        x = np.frombuffer(body, dtype="<f4").reshape(n, n)
        out = np.ascontiguousarray(infer(model, x, sigma), dtype="<f4")
        stdout.write(struct.pack("<II", MAGIC_REPLY, n) + out.tobytes())
        stdout.flush()
