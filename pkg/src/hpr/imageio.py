"""Image and measurement file formats.

Three on-disk formats, all with one-line ASCII headers:

    PGM (P5)   8-bit grayscale for viewing; lossy quantization
    HPR1       exact image round-trip: "HPR1 <n> <n>\\n" then row-major
               little-endian float32
    HPM1       measurements: "HPM1 <M> <sigma> <alpha>\\n" then float32 y,
               then float32 b_bar
"""

from __future__ import annotations

import numpy as np


class FormatError(ValueError):
    """File does not parse as the expected format."""


def write_pgm(path, x, dynamic_range=1.0):
    """Write an image as 8-bit binary PGM, clipping to [0, dynamic_range]."""
    x = np.asarray(x, dtype=np.float64)
    q = np.clip(x / dynamic_range, 0.0, 1.0)
    data = np.round(q * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5 {x.shape[1]} {x.shape[0]} 255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path):
    """Read a binary PGM written by write_pgm; returns values in [0, 1]."""
    with open(path, "rb") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != b"P5":
            raise FormatError("not a single-line binary PGM")
        width, height, maxval = (int(v) for v in header[1:])
        data = np.frombuffer(fh.read(width * height), dtype=np.uint8)
    return data.reshape(height, width).astype(np.float64) / maxval


def write_raw_image(path, x):
    """Exact float32 round-trip format for square images."""
    x = np.ascontiguousarray(x, dtype="<f4")
    n = x.shape[0]
    if x.shape != (n, n):
        raise FormatError("raw format stores square images only")
    with open(path, "wb") as fh:
        fh.write(f"HPR1 {n} {n}\n".encode("ascii"))
        fh.write(x.tobytes())


def read_raw_image(path):
    with open(path, "rb") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != b"HPR1":
            raise FormatError("missing HPR1 header")
        rows, cols = int(header[1]), int(header[2])
        if rows != cols:
            raise FormatError("raw format stores square images only")
        data = np.frombuffer(fh.read(4 * rows * cols), dtype="<f4")
    if data.size != rows * cols:
        raise FormatError("truncated HPR1 payload")
    return data.reshape(rows, cols).astype(np.float64)


def write_measurements(path, meas, alpha):
    """Write a MeasurementSet plus the operator scale needed to rebuild it."""
    y = np.ascontiguousarray(meas.y, dtype="<f4")
    b = np.ascontiguousarray(meas.b_bar, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(f"HPM1 {meas.m} {float(meas.sigma)!r} {float(alpha)!r}\n".encode("ascii"))
        fh.write(y.tobytes())
        fh.write(b.tobytes())


def read_measurements(path):
    """Read an HPM1 file; returns (y, b_bar, sigma, alpha)."""
    with open(path, "rb") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != b"HPM1":
            raise FormatError("missing HPM1 header")
        m = int(header[1])
        sigma = float(header[2])
        alpha = float(header[3])
        y = np.frombuffer(fh.read(4 * m), dtype="<f4").astype(np.float64)
        b = np.frombuffer(fh.read(4 * m), dtype="<f4").astype(np.float64)
    if y.size != m or b.size != m:
        raise FormatError("truncated HPM1 payload")
    return y, b, sigma, alpha
