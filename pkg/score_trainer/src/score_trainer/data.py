"""Training data: image-folder loading and patch sampling.

Reads the interchange formats used by the reconstruction toolkit: HPR1
float32 rasters ("HPR1 <n> <n>\\n" then little-endian float32, row-major)
and binary 8-bit PGM.  Patches are sampled uniformly after reflection
padding so borders contribute as often as interiors.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def read_raw_image(path):
    with open(path, "rb") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != b"HPR1":
            raise ValueError(f"{path}: missing HPR1 header")
        rows, cols = int(header[1]), int(header[2])
        data = np.frombuffer(fh.read(4 * rows * cols), dtype="<f4")
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated payload")
    return data.reshape(rows, cols).astype(np.float64)


def read_pgm(path):
    with open(path, "rb") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != b"P5":
            raise ValueError(f"{path}: not a single-line binary PGM")
        width, height, maxval = (int(v) for v in header[1:])
        data = np.frombuffer(fh.read(width * height), dtype=np.uint8)
    return data.reshape(height, width).astype(np.float64) / maxval


def load_image_dir(data_dir):
    """All .f32/.pgm images under data_dir, sorted by name."""
    root = Path(data_dir)
    images = []
    for path in sorted(root.iterdir()):
        if path.suffix == ".f32":
            images.append(read_raw_image(path))
        elif path.suffix == ".pgm":
            images.append(read_pgm(path))
    if not images:
        raise ValueError(f"no .f32 or .pgm images in {data_dir}")
    return images


def sample_patches(images, patch_size, count, rng):
    """Uniform patches with reflection padding at the borders."""
    out = np.empty((count, patch_size, patch_size), dtype=np.float32)
    pad = patch_size // 2
    padded = []
    for img in images:
        if min(img.shape) < patch_size:
            raise ValueError("patch size exceeds image size")
        padded.append(np.pad(img, pad, mode="reflect"))
    for i in range(count):
        img = padded[rng.integers(len(padded))]
        r = rng.integers(img.shape[0] - patch_size + 1)
        c = rng.integers(img.shape[1] - patch_size + 1)
        out[i] = img[r : r + patch_size, c : c + patch_size]
    return out


def gmm_pixel_images(count, n, rng, weights=(0.5, 0.5), means=(0.2, 0.8), taus=(0.1, 0.1),
                     clip=False):
    """Synthetic training images with i.i.d. two-mode mixture pixels.

    By default the pixels are exact mixture draws; ``clip=True`` truncates
    to [0, 1] for display-style images, which puts small atoms at the
    boundaries and perturbs the smoothed score there.
    """
    w = np.asarray(weights)
    comp = rng.choice(len(w), size=(count, n, n), p=w / w.sum())
    mu = np.asarray(means)[comp]
    tau = np.asarray(taus)[comp]
    img = mu + tau * rng.standard_normal((count, n, n))
    return np.clip(img, 0.0, 1.0) if clip else img


def write_raw_image(path, x):
    x = np.ascontiguousarray(x, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(f"HPR1 {x.shape[0]} {x.shape[1]}\n".encode("ascii"))
        fh.write(x.tobytes())
