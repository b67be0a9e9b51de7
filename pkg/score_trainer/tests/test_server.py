import struct
import subprocess
import sys

import numpy as np
import pytest

from score_trainer import TrainConfig, save_checkpoint, train_ncsn
from score_trainer.data import gmm_pixel_images
from score_trainer.models import build_model
from score_trainer.training import infer_energy_grad

HANDSHAKE = b"SPR1\n"
REQ = 0x53505251
REP = 0x53505250
ERR = 0x53505245


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    rng = np.random.default_rng(0)
    imgs = list(gmm_pixel_images(6, 16, rng))
    cfg = TrainConfig(patch_size=8, epochs=2, kernel_size=1, width=16, depth=3, seed=0)
    ck = train_ncsn(cfg, images=imgs)
    path = tmp_path_factory.mktemp("ck") / "ncsn.pt"
    save_checkpoint(ck, path)
    return str(path), ck


def spawn(path):
    return subprocess.Popen(
        [sys.executable, "-m", "score_trainer.cli", "serve", path],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0,
    )


def handshake(proc):
    proc.stdin.write(HANDSHAKE)
    proc.stdin.flush()
    assert proc.stdout.read(5) == HANDSHAKE


def request(proc, x, sigma):
    n = x.shape[0]
    proc.stdin.write(struct.pack("<IId", REQ, n, sigma) + x.astype("<f4").tobytes())
    proc.stdin.flush()
    magic, n_rep = struct.unpack("<II", proc.stdout.read(8))
    assert magic == REP
    assert n_rep == n
    body = proc.stdout.read(4 * n * n)
    return np.frombuffer(body, dtype="<f4").reshape(n, n)


def test_roundtrip_bit_identical_to_in_process(checkpoint, rng):
    path, ck = checkpoint
    model = build_model(ck["arch"])
    model.load_state_dict(ck["state_dict"])
    model.eval()
    import torch

    torch.set_num_threads(1)
    proc = spawn(path)
    try:
        handshake(proc)
        for _ in range(3):
            x = rng.random((12, 12)).astype(np.float32)
            served = request(proc, x, 0.05)
            local = infer_energy_grad(model, x, 0.05).astype(np.float32)
            assert served.tobytes() == local.tobytes()
    finally:
        proc.stdin.close()
        assert proc.wait(timeout=10) == 0


def test_replies_in_order(checkpoint, rng):
    path, _ = checkpoint
    proc = spawn(path)
    try:
        handshake(proc)
        xs = [np.full((4, 4), float(i), dtype=np.float32) for i in range(5)]
        outs = [request(proc, x, 0.03) for x in xs]
        distinct = {out.tobytes() for out in outs}
        assert len(distinct) == 5
    finally:
        proc.stdin.close()
        proc.wait(timeout=10)


def test_bad_magic_error_frame_and_exit_2(checkpoint):
    path, _ = checkpoint
    proc = spawn(path)
    handshake(proc)
    proc.stdin.write(struct.pack("<IId", 0xDEADBEEF, 4, 0.1) + b"\x00" * 64)
    proc.stdin.flush()
    magic, length = struct.unpack("<II", proc.stdout.read(8))
    assert magic == ERR
    proc.stdout.read(length)
    assert proc.wait(timeout=10) == 2


def test_oversized_image_rejected(checkpoint):
    path, _ = checkpoint
    proc = spawn(path)
    handshake(proc)
    proc.stdin.write(struct.pack("<IId", REQ, 1 << 20, 0.1))
    proc.stdin.flush()
    magic, length = struct.unpack("<II", proc.stdout.read(8))
    assert magic == ERR
    assert proc.wait(timeout=10) == 2


def test_truncated_frame_never_crashes(checkpoint):
    path, _ = checkpoint
    for cut in (2, 10, 20):
        proc = spawn(path)
        handshake(proc)
        frame = struct.pack("<IId", REQ, 4, 0.1) + b"\x00" * 64
        proc.stdin.write(frame[:cut])
        proc.stdin.close()
        code = proc.wait(timeout=10)
        assert code in (0, 2)  # clean EOF or error frame, never a signal
        assert code >= 0


def test_fuzz_well_formed_frames(checkpoint, rng):
    path, _ = checkpoint
    proc = spawn(path)
    try:
        handshake(proc)
        for _ in range(1000):
            n = int(rng.integers(1, 9))
            x = rng.standard_normal((n, n)).astype(np.float32)
            sigma = float(rng.uniform(0.005, 0.1))
            out = request(proc, x, sigma)
            assert out.shape == (n, n)
            assert np.all(np.isfinite(out))
    finally:
        proc.stdin.close()
        assert proc.wait(timeout=10) == 0


def test_bad_handshake_rejected(checkpoint):
    path, _ = checkpoint
    proc = spawn(path)
    proc.stdin.write(b"BOGUS")
    proc.stdin.flush()
    magic, length = struct.unpack("<II", proc.stdout.read(8))
    assert magic == ERR
    assert proc.wait(timeout=10) == 2
