"""Score-server wire protocol (SPR1) and the subprocess client.

Transport runs over a child process's standard streams, little-endian:

    handshake   b"SPR1\\n" exchanged in both directions first
    request     u32 0x53505251, u32 n, f64 sigma, n*n float32 (row-major)
    reply       u32 0x53505250, u32 n, n*n float32 (the energy gradient)

One reply per request, in order.  Servers may emit an error frame
(u32 0x53505245, u32 length, utf-8 message) before exiting on a protocol
violation; the client surfaces any unexpected magic as a ProtocolError.
"""

from __future__ import annotations

import os
import select
import struct
import subprocess
import threading
import time

import numpy as np

HANDSHAKE = b"SPR1\n"
MAGIC_REQUEST = 0x53505251
MAGIC_REPLY = 0x53505250
MAGIC_ERROR = 0x53505245
_HEADER_REQ = struct.Struct("<IId")
_HEADER_REP = struct.Struct("<II")


class ProtocolError(RuntimeError):
    """Malformed or unexpected frame."""


class HandshakeError(ProtocolError):
    """Peer did not present the SPR1 handshake."""


class TransportError(RuntimeError):
    """The peer went away (EOF on its stream)."""


def pack_request(x, sigma):
    x = np.ascontiguousarray(x, dtype=np.float32)
    n = x.shape[0]
    if x.shape != (n, n):
        raise ValueError("request image must be square")
    return _HEADER_REQ.pack(MAGIC_REQUEST, n, float(sigma)) + x.tobytes()


def pack_reply(grad):
    grad = np.ascontiguousarray(grad, dtype=np.float32)
    n = grad.shape[0]
    return _HEADER_REP.pack(MAGIC_REPLY, n) + grad.tobytes()


def pack_error(message):
    data = message.encode("utf-8")
    return struct.pack("<II", MAGIC_ERROR, len(data)) + data


def read_exact(stream, nbytes):
    """Read exactly nbytes from a blocking binary stream; None at clean EOF."""
    chunks = []
    got = 0
    while got < nbytes:
        chunk = stream.read(nbytes - got)
        if not chunk:
            return None
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class ExternalScoreClient:
    """Spawns a score server and speaks SPR1 over its stdio.

    Access is serialized per endpoint: one in-flight request at a time.
    ``timeout`` (seconds) applies to the handshake and to each reply.
    """

    def __init__(self, command, timeout=30.0):
        self.timeout = timeout
        self._lock = threading.Lock()
        self._proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            bufsize=0,
        )
        try:
            self._proc.stdin.write(HANDSHAKE)
            self._proc.stdin.flush()
            greeting = self._read_exact(len(HANDSHAKE))
            if greeting != HANDSHAKE:
                raise HandshakeError(f"bad handshake {greeting!r}")
        except Exception:
            self._proc.kill()
            self._proc.wait()
            raise

    def _read_exact(self, nbytes):
        fd = self._proc.stdout.fileno()
        chunks = []
        got = 0
        deadline = time.monotonic() + self.timeout
        while got < nbytes:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError(f"score server reply timed out after {self.timeout}s")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, nbytes - got)
            if not chunk:
                raise TransportError("score server closed its stream")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def score_grad(self, x, sigma):
        """Send one request and return the served gradient, shape (n, n)."""
        x = np.asarray(x)
        n = x.shape[0]
        with self._lock:
            try:
                self._proc.stdin.write(pack_request(x, sigma))
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise TransportError("score server pipe is closed") from exc
            header = self._read_exact(_HEADER_REP.size)
            magic, n_reply = _HEADER_REP.unpack(header)
            if magic == MAGIC_ERROR:
                msg = self._read_exact(n_reply).decode("utf-8", "replace")
                raise ProtocolError(f"server error: {msg}")
            if magic != MAGIC_REPLY:
                raise ProtocolError(f"unexpected reply magic 0x{magic:08x}")
            if n_reply != n:
                raise ProtocolError(f"shape mismatch: sent n={n}, got n={n_reply}")
            body = self._read_exact(4 * n * n)
        return np.frombuffer(body, dtype=np.float32).reshape(n, n).astype(np.float64)

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_score_client(endpoint, x, sigma):
    """Request the energy gradient of ``x`` at ``sigma`` from an endpoint."""
    return endpoint.score_grad(x, sigma)


class ExternalScoreProvider:
    """ScoreProvider facade over an ExternalScoreClient (no energy)."""

    has_energy = False

    def __init__(self, client):
        self.client = client

    def score_grad(self, x, sigma):
        return external_score_client(self.client, x, sigma)

    def energy(self, x, sigma):
        raise NotImplementedError("external providers expose no energy")
