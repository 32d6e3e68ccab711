"""Length-prefixed stdio protocol for talking to an external shape predictor.

Frame layout (see docs/bridge_protocol.md for the byte-exact contract):

    u32 little-endian body length, then the body.
    Body = UTF-8 header lines, a blank line, then a raw float64 payload.

Frame types: hello (handshake, version 1), predict (scene id + per-view
camera poses and observed points), prediction (m xyz triples), error (kind +
message).  One request is in flight at a time.
"""

from __future__ import annotations

import os
import selectors
import struct
import subprocess
import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    BridgeError,
    BridgeProtocolError,
    BridgeSizeMismatch,
    BridgeTimeout,
)
from .geometry import PointSet

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0


def encode_frame(header_lines, payload: bytes = b"") -> bytes:
    body = ("\n".join(header_lines) + "\n\n").encode("utf-8") + payload
    return struct.pack("<I", len(body)) + body


def split_body(body: bytes):
    """Header lines and payload from a frame body."""
    sep = body.find(b"\n\n")
    if sep < 0:
        raise BridgeProtocolError("frame body lacks the blank separator line")
    header = body[:sep].decode("utf-8").split("\n")
    return header, body[sep + 2 :]


def encode_hello() -> bytes:
    return encode_frame(["hello", f"version {PROTOCOL_VERSION}"])


def parse_hello(header) -> int:
    if not header or header[0] != "hello":
        raise BridgeProtocolError(f"expected hello frame, got {header[:1]}")
    fields = _header_fields(header[1:])
    version = int(fields.get("version", "-1"))
    if version != PROTOCOL_VERSION:
        raise BridgeProtocolError(f"unsupported protocol version {version}")
    return version


def _header_fields(lines) -> dict:
    out = {}
    for line in lines:
        key, _, value = line.partition(" ")
        out[key] = value
    return out


def _pose_floats(view) -> np.ndarray:
    """Camera-to-world pose as a row-major 3x4 [R|t] block."""
    mat = np.hstack([view.rotation, view.center.reshape(3, 1)])
    return mat.reshape(-1)


def encode_predict(scene_id: str, views, observations, respond_m: int, fov_deg: float, max_range: float) -> bytes:
    if " " in scene_id:
        raise BridgeProtocolError("scene id must not contain spaces")
    counts = [len(o) for o in observations]
    header = [
        "predict",
        f"scene {scene_id}",
        f"views {len(views)}",
        "points " + " ".join(str(c) for c in counts),
        f"respond {respond_m}",
        f"fov {fov_deg:.9g}",
        f"range {max_range:.9g}",
    ]
    blocks = []
    for view, obs in zip(views, observations):
        blocks.append(_pose_floats(view).astype("<f8").tobytes())
        blocks.append(obs.xyz.astype("<f8").tobytes())
    return encode_frame(header, b"".join(blocks))


@dataclass
class PredictBody:
    scene_id: str
    poses: list  # (3, 4) arrays, camera-to-world
    observations: list  # (n_i, 3) arrays
    respond_m: int
    fov_deg: float
    max_range: float


def parse_predict(header, payload: bytes) -> PredictBody:
    if header[0] != "predict":
        raise BridgeProtocolError(f"expected predict frame, got {header[0]!r}")
    fields = _header_fields(header[1:])
    try:
        scene = fields["scene"]
        k = int(fields["views"])
        counts = [int(c) for c in fields["points"].split()] if fields["points"].strip() else []
        m = int(fields["respond"])
        fov = float(fields["fov"])
        rng_ = float(fields["range"])
    except (KeyError, ValueError) as exc:
        raise BridgeProtocolError(f"malformed predict header: {exc}") from exc
    if len(counts) != k:
        raise BridgeProtocolError(f"{k} views but {len(counts)} point counts")
    expected = sum(8 * (12 + 3 * c) for c in counts)
    if len(payload) != expected:
        raise BridgeProtocolError(f"payload is {len(payload)} bytes, expected {expected}")
    poses, observations = [], []
    offset = 0
    for c in counts:
        poses.append(np.frombuffer(payload, "<f8", 12, offset).reshape(3, 4).copy())
        offset += 96
        observations.append(np.frombuffer(payload, "<f8", 3 * c, offset).reshape(c, 3).copy())
        offset += 24 * c
    return PredictBody(scene, poses, observations, m, fov, rng_)


def encode_prediction(scene_id: str, points: np.ndarray) -> bytes:
    points = np.asarray(points, dtype=np.float64)
    header = ["prediction", f"scene {scene_id}", f"points {len(points)}"]
    return encode_frame(header, points.astype("<f8").tobytes())


def encode_error(kind: str, message: str) -> bytes:
    return encode_frame(["error", f"kind {kind}", "message " + message.replace("\n", " ")])


def parse_response(header, payload: bytes, scene_id: str, expect_m: int) -> PointSet:
    """Validate a prediction frame against the request it answers."""
    if header[0] == "error":
        fields = _header_fields(header[1:])
        kind = fields.get("kind", "internal")
        msg = fields.get("message", "")
        if kind == "timeout":
            raise BridgeTimeout(msg)
        if kind == "size":
            raise BridgeSizeMismatch(msg)
        raise BridgeError(f"{kind}: {msg}")
    if header[0] != "prediction":
        raise BridgeProtocolError(f"unexpected frame type {header[0]!r}")
    fields = _header_fields(header[1:])
    if fields.get("scene") != scene_id:
        raise BridgeProtocolError(
            f"response for scene {fields.get('scene')!r}, expected {scene_id!r}"
        )
    n = int(fields.get("points", "-1"))
    if n != expect_m:
        raise BridgeSizeMismatch(f"response holds {n} points, requested {expect_m}")
    if len(payload) != 24 * n:
        raise BridgeProtocolError(f"payload is {len(payload)} bytes for {n} points")
    return PointSet(np.frombuffer(payload, "<f8").reshape(n, 3).copy())


def _read_exact(fd: int, n: int, deadline: float) -> bytes:
    sel = selectors.DefaultSelector()
    sel.register(fd, selectors.EVENT_READ)
    chunks, got = [], 0
    try:
        while got < n:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BridgeTimeout(f"read of {n} bytes stalled after {got}")
            if not sel.select(timeout=remaining):
                continue
            chunk = os.read(fd, n - got)
            if not chunk:
                raise BridgeProtocolError("external process closed the stream")
            chunks.append(chunk)
            got += len(chunk)
    finally:
        sel.close()
    return b"".join(chunks)


def read_frame(fd: int, timeout: float):
    deadline = time.monotonic() + timeout
    (length,) = struct.unpack("<I", _read_exact(fd, 4, deadline))
    body = _read_exact(fd, length, deadline)
    return split_body(body)


class BridgeEndpoint:
    """Handle to one external predictor process; serializes its requests."""

    def __init__(self, command, timeout: float = DEFAULT_TIMEOUT):
        self.command = list(command)
        self.timeout = timeout
        self.proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE
        )
        try:
            self._send(encode_hello())
            header, _ = read_frame(self.proc.stdout.fileno(), timeout)
            parse_hello(header)
        except Exception:
            self.close()
            raise

    def _send(self, frame: bytes):
        self.proc.stdin.write(frame)
        self.proc.stdin.flush()

    def request(self, scene_id: str, views, observations, respond_m: int, fov_deg: float, max_range: float) -> PointSet:
        self._send(
            encode_predict(scene_id, views, observations, respond_m, fov_deg, max_range)
        )
        header, payload = read_frame(self.proc.stdout.fileno(), self.timeout)
        return parse_response(header, payload, scene_id, respond_m)

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
