"""Stdio prediction server speaking the length-prefixed bridge protocol.

Frames are a u32 little-endian body length, then UTF-8 header lines, a blank
line, and a float64 payload.  The server answers hello with hello (version
1), predict with prediction, and anything it cannot parse with an error
frame, staying alive either way.  Scene ids starting with `conformance-` are
harness checks handled without the model; `conformance-echo` returns the
deduplicated observations resized to the requested count.
"""

from __future__ import annotations

import struct
import sys

import numpy as np

PROTOCOL_VERSION = 1


class ProtocolError(Exception):
    pass


class SizeError(Exception):
    pass


def _encode_frame(header_lines, payload: bytes = b"") -> bytes:
    body = ("\n".join(header_lines) + "\n\n").encode("utf-8") + payload
    return struct.pack("<I", len(body)) + body


def _error_frame(kind: str, message: str) -> bytes:
    return _encode_frame(["error", f"kind {kind}", "message " + message.replace("\n", " ")])


def _fields(lines) -> dict:
    out = {}
    for line in lines:
        key, _, value = line.partition(" ")
        out[key] = value
    return out


def _read_exact(stream, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            raise EOFError(f"stream closed {got} bytes into a {n}-byte read")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def parse_predict(header, payload: bytes):
    """(scene, poses (k,3,4), observations [(n_i,3) raw], m, fov, range)."""
    fields = _fields(header[1:])
    try:
        scene = fields["scene"]
        k = int(fields["views"])
        counts = [int(c) for c in fields["points"].split()] if fields["points"].strip() else []
        m = int(fields["respond"])
        fov = float(fields["fov"])
        max_range = float(fields["range"])
    except (KeyError, ValueError) as exc:
        raise ProtocolError(f"malformed predict header: {exc}") from exc
    if k < 0 or m < 0 or any(c < 0 for c in counts):
        raise ProtocolError("counts must be non-negative")
    if len(counts) != k:
        raise ProtocolError(f"{k} views but {len(counts)} point counts")
    expected = sum(8 * (12 + 3 * c) for c in counts)
    if len(payload) != expected:
        raise ProtocolError(f"payload is {len(payload)} bytes, expected {expected}")
    poses, observations = [], []
    offset = 0
    for c in counts:
        poses.append(np.frombuffer(payload, "<f8", 12, offset).reshape(3, 4).copy())
        offset += 96
        observations.append(np.frombuffer(payload, "<f8", 3 * c, offset).reshape(c, 3).copy())
        offset += 24 * c
    return scene, poses, observations, m, fov, max_range


def echo_points(observations, m: int) -> np.ndarray:
    """Concatenate in view order, keep first occurrence of duplicate rows,
    resize to m by truncating or cycling from the start.  Bit-exact."""
    if observations:
        rows = np.vstack(observations)
    else:
        rows = np.empty((0, 3))
    seen = {}
    for i in range(len(rows)):
        seen.setdefault(rows[i].tobytes(), i)
    unique = rows[sorted(seen.values())]
    if m == 0:
        return np.empty((0, 3))
    if len(unique) == 0:
        raise SizeError("cannot pad an empty observation set")
    return unique[np.arange(m) % len(unique)]


class BridgeServer:
    """One model serving one stream pair, one request at a time."""

    def __init__(self, model, stdin, stdout, sample_seed: int = 0):
        self.model = model
        self.stdin = stdin
        self.stdout = stdout
        self.sample_seed = sample_seed

    def _send(self, frame: bytes):
        self.stdout.write(frame)
        self.stdout.flush()

    def _predict(self, scene, poses, observations, m, fov, max_range) -> np.ndarray:
        if scene == "conformance-echo":
            return echo_points(observations, m)
        if scene.startswith("conformance-"):
            raise ProtocolError(f"unknown conformance scene {scene!r}")
        if not poses:
            raise ProtocolError("predict carries no views")
        from .raster import render

        res = self.model.encoder.res
        rasters = np.stack(
            [render(obs, pose, fov, max_range, res) for pose, obs in zip(poses, observations)]
        )
        flat = np.stack([pose.reshape(12) for pose in poses])
        return self.model.predict(rasters, flat, m, seed=self.sample_seed)

    def handle(self, header, payload: bytes) -> bytes:
        kind = header[0] if header else ""
        if kind == "hello":
            version = _fields(header[1:]).get("version")
            if version != str(PROTOCOL_VERSION):
                return _error_frame("protocol", f"unsupported version {version}")
            return _encode_frame(["hello", f"version {PROTOCOL_VERSION}"])
        if kind != "predict":
            raise ProtocolError(f"unexpected frame type {kind!r}")
        scene, poses, observations, m, fov, max_range = parse_predict(header, payload)
        points = self._predict(scene, poses, observations, m, fov, max_range)
        body = np.ascontiguousarray(points, dtype="<f8").tobytes()
        return _encode_frame(["prediction", f"scene {scene}", f"points {len(points)}"], body)

    def serve_forever(self) -> int:
        while True:
            try:
                (length,) = struct.unpack("<I", _read_exact(self.stdin, 4))
                body = _read_exact(self.stdin, length)
            except EOFError:
                return 0
            sep = body.find(b"\n\n")
            if sep < 0:
                self._send(_error_frame("protocol", "frame body lacks the blank separator line"))
                continue
            try:
                header = body[:sep].decode("utf-8").split("\n")
            except UnicodeDecodeError:
                self._send(_error_frame("protocol", "frame header is not UTF-8"))
                continue
            try:
                self._send(self.handle(header, body[sep + 2 :]))
            except ProtocolError as exc:
                self._send(_error_frame("protocol", str(exc)))
            except SizeError as exc:
                self._send(_error_frame("size", str(exc)))
            except Exception as exc:  # noqa: BLE001 - the stream must survive
                self._send(_error_frame("internal", f"{type(exc).__name__}: {exc}"))


def run(checkpoint_path) -> int:
    import torch

    from .train import load_checkpoint

    torch.set_num_threads(1)  # keeps repeat requests bit-identical
    model = load_checkpoint(checkpoint_path)
    return BridgeServer(model, sys.stdin.buffer, sys.stdout.buffer).serve_forever()
