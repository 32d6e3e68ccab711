#!/usr/bin/env python3
"""Stub external predictor for tests: answers with the observation union.

Speaks the stdio bridge protocol.  The prediction is the concatenation of
all observed points with exact duplicate rows removed (first occurrence
kept), padded or truncated to the requested size.  Misbehavior flags let
client-side error handling be exercised:

    --short      respond with one point fewer than requested
    --sleep S    wait S seconds before each response
    --garbage    reply to the first predict with an undersized junk frame
"""

import argparse
import struct
import sys
import time

import numpy as np

from nbvsim.bridge import (
    encode_error,
    encode_hello,
    encode_prediction,
    parse_hello,
    parse_predict,
    split_body,
)
from nbvsim.predictor import resize_points


def read_body_blocking(stream):
    head = stream.read(4)
    if len(head) < 4:
        return None
    (length,) = struct.unpack("<I", head)
    body = stream.read(length)
    if len(body) < length:
        return None
    return body


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--short", action="store_true")
    ap.add_argument("--sleep", type=float, default=0.0)
    ap.add_argument("--garbage", action="store_true")
    args = ap.parse_args()

    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer

    body = read_body_blocking(stdin)
    if body is None:
        return
    parse_hello(split_body(body)[0])
    stdout.write(encode_hello())
    stdout.flush()

    while True:
        body = read_body_blocking(stdin)
        if body is None:
            return
        if args.sleep:
            time.sleep(args.sleep)
        if args.garbage:
            stdout.write(struct.pack("<I", 7) + b"junk")
            stdout.flush()
            return
        try:
            header, payload = split_body(body)
            req = parse_predict(header, payload)
        except Exception as exc:  # report malformed input instead of dying
            stdout.write(encode_error("protocol", str(exc)))
            stdout.flush()
            continue
        if req.observations:
            stacked = np.vstack(req.observations)
            _, first = np.unique(stacked, axis=0, return_index=True)
            union = stacked[np.sort(first)]
        else:
            union = np.zeros((0, 3))
        m = req.respond_m - 1 if args.short else req.respond_m
        stdout.write(encode_prediction(req.scene_id, resize_points(union, m)))
        stdout.flush()


if __name__ == "__main__":
    main()
