"""Binary PPM (P6) reading and writing."""

from __future__ import annotations

import os

import numpy as np


def encode_ppm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim == 2:
        img = np.repeat((img.astype(bool) * 255).astype(np.uint8)[..., None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("expected an (h, w, 3) uint8 image or an (h, w) mask")
    h, w = img.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes()


def write_ppm(path: str | os.PathLike, img: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_ppm(img))


def decode_ppm(data: bytes) -> np.ndarray:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    if tokens[0] != b"P6":
        raise ValueError(f"not a binary PPM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError("only 8-bit PPM files are supported")
    body = data[pos:pos + w * h * 3]
    if len(body) != w * h * 3:
        raise ValueError("truncated PPM pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_ppm(f.read())
