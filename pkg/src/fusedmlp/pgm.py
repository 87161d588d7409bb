"""Minimal binary PGM (P5, 8-bit) reader and writer."""
from __future__ import annotations

import os

import numpy as np


class PgmError(ValueError):
    pass


def _tokens(data: bytes, count: int):
    pos = 0
    out = []
    while len(out) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PgmError("unexpected end of header")
        out.append(data[start:pos])
    return out, pos


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read an 8-bit P5 image as a ``(height, width)`` uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), pos = _tokens(data, 4)
    if magic != b"P5":
        raise PgmError(f"not a binary PGM (magic {magic!r})")
    try:
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise PgmError(f"bad header field: {exc}") from None
    if maxval != 255:
        raise PgmError(f"only 8-bit PGM is supported, maxval={maxval}")
    if width <= 0 or height <= 0:
        raise PgmError(f"bad dimensions {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    pixels = data[pos:pos + width * height]
    if len(pixels) != width * height:
        raise PgmError(f"expected {width * height} pixel bytes, found {len(pixels)}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path: str | os.PathLike, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise PgmError("expected a 2-D uint8 image")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image).tobytes())
