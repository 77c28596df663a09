"""Minimal binary PGM (P5) and PFM (Pf) codecs.

Both formats carry the depth maps and edge masks this package consumes.
Parse errors report the byte offset where decoding stopped making sense.
"""

from __future__ import annotations

import numpy as np


class PnmError(ValueError):
    """Malformed PGM/PFM payload."""


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    """Next whitespace-delimited header token, skipping '#' comments."""
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise PnmError(f"truncated header at byte {pos}")
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def _int_token(data: bytes, pos: int, what: str) -> tuple[int, int]:
    token, pos = _read_token(data, pos)
    try:
        return int(token), pos
    except ValueError:
        raise PnmError(f"bad {what} token {token!r} at byte {pos}") from None


def parse_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Decode binary PGM; returns (row-major array, maxval).

    Samples are one byte for maxval < 256, otherwise two bytes big-endian,
    per the netpbm convention.
    """
    if data[:2] != b"P5":
        raise PnmError("bad magic, expected P5 at byte 0")
    width, pos = _int_token(data, 2, "width")
    height, pos = _int_token(data, pos, "height")
    maxval, pos = _int_token(data, pos, "maxval")
    if width <= 0 or height <= 0:
        raise PnmError(f"non-positive dimensions at byte {pos}")
    if not (0 < maxval < 65536):
        raise PnmError(f"maxval {maxval} out of range at byte {pos}")
    pos += 1  # single whitespace byte separates header from samples
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    body = data[pos:pos + need]
    if len(body) < need:
        raise PnmError(f"truncated pixel data at byte {pos + len(body)}")
    arr = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return arr.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def serialize_pgm(arr: np.ndarray, maxval: int | None = None) -> bytes:
    a = np.asarray(arr)
    if a.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    if maxval is None:
        maxval = 65535 if a.max(initial=0) > 255 else 255
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n{maxval}\n".encode()
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    return header + a.astype(dtype).tobytes()


def parse_pfm(data: bytes) -> np.ndarray:
    """Decode grayscale PFM to float32, top-down row order.

    PFM stores scanlines bottom-up; the sign of the scale line selects
    endianness (negative = little-endian). The scale magnitude is ignored.
    """
    magic, pos = _read_token(data, 0)
    if magic != b"Pf":
        raise PnmError("bad magic, expected Pf at byte 0")
    width, pos = _int_token(data, pos, "width")
    height, pos = _int_token(data, pos, "height")
    token, pos = _read_token(data, pos)
    try:
        scale = float(token)
    except ValueError:
        raise PnmError(f"bad scale token {token!r} at byte {pos}") from None
    if scale == 0.0:
        raise PnmError(f"zero scale at byte {pos}")
    if width <= 0 or height <= 0:
        raise PnmError(f"non-positive dimensions at byte {pos}")
    pos += 1
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    need = width * height * 4
    body = data[pos:pos + need]
    if len(body) < need:
        raise PnmError(f"truncated pixel data at byte {pos + len(body)}")
    arr = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return arr[::-1].astype(np.float32)


def serialize_pfm(arr: np.ndarray) -> bytes:
    a = np.asarray(arr, dtype=np.float32)
    if a.ndim != 2:
        raise ValueError("PFM needs a 2-D array")
    header = f"Pf\n{a.shape[1]} {a.shape[0]}\n-1.0\n".encode()
    return header + a[::-1].astype("<f4").tobytes()
