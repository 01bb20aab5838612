"""Minimal binary PGM (P5) reader and writer.

Localization maps are written as 8-bit P5 images, values scaled from
[0, 1] to 0..255 by round-half-away. Masks use 0 for clean and 255 for
defective pixels. The writer emits a fixed header layout so equal maps
produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, FormatError

__all__ = ["write_pgm", "read_pgm", "scale_to_u8"]


def scale_to_u8(values: np.ndarray) -> np.ndarray:
    vals = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise DataError("cannot write non-finite values to a PGM")
    if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
        raise DataError("PGM input values must lie in [0, 1]")
    return np.floor(vals * 255.0 + 0.5).astype(np.uint8)


def write_pgm(values: np.ndarray, path: str | Path) -> None:
    """Write a 2-D array in [0, 1] (float) or uint8 as binary PGM."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise DimensionError(f"PGM payload must be 2-D, got shape {arr.shape}")
    pixels = arr if arr.dtype == np.uint8 else scale_to_u8(arr)
    h, w = pixels.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(pixels).tobytes())


def _read_header_tokens(raw: bytes, count: int) -> tuple[list[int], int]:
    """Pull whitespace/comment-delimited integer tokens after the magic."""
    tokens: list[int] = []
    i = 2  # past "P5"
    while len(tokens) < count:
        if i >= len(raw):
            raise FormatError("PGM header ended early")
        c = raw[i : i + 1]
        if c == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        elif c.isdigit():
            j = i
            while j < len(raw) and raw[j : j + 1].isdigit():
                j += 1
            tokens.append(int(raw[i:j]))
            i = j
        else:
            raise FormatError(f"unexpected byte {c!r} in PGM header")
    return tokens, i + 1  # single whitespace byte separates header and payload


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM into a uint8 (h, w) array."""
    raw = Path(path).read_bytes()
    if raw[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (missing P5 magic)")
    (w, h, maxval), offset = _read_header_tokens(raw, 3)
    if maxval < 1 or maxval > 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    expected = offset + w * h
    if len(raw) < expected:
        raise FormatError(f"{path}: truncated payload")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=offset)
    return pixels.reshape(h, w).copy()
