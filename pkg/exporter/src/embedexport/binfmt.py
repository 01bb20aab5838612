"""Binary embedding files in the retrieval engine's on-disk layout.

All integers little-endian:

    offset  size          field
    0       4             magic ``ADSK``
    4       4             format version, u32, currently 1
    8       4             dim, u32, >= 1
    12      8             count, u64, >= 0
    20      4*dim*count   payload, float32, row-major, no padding

The engine consumes these files as-is; this module is the exporter's
own writer and reader so the two packages share nothing but the bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError

MAGIC = b"ADSK"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")

__all__ = ["write_embeddings", "read_embeddings", "unit_rows"]


def write_embeddings(rows: np.ndarray, path: str | Path) -> None:
    """Write a (count, dim) float32 block, header plus payload only."""
    arr = np.ascontiguousarray(rows, dtype=np.float32)
    if arr.ndim != 2:
        raise InputError(f"embedding rows must be 2-D, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise InputError("embedding dim must be at least 1")
    if not np.all(np.isfinite(arr)):
        raise InputError("embedding payload contains non-finite values")
    count, dim = arr.shape
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, dim, count)
    Path(path).write_bytes(header + arr.tobytes())


def read_embeddings(path: str | Path) -> np.ndarray:
    """Read a file written by :func:`write_embeddings`; float32 (count, dim)."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: too short for the embedding header")
    magic, version, dim, count = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if dim < 1:
        raise FormatError(f"{path}: dim must be >= 1, got {dim}")
    expected = _HEADER.size + 4 * dim * count
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    payload = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    if not np.all(np.isfinite(payload)):
        raise FormatError(f"{path}: payload contains non-finite values")
    return payload.reshape(count, dim).copy()


def unit_rows(rows: np.ndarray) -> np.ndarray:
    """L2-normalize rows in float64, return float32."""
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2:
        raise InputError(f"expected a 2-D block, got shape {arr.shape}")
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0.0):
        raise InputError("cannot normalize a zero row")
    return (arr / norms[:, None]).astype(np.float32)
