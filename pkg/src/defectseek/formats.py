"""Embedding matrix container and its on-disk binary format.

Layout of an embedding file, all integers little-endian:

    offset  size          field
    0       4             magic ``ADSK``
    4       4             format version, u32, currently 1
    8       4             dim, u32, vector dimensionality (>= 1)
    12      8             count, u64, number of vectors (>= 0)
    20      4*dim*count   payload, float32, row-major, no padding

A well-formed file contains exactly the header plus the payload, so
``save_embeddings(load_embeddings(path))`` reproduces the input byte for
byte. Payload values must be finite; NaN or Inf anywhere is rejected.

Vectors are float32 on disk. Numerical routines in this package convert
to float64 at the boundary and keep accumulations in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, FormatError

MAGIC = b"ADSK"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")

__all__ = [
    "EmbeddingMatrix",
    "load_embeddings",
    "save_embeddings",
    "normalize_rows",
]


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Immutable (count, dim) block of float32 embedding vectors."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise DimensionError(f"embedding data must be 2-D, got shape {arr.shape}")
        if arr.shape[1] < 1:
            raise DimensionError("embedding dim must be at least 1")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if not np.all(np.isfinite(arr)):
            raise DataError("embedding payload contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def count(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])

    def row(self, i: int) -> np.ndarray:
        return self.data[i]

    def rows64(self) -> np.ndarray:
        """Payload as float64, the working precision of every solver here."""
        return self.data.astype(np.float64)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "EmbeddingMatrix":
        return cls(data=np.asarray(arr))

    @classmethod
    def empty(cls, dim: int) -> "EmbeddingMatrix":
        return cls(data=np.zeros((0, dim), dtype=np.float32))


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Read an embedding file, validating header and payload exactly.

    Raises FormatError for bad magic, unsupported version, truncated or
    oversized payload, and DataError for non-finite values.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, dim, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if dim < 1:
        raise FormatError(f"{path}: dim must be >= 1, got {dim}")
    expected = _HEADER.size + 4 * dim * count
    if len(raw) != expected:
        kind = "truncated" if len(raw) < expected else "trailing bytes in"
        raise FormatError(
            f"{path}: {kind} payload, expected {expected} bytes total, got {len(raw)}"
        )
    payload = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    matrix = payload.reshape(count, dim).copy()
    if not np.all(np.isfinite(matrix)):
        raise DataError(f"{path}: payload contains non-finite values")
    return EmbeddingMatrix(data=matrix)


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Write an embedding file. Output is deterministic for equal input."""
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, matrix.dim, matrix.count)
    payload = np.ascontiguousarray(matrix.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def normalize_rows(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit L2 norm.

    Norms are computed in float64 and the result is rounded back to
    float32, so renormalizing an already normalized matrix is a no-op up
    to one float32 ulp per element. A zero row has no direction and is
    rejected with DataError.
    """
    rows = matrix.rows64()
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataError(f"cannot normalize zero vector at row {int(zero[0])}")
    return EmbeddingMatrix(data=(rows / norms[:, None]).astype(np.float32))
