"""embedexport: turn images or prompt texts into engine-format embedding files.

A thin adapter between local encoders and the retrieval engine's file
formats. It writes binary embedding files, JSON-lines manifests,
per-image patch grids, and per-tag centroid stores; the engine and this
package share nothing but the bytes on disk.
"""

from .binfmt import read_embeddings, unit_rows, write_embeddings
from .encoders import HASH_PATCH_GRID, ClipEncoder, HashEncoder, get_encoder
from .errors import (
    EncoderError,
    ExporterError,
    FormatError,
    InputError,
    SpecError,
    TagError,
)
from .export import ExportResult, export_centroids, export_embeddings, write_centroids
from .jobs import ExportJob, split_tag

__all__ = [
    "ClipEncoder",
    "EncoderError",
    "ExportJob",
    "ExportResult",
    "ExporterError",
    "FormatError",
    "HASH_PATCH_GRID",
    "HashEncoder",
    "InputError",
    "SpecError",
    "TagError",
    "export_centroids",
    "export_embeddings",
    "get_encoder",
    "read_embeddings",
    "split_tag",
    "unit_rows",
    "write_centroids",
    "write_embeddings",
]
