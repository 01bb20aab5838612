"""Knowledge base documents, the retrieval index, and centroid routing.

A knowledge base on disk is a pair of files: an embedding file holding
one lock vector per row (see :mod:`defectseek.formats`) and a JSON-lines
manifest describing one document per line. Manifest keys:

    doc_id      required, unique string
    lock_row    required, row index into the embedding file
    category    optional string, the object or product family
    defect_type optional string
    page        optional non-negative integer
    summary     optional string

Unknown keys are ignored so manifests can carry extra metadata. An index
is built by gathering each document's lock row, normalizing it to unit
L2 norm, and freezing the result; document order follows manifest order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    DataError,
    DimensionError,
    EmptyStoreError,
    ManifestError,
)
from .formats import EmbeddingMatrix, load_embeddings, normalize_rows, save_embeddings

__all__ = [
    "KnowledgeDocument",
    "KnowledgeIndex",
    "CentroidStore",
    "PromptTemplates",
    "parse_manifest",
    "build_index",
    "save_index",
    "load_index",
    "save_centroids",
    "load_centroids",
    "nearest_centroid",
    "instantiate_prompts",
]

LOCKS_FILENAME = "locks.adsk"
DOCUMENTS_FILENAME = "documents.jsonl"
LABELS_SIDECAR_SUFFIX = ".labels.json"

_MANIFEST_FIELDS = ("doc_id", "category", "defect_type", "page", "summary", "lock_row")


@dataclass(frozen=True)
class KnowledgeDocument:
    """Metadata for one knowledge-base entry."""

    doc_id: str
    lock_row: int
    category: str = ""
    defect_type: str = ""
    page: int = 0
    summary: str = ""

    def to_json_obj(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "lock_row": self.lock_row,
            "category": self.category,
            "defect_type": self.defect_type,
            "page": self.page,
            "summary": self.summary,
        }


@dataclass(frozen=True)
class KnowledgeIndex:
    """Frozen retrieval index: documents plus unit-normalized lock vectors.

    ``locks.data[i]`` is the lock vector of ``documents[i]``; after
    construction a document's ``lock_row`` always equals its position.
    """

    documents: tuple[KnowledgeDocument, ...]
    locks: EmbeddingMatrix

    def __post_init__(self) -> None:
        if len(self.documents) != self.locks.count:
            raise ManifestError(
                f"index has {len(self.documents)} documents but "
                f"{self.locks.count} lock vectors"
            )

    def __len__(self) -> int:
        return len(self.documents)

    @property
    def dim(self) -> int:
        return self.locks.dim

    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.documents]


def _parse_manifest_line(line: str, lineno: int) -> KnowledgeDocument:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as err:
        raise ManifestError(f"manifest line {lineno}: invalid JSON ({err.msg})") from err
    if not isinstance(obj, dict):
        raise ManifestError(f"manifest line {lineno}: expected an object")
    if "doc_id" not in obj or "lock_row" not in obj:
        raise ManifestError(f"manifest line {lineno}: doc_id and lock_row are required")
    doc_id = obj["doc_id"]
    lock_row = obj["lock_row"]
    if not isinstance(doc_id, str) or not doc_id:
        raise ManifestError(f"manifest line {lineno}: doc_id must be a non-empty string")
    if not isinstance(lock_row, int) or isinstance(lock_row, bool) or lock_row < 0:
        raise ManifestError(
            f"manifest line {lineno}: lock_row must be a non-negative integer"
        )
    category = obj.get("category", "")
    defect_type = obj.get("defect_type", "")
    page = obj.get("page", 0)
    summary = obj.get("summary", "")
    if not isinstance(category, str) or not isinstance(defect_type, str):
        raise ManifestError(f"manifest line {lineno}: category/defect_type must be strings")
    if not isinstance(page, int) or isinstance(page, bool) or page < 0:
        raise ManifestError(f"manifest line {lineno}: page must be a non-negative integer")
    if not isinstance(summary, str):
        raise ManifestError(f"manifest line {lineno}: summary must be a string")
    return KnowledgeDocument(
        doc_id=doc_id,
        lock_row=lock_row,
        category=category,
        defect_type=defect_type,
        page=page,
        summary=summary,
    )


def parse_manifest(path: str | Path) -> list[KnowledgeDocument]:
    """Parse a JSON-lines manifest, rejecting duplicates and bad lines."""
    docs: list[KnowledgeDocument] = []
    seen: set[str] = set()
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        doc = _parse_manifest_line(line, lineno)
        if doc.doc_id in seen:
            raise ManifestError(f"manifest line {lineno}: duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        docs.append(doc)
    return docs


def build_index(
    documents: Sequence[KnowledgeDocument], embeddings: EmbeddingMatrix
) -> KnowledgeIndex:
    """Gather each document's lock row, normalize, and freeze the index."""
    rows = []
    rebound = []
    for pos, doc in enumerate(documents):
        if doc.lock_row >= embeddings.count:
            raise ManifestError(
                f"document {doc.doc_id!r} references lock_row {doc.lock_row} "
                f"but the embedding file has {embeddings.count} rows"
            )
        rows.append(doc.lock_row)
        rebound.append(
            KnowledgeDocument(
                doc_id=doc.doc_id,
                lock_row=pos,
                category=doc.category,
                defect_type=doc.defect_type,
                page=doc.page,
                summary=doc.summary,
            )
        )
    if rows:
        gathered = EmbeddingMatrix(data=embeddings.data[np.asarray(rows, dtype=np.intp)])
        locks = normalize_rows(gathered)
    else:
        locks = EmbeddingMatrix.empty(embeddings.dim)
    return KnowledgeIndex(documents=tuple(rebound), locks=locks)


def build_index_from_files(
    manifest_path: str | Path, embeddings_path: str | Path
) -> KnowledgeIndex:
    return build_index(parse_manifest(manifest_path), load_embeddings(embeddings_path))


def save_index(index: KnowledgeIndex, out_dir: str | Path) -> None:
    """Write an index bundle: locks file plus canonical documents.jsonl.

    Serialization is canonical (sorted keys, fixed separators) so equal
    indexes produce byte-identical bundles.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_embeddings(index.locks, out / LOCKS_FILENAME)
    lines = [
        json.dumps(doc.to_json_obj(), sort_keys=True, separators=(",", ":"))
        for doc in index.documents
    ]
    (out / DOCUMENTS_FILENAME).write_text(
        "".join(line + "\n" for line in lines), encoding="utf-8"
    )


def load_index(bundle_dir: str | Path) -> KnowledgeIndex:
    bundle = Path(bundle_dir)
    docs = parse_manifest(bundle / DOCUMENTS_FILENAME)
    locks = load_embeddings(bundle / LOCKS_FILENAME)
    return build_index(docs, locks)


# ---------------------------------------------------------------------------
# Centroid routing


@dataclass(frozen=True)
class CentroidStore:
    """Unit-normalized centroid vectors with one label per row."""

    centroids: EmbeddingMatrix
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.labels) != self.centroids.count:
            raise ManifestError(
                f"centroid store has {self.centroids.count} vectors but "
                f"{len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return self.centroids.count


def _labels_sidecar(path: str | Path) -> Path:
    return Path(str(path) + LABELS_SIDECAR_SUFFIX)


def save_centroids(store: CentroidStore, path: str | Path) -> None:
    """Write centroids in the embedding format plus a JSON label sidecar."""
    save_embeddings(store.centroids, path)
    _labels_sidecar(path).write_text(
        json.dumps(list(store.labels), separators=(",", ":")) + "\n", encoding="utf-8"
    )


def load_centroids(path: str | Path) -> CentroidStore:
    centroids = normalize_rows(load_embeddings(path))
    sidecar = _labels_sidecar(path)
    try:
        labels = json.loads(sidecar.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ManifestError(f"{sidecar}: invalid JSON ({err.msg})") from err
    if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
        raise ManifestError(f"{sidecar}: expected a JSON array of strings")
    return CentroidStore(centroids=centroids, labels=tuple(labels))


def nearest_centroid(key: np.ndarray, store: CentroidStore) -> tuple[int, str, float]:
    """Route a key vector to its most cosine-similar centroid.

    Returns (index, label, similarity). The key is normalized here, so
    callers may pass raw encoder output. Ties break to the lowest index.
    """
    if len(store) == 0:
        raise EmptyStoreError("centroid store is empty")
    vec = np.asarray(key, dtype=np.float64).reshape(-1)
    if vec.shape[0] != store.centroids.dim:
        raise DimensionError(
            f"key has dim {vec.shape[0]}, centroids have dim {store.centroids.dim}"
        )
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise DataError("key vector is zero, direction undefined")
    rows = store.centroids.rows64()
    # float32 storage leaves row norms unit only to ~1e-7, so divide by
    # the actual norms to report true cosines
    sims = (rows @ (vec / norm)) / np.linalg.norm(rows, axis=1)
    best = int(np.argmax(sims))  # argmax returns the first (lowest) max index
    return best, store.labels[best], float(sims[best])


# ---------------------------------------------------------------------------
# Prompt instantiation


@dataclass(frozen=True)
class PromptTemplates:
    """Text templates for the defect-describing and flawless prompts.

    ``[cls]`` is replaced with the defect label, ``[obj]`` with the
    object category. Both templates are configurable; the defaults match
    the type-level wording the knowledge bases are built around.
    """

    defect: str = "A image with [cls] defect type"
    normal: str = "A image with flawless [obj]"


def instantiate_prompts(
    label: str,
    category: str = "object",
    templates: PromptTemplates = PromptTemplates(),
) -> tuple[str, str]:
    """Render the (defect_text, normal_text) prompt pair for a label."""
    if not label:
        raise ArgumentError("prompt label must be non-empty")
    defect = templates.defect.replace("[cls]", label).replace("[obj]", category)
    normal = templates.normal.replace("[cls]", label).replace("[obj]", category)
    return defect, normal


def unique_tags(documents: Iterable[KnowledgeDocument]) -> list[str]:
    """Defect-type tags in first-seen order, blanks skipped."""
    seen: dict[str, None] = {}
    for doc in documents:
        if doc.defect_type and doc.defect_type not in seen:
            seen[doc.defect_type] = None
    return list(seen)
