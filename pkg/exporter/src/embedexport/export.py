"""Export pipeline: encode every input, then write engine-format artifacts.

Encoding runs before any write, so a bundle either lands complete or
not at all: per-input failures are logged as warnings and the job then
fails listing them.

Written layout under the output directory:

    embeddings.adsk              one unit-norm row per input
    manifest.jsonl               doc_id, lock_row, category, defect_type, summary
    patches/<doc_id>.adsk        per-image patch tokens (with --patch-grid)
    patches/<doc_id>.grid.json   grid shape sidecar
    centroids.adsk               per-tag centroids (when requested)
    centroids.adsk.labels.json   one tag label per centroid row
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .binfmt import write_embeddings
from .encoders import get_encoder
from .errors import InputError, SpecError, TagError
from .jobs import ExportJob, split_tag

__all__ = ["ExportResult", "export_embeddings", "export_centroids", "write_centroids"]

log = logging.getLogger("embedexport")

NORM_TOLERANCE = 1e-5
KMEANS_SWEEPS = 100


@dataclass(frozen=True)
class ExportResult:
    out_dir: str
    files: tuple[str, ...]  # relative to out_dir, sorted
    count: int
    dim: int


def _doc_ids(job: ExportJob) -> list[str]:
    if job.kind == "texts":
        return [f"prompt-{i:03d}" for i in range(len(job.inputs))]
    ids = [Path(item).stem for item in job.inputs]
    seen: set[str] = set()
    for doc_id in ids:
        if doc_id in seen:
            raise InputError(
                f"duplicate document id {doc_id!r}; input stems must be unique"
            )
        seen.add(doc_id)
    return ids


def _check_unit_rows(rows: np.ndarray) -> None:
    norms = np.linalg.norm(rows.astype(np.float64), axis=1)
    worst = float(np.max(np.abs(norms - 1.0)))
    if worst > NORM_TOLERANCE:
        raise InputError(f"encoder produced a row with norm off by {worst:.2e}")


def _canonical_json(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def export_embeddings(job: ExportJob) -> ExportResult:
    """Encode the job's inputs and write the embedding bundle."""
    encoder = get_encoder(job.encoder_id)
    doc_ids = _doc_ids(job)
    rows: list[np.ndarray] = []
    grids: list[tuple[np.ndarray, int, int]] = []
    failures: list[str] = []
    for item in job.inputs:
        try:
            if job.kind == "images":
                rows.append(encoder.embed_file(item))
                if job.patch_grid:
                    grids.append(encoder.patch_tokens(item))
            else:
                rows.append(encoder.embed_text(item))
        except InputError as err:
            log.warning("skipping %s: %s", item, err)
            failures.append(f"{item} ({err})")
    if failures:
        raise InputError(
            f"{len(failures)} of {len(job.inputs)} inputs failed to encode: "
            + "; ".join(failures)
        )

    matrix = np.stack(rows).astype(np.float32)
    _check_unit_rows(matrix)
    for tokens, _, _ in grids:
        _check_unit_rows(tokens)

    out = Path(job.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = ["embeddings.adsk", "manifest.jsonl"]
    write_embeddings(matrix, out / "embeddings.adsk")

    lines = []
    for row, (doc_id, tag) in enumerate(zip(doc_ids, job.tags)):
        category, defect_type = split_tag(tag)
        lines.append(
            _canonical_json(
                {
                    "doc_id": doc_id,
                    "lock_row": row,
                    "category": category,
                    "defect_type": defect_type,
                    "summary": job.inputs[row] if job.kind == "texts" else "",
                }
            )
        )
    (out / "manifest.jsonl").write_text(
        "".join(line + "\n" for line in lines), encoding="utf-8"
    )

    if grids:
        (out / "patches").mkdir(exist_ok=True)
        for doc_id, (tokens, grid_h, grid_w) in zip(doc_ids, grids):
            patch_path = out / "patches" / f"{doc_id}.adsk"
            write_embeddings(tokens, patch_path)
            patch_path.with_suffix(".grid.json").write_text(
                _canonical_json({"grid_h": grid_h, "grid_w": grid_w}) + "\n",
                encoding="utf-8",
            )
            files.append(f"patches/{doc_id}.adsk")
            files.append(f"patches/{doc_id}.grid.json")

    return ExportResult(
        out_dir=str(out),
        files=tuple(sorted(files)),
        count=matrix.shape[0],
        dim=matrix.shape[1],
    )


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Plain seeded k-means; an emptied cluster keeps its previous center."""
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[int(rng.integers(points.shape[0]))]
    d2 = np.sum(np.square(points - centers[0]), axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(points.shape[0]))
        else:
            idx = int(rng.choice(points.shape[0], p=d2 / total))
        centers[j] = points[idx]
        np.minimum(d2, np.sum(np.square(points - centers[j]), axis=1), out=d2)
    for _ in range(KMEANS_SWEEPS):
        dist = np.sum(
            np.square(points[:, None, :] - centers[None, :, :]), axis=2
        )
        assign = np.argmin(dist, axis=1)
        moved = False
        for j in range(k):
            members = points[assign == j]
            if members.size:
                mean = members.mean(axis=0)
                if not np.array_equal(mean, centers[j]):
                    centers[j] = mean
                    moved = True
        if not moved:
            break
    return centers


def export_centroids(
    keys: np.ndarray,
    tags: Sequence[str],
    c: int = 1,
    seed: int = 0,
    expected_tags: Sequence[str] | None = None,
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Per-tag centroids over key vectors: C seeded k-means centers per tag.

    The default C = 1 reduces to the renormalized per-tag mean. Tags are
    processed in sorted order so output rows are deterministic. When
    ``expected_tags`` is given, every expected tag must have members.
    """
    arr = np.asarray(keys, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise InputError(f"keys must be a non-empty 2-D block, got shape {arr.shape}")
    if len(tags) != arr.shape[0]:
        raise TagError(f"{arr.shape[0]} keys need {arr.shape[0]} tags, got {len(tags)}")
    if c < 1:
        raise SpecError(f"centroid count must be >= 1, got {c}")
    groups: dict[str, list[int]] = {}
    for i, tag in enumerate(tags):
        if not tag:
            raise TagError("tags must be non-empty")
        groups.setdefault(tag, []).append(i)
    if expected_tags is not None:
        for tag in expected_tags:
            if tag not in groups:
                raise SpecError(f"tag {tag!r} has no members")

    centroid_rows: list[np.ndarray] = []
    labels: list[str] = []
    for tag_index, tag in enumerate(sorted(groups)):
        members = arr[groups[tag]]
        if members.shape[0] < c:
            raise SpecError(
                f"tag {tag!r} has {members.shape[0]} keys, fewer than {c} centroids"
            )
        if c == 1:
            centers = members.mean(axis=0)[None, :]
        else:
            centers = _kmeans(members, c, np.random.default_rng([seed, tag_index]))
        norms = np.linalg.norm(centers, axis=1)
        if np.any(norms == 0.0):
            raise SpecError(f"keys tagged {tag!r} average out to a zero vector")
        centroid_rows.append(centers / norms[:, None])
        labels.extend([tag] * c)
    return np.concatenate(centroid_rows).astype(np.float32), tuple(labels)


def write_centroids(
    centroids: np.ndarray, labels: Sequence[str], path: str | Path
) -> None:
    """Write centroids plus the label sidecar the engine expects."""
    if len(labels) != np.asarray(centroids).shape[0]:
        raise TagError("one label per centroid row required")
    write_embeddings(centroids, path)
    Path(str(path) + ".labels.json").write_text(
        json.dumps(list(labels), separators=(",", ":")) + "\n", encoding="utf-8"
    )
