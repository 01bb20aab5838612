"""Synthetic fixtures with planted ground truth.

Two generators cover the evaluation needs:

* ``gen_planted_kb`` builds a knowledge base whose key-to-lock cosine
  scores land in planned clusters (count, center, spread per cluster),
  with a chosen number of relevant documents planted as the top scorers
  of their cluster. The key is the first basis vector and each lock is
  ``s * e1 + sqrt(1 - s**2) * u`` for a random unit ``u`` orthogonal to
  ``e1``, so the planned score is the realized cosine up to float32
  rounding.

* ``gen_defect_grid`` builds a patch grid where patches inside a
  rectangle are displaced toward the defect prompt direction and
  patches outside toward the flawless direction, both with strength
  ``signal`` on top of isotropic ``noise``.

Both are deterministic functions of (plan, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SpecError
from .formats import EmbeddingMatrix, save_embeddings
from .knowledge import KnowledgeDocument, KnowledgeIndex, build_index
from .localization import PatchGrid
from .pgm import write_pgm

__all__ = [
    "ClusterPlan",
    "KbPlan",
    "DefectPlan",
    "PlantedKb",
    "DefectSample",
    "gen_planted_kb",
    "gen_defect_grid",
    "parse_plan",
    "load_plan",
    "write_kb_fixture",
    "write_defect_fixture",
]


@dataclass(frozen=True)
class ClusterPlan:
    """One score cluster: how many docs, where, how tight, how many relevant."""

    count: int
    center: float
    spread: float
    relevant: int = 0
    label: str = ""

    def __post_init__(self) -> None:
        if self.count < 1:
            raise SpecError(f"cluster count must be >= 1, got {self.count}")
        if not -1.0 < self.center < 1.0:
            raise SpecError(f"cluster center must lie in (-1, 1), got {self.center}")
        if self.spread < 0.0:
            raise SpecError(f"cluster spread must be >= 0, got {self.spread}")
        if not 0 <= self.relevant <= self.count:
            raise SpecError(
                f"relevant count {self.relevant} outside [0, {self.count}]"
            )


@dataclass(frozen=True)
class KbPlan:
    dim: int
    clusters: tuple[ClusterPlan, ...]
    category: str = "widget"

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise SpecError(f"kb dim must be >= 2, got {self.dim}")
        if not self.clusters:
            raise SpecError("kb plan needs at least one cluster")

    @property
    def total(self) -> int:
        return sum(c.count for c in self.clusters)


@dataclass(frozen=True)
class DefectPlan:
    grid_h: int
    grid_w: int
    rect: tuple[int, int, int, int]  # top, left, height, width
    signal: float
    noise: float
    dim: int

    def __post_init__(self) -> None:
        if self.grid_h < 1 or self.grid_w < 1:
            raise SpecError(f"grid must be at least 1x1, got {self.grid_h}x{self.grid_w}")
        top, left, rect_h, rect_w = self.rect
        if min(top, left, rect_h, rect_w) < 0:
            raise SpecError(f"rect entries must be >= 0, got {self.rect}")
        if top + rect_h > self.grid_h or left + rect_w > self.grid_w:
            raise SpecError(f"rect {self.rect} exceeds grid {self.grid_h}x{self.grid_w}")
        if self.dim < 3:
            raise SpecError(f"defect grid dim must be >= 3, got {self.dim}")
        if self.signal < 0.0 or self.noise < 0.0:
            raise SpecError("signal and noise must be >= 0")
        if self.signal == 0.0 and self.noise == 0.0:
            raise SpecError("signal and noise cannot both be 0")


@dataclass(frozen=True)
class PlantedKb:
    documents: tuple[KnowledgeDocument, ...]
    embeddings: EmbeddingMatrix
    key: np.ndarray
    relevant_ids: tuple[str, ...]

    def index(self) -> KnowledgeIndex:
        return build_index(self.documents, self.embeddings)


@dataclass(frozen=True)
class DefectSample:
    patches: PatchGrid
    mask: np.ndarray
    normal_prompt: np.ndarray
    anomaly_prompt: np.ndarray


def _unit_orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Random unit vector in the span of basis vectors 2..dim."""
    u = rng.standard_normal(dim - 1)
    norm = np.linalg.norm(u)
    while norm == 0.0:  # unreachable in practice, kept for determinism anyway
        u = rng.standard_normal(dim - 1)
        norm = np.linalg.norm(u)
    out = np.zeros(dim)
    out[1:] = u / norm
    return out


def gen_planted_kb(plan: KbPlan, seed: int = 0) -> PlantedKb:
    """Materialize a KB whose score layout follows the cluster plan."""
    rng = np.random.default_rng([seed, plan.dim, plan.total])
    rows: list[np.ndarray] = []
    docs: list[KnowledgeDocument] = []
    relevant: list[str] = []
    for ci, cluster in enumerate(plan.clusters):
        label = cluster.label or f"c{ci}"
        scores = cluster.center + cluster.spread * rng.standard_normal(cluster.count)
        scores = np.clip(scores, -0.999, 0.999)
        scores = np.sort(scores)[::-1]  # top of the cluster comes first
        for j, s in enumerate(scores):
            direction = _unit_orthogonal(rng, plan.dim)
            vec = s * np.eye(plan.dim)[0] + np.sqrt(1.0 - s * s) * direction
            doc_id = f"{label}-{j:03d}"
            docs.append(
                KnowledgeDocument(
                    doc_id=doc_id,
                    lock_row=len(rows),
                    category=plan.category,
                    defect_type=label,
                    page=j,
                    summary=f"{plan.category} {label} exemplar {j}",
                )
            )
            rows.append(vec)
            if j < cluster.relevant:
                relevant.append(doc_id)
    key = np.zeros(plan.dim, dtype=np.float32)
    key[0] = 1.0
    return PlantedKb(
        documents=tuple(docs),
        embeddings=EmbeddingMatrix(data=np.asarray(rows, dtype=np.float32)),
        key=key,
        relevant_ids=tuple(relevant),
    )


def gen_defect_grid(plan: DefectPlan, seed: int = 0) -> DefectSample:
    """Materialize one patch grid plus its ground-truth defect mask."""
    rng = np.random.default_rng([seed, plan.grid_h, plan.grid_w, plan.dim])
    top, left, rect_h, rect_w = plan.rect
    mask = np.zeros((plan.grid_h, plan.grid_w), dtype=bool)
    mask[top : top + rect_h, left : left + rect_w] = True

    normal_dir = np.zeros(plan.dim)
    normal_dir[0] = 1.0
    anomaly_dir = np.zeros(plan.dim)
    anomaly_dir[1] = 1.0

    n = plan.grid_h * plan.grid_w
    noise = plan.noise * rng.standard_normal((n, plan.dim))
    base = np.where(
        mask.reshape(-1, 1), plan.signal * anomaly_dir, plan.signal * normal_dir
    )
    raw = base + noise
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    degenerate = norms[:, 0] == 0.0
    if np.any(degenerate):  # only possible at signal 0 with unlucky zero noise
        raw[degenerate, 0] = 1.0
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
    unit = raw / norms
    patches = PatchGrid(
        grid_h=plan.grid_h,
        grid_w=plan.grid_w,
        embeddings=EmbeddingMatrix(data=unit.astype(np.float32)),
    )
    return DefectSample(
        patches=patches,
        mask=mask,
        normal_prompt=normal_dir,
        anomaly_prompt=anomaly_dir,
    )


# ---------------------------------------------------------------------------
# Plan (de)serialization for the synth command


def parse_plan(obj: dict) -> KbPlan | DefectPlan:
    """Turn a JSON object into a plan; `kind` picks the generator."""
    if not isinstance(obj, dict):
        raise SpecError("plan must be a JSON object")
    kind = obj.get("kind")
    try:
        if kind == "kb":
            clusters = tuple(
                ClusterPlan(
                    count=int(c["count"]),
                    center=float(c["center"]),
                    spread=float(c["spread"]),
                    relevant=int(c.get("relevant", 0)),
                    label=str(c.get("label", "")),
                )
                for c in obj["clusters"]
            )
            return KbPlan(
                dim=int(obj["dim"]),
                clusters=clusters,
                category=str(obj.get("category", "widget")),
            )
        if kind == "defect":
            rect = obj["rect"]
            if not isinstance(rect, list) or len(rect) != 4:
                raise SpecError("rect must be [top, left, height, width]")
            return DefectPlan(
                grid_h=int(obj["grid_h"]),
                grid_w=int(obj["grid_w"]),
                rect=(int(rect[0]), int(rect[1]), int(rect[2]), int(rect[3])),
                signal=float(obj["signal"]),
                noise=float(obj["noise"]),
                dim=int(obj["dim"]),
            )
    except (KeyError, TypeError, ValueError) as err:
        raise SpecError(f"malformed plan: {err}") from err
    raise SpecError(f"plan kind must be 'kb' or 'defect', got {kind!r}")


def load_plan(path: str | Path) -> KbPlan | DefectPlan:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise SpecError(f"{path}: invalid JSON ({err.msg})") from err
    return parse_plan(obj)


def write_kb_fixture(kb: PlantedKb, out_dir: str | Path) -> None:
    """Write raw ingest inputs: embeddings, manifest, key, relevance list."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_embeddings(kb.embeddings, out / "embeddings.adsk")
    lines = [
        json.dumps(d.to_json_obj(), sort_keys=True, separators=(",", ":"))
        for d in kb.documents
    ]
    (out / "manifest.jsonl").write_text(
        "".join(line + "\n" for line in lines), encoding="utf-8"
    )
    save_embeddings(
        EmbeddingMatrix(data=kb.key.reshape(1, -1)), out / "key.adsk"
    )
    (out / "relevant.json").write_text(
        json.dumps(list(kb.relevant_ids), separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def write_defect_fixture(sample: DefectSample, out_dir: str | Path) -> None:
    """Write patches, grid sidecar, mask image and both prompt vectors."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_embeddings(sample.patches.embeddings, out / "patches.adsk")
    (out / "patches.grid.json").write_text(
        json.dumps(
            {"grid_h": sample.patches.grid_h, "grid_w": sample.patches.grid_w},
            sort_keys=True,
            separators=(",", ":"),
        )
        + "\n",
        encoding="utf-8",
    )
    write_pgm(sample.mask.astype(np.uint8) * np.uint8(255), out / "mask.pgm")
    save_embeddings(
        EmbeddingMatrix(data=sample.normal_prompt.reshape(1, -1).astype(np.float32)),
        out / "normal_prompt.adsk",
    )
    save_embeddings(
        EmbeddingMatrix(data=sample.anomaly_prompt.reshape(1, -1).astype(np.float32)),
        out / "defect_prompt.adsk",
    )
