"""Key-to-lock similarity scoring and budgeted retrieval.

Two retrieval strategies share one scoring pass:

* ``top_k``: the plain head of the score ranking.
* ``kde_sample_retrieve``: scores are clustered (GMM + BIC), clusters
  are weighted by kernel density, and the budget is apportioned across
  clusters by largest remainder before merging the per-cluster heads.
  A count-heavy spike of near-duplicates therefore cannot monopolize
  the budget the way it does under plain top-k.

Everything here is deterministic given (key, index, budget, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .apportion import largest_remainder
from .errors import ArgumentError, DataError, DimensionError, EmptyStoreError
from .knowledge import KnowledgeIndex
from .score_clustering import (
    BANDWIDTH_FLOOR,
    DensityWeights,
    ScoreClustering,
    fit_score_gmm,
    kde_weights,
)

__all__ = [
    "SimilarityScores",
    "RetrievedDoc",
    "RetrievalResult",
    "score_all",
    "top_k",
    "kde_sample_retrieve",
]


@dataclass(frozen=True)
class SimilarityScores:
    """Cosine similarity of one key against every lock, in index order."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class RetrievedDoc:
    doc_id: str
    index: int
    score: float
    cluster: int | None = None


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked retrieval output plus sampling diagnostics.

    ``entries`` is sorted by score descending, ties broken by document
    index ascending, never holds duplicates, and never exceeds the
    budget. For the KDE strategy ``allocations`` gives the per-cluster
    slot counts and ``clustering``/``density`` carry the fit.
    """

    method: str
    budget: int
    entries: tuple[RetrievedDoc, ...]
    clustering: ScoreClustering | None = None
    density: DensityWeights | None = None
    allocations: tuple[int, ...] | None = None

    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]


def _normalized_key(key: np.ndarray, dim: int) -> np.ndarray:
    vec = np.asarray(key, dtype=np.float64).reshape(-1)
    if vec.shape[0] != dim:
        raise DimensionError(f"key has dim {vec.shape[0]}, index has dim {dim}")
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise DataError("key vector is zero, direction undefined")
    return vec / norm


def score_all(key: np.ndarray, index: KnowledgeIndex) -> SimilarityScores:
    """Cosine similarity of the key against every lock vector.

    Locks are unit rows already; the key is normalized here. Scores land
    in [-1, 1] up to float rounding.
    """
    if len(index) == 0:
        raise EmptyStoreError("knowledge index is empty")
    vec = _normalized_key(key, index.dim)
    return SimilarityScores(values=index.locks.rows64() @ vec)


def _ranked_order(scores: np.ndarray) -> np.ndarray:
    # Stable sort on the negated scores: descending, ties by low index.
    return np.argsort(-scores, kind="stable")


def top_k(scores: SimilarityScores, index: KnowledgeIndex, k: int) -> RetrievalResult:
    """Head of the score ranking; k past the end returns the full ranking."""
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    if len(scores) != len(index):
        raise DimensionError(
            f"scores cover {len(scores)} documents, index has {len(index)}"
        )
    order = _ranked_order(scores.values)[:k]
    entries = tuple(
        RetrievedDoc(
            doc_id=index.documents[i].doc_id,
            index=int(i),
            score=float(scores.values[i]),
        )
        for i in order
    )
    return RetrievalResult(method="topk", budget=k, entries=entries)


def kde_sample_retrieve(
    key: np.ndarray,
    index: KnowledgeIndex,
    budget: int,
    seed: int = 0,
    *,
    k_max: int = 8,
    bandwidth_floor: float = BANDWIDTH_FLOOR,
) -> RetrievalResult:
    """Density-weighted cluster sampling of the score ranking.

    A budget of at least the index size degenerates to the full ranking,
    and forcing k_max=1 reproduces ``top_k`` exactly: one cluster then
    holds the whole budget.
    """
    if budget < 1:
        raise ArgumentError(f"budget must be >= 1, got {budget}")
    scores = score_all(key, index)
    n = len(scores)
    if budget >= n:
        full = top_k(scores, index, n)
        return RetrievalResult(method="kde", budget=budget, entries=full.entries)

    clustering = fit_score_gmm(scores.values, k_max=k_max, seed=seed)
    density = kde_weights(clustering, scores.values, bandwidth_floor=bandwidth_floor)
    sizes = clustering.sizes()
    allocations = largest_remainder(
        density.cluster_weights, budget, caps=sizes
    )

    chosen: list[int] = []
    cluster_of: dict[int, int] = {}
    for c, take in enumerate(allocations):
        if take == 0:
            continue
        members = clustering.members(c)
        ranked = members[np.argsort(-scores.values[members], kind="stable")]
        for i in ranked[:take]:
            chosen.append(int(i))
            cluster_of[int(i)] = c
    merged = np.asarray(sorted(chosen), dtype=np.intp)
    final = merged[np.argsort(-scores.values[merged], kind="stable")][:budget]
    entries = tuple(
        RetrievedDoc(
            doc_id=index.documents[i].doc_id,
            index=int(i),
            score=float(scores.values[i]),
            cluster=cluster_of[int(i)],
        )
        for i in final
    )
    return RetrievalResult(
        method="kde",
        budget=budget,
        entries=entries,
        clustering=clustering,
        density=density,
        allocations=tuple(allocations),
    )
