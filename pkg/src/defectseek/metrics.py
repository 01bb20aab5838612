"""Ranking metrics for image- and pixel-level evaluation.

AUROC is computed from average ranks (the Mann-Whitney U statistic
normalized by n_pos * n_neg), with tied scores contributing half a win.
Rank sums are multiples of one half and stay well under 2**52, so the
result is exact, not merely close: it equals the pairwise-comparison
definition bit for bit and is invariant under any strictly increasing
transform of the scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, DegenerateError, DimensionError

__all__ = ["LabeledScores", "average_ranks", "auroc", "pixel_auroc_macro", "recall_at"]


@dataclass(frozen=True)
class LabeledScores:
    """Scores with binary labels, 1 marking the positive class."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        labels = np.asarray(self.labels).reshape(-1)
        if scores.shape[0] != labels.shape[0]:
            raise DimensionError(
                f"{scores.shape[0]} scores but {labels.shape[0]} labels"
            )
        if not np.all(np.isfinite(scores)):
            raise DataError("scores contain non-finite values")
        if not np.all((labels == 0) | (labels == 1)):
            raise DataError("labels must be 0 or 1")
        labels = labels.astype(np.int8)
        scores.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties replaced by the mean rank of their run."""
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts).astype(np.float64)
    starts = ends - counts + 1.0
    return ((starts + ends) / 2.0)[inverse]


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a positive outranks a negative, ties counted half."""
    pair = LabeledScores(scores=scores, labels=labels)
    n_pos = int(pair.labels.sum())
    n_neg = pair.labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateError(
            f"AUROC needs both classes, got {n_pos} positives and {n_neg} negatives"
        )
    ranks = average_ranks(pair.scores)
    rank_sum = float(ranks[pair.labels == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def pixel_auroc_macro(
    maps: Sequence[np.ndarray], masks: Sequence[np.ndarray]
) -> float:
    """Per-image pixel AUROC (pixels pooled within each image), averaged.

    Every image must contain both defective and clean pixels; an image
    without one of the classes has no defined per-image AUROC.
    """
    if len(maps) != len(masks):
        raise DimensionError(f"{len(maps)} maps but {len(masks)} masks")
    if len(maps) == 0:
        raise DegenerateError("no images to evaluate")
    per_image = []
    for i, (m, g) in enumerate(zip(maps, masks)):
        m = np.asarray(m, dtype=np.float64)
        g = np.asarray(g)
        if m.shape != g.shape:
            raise DimensionError(
                f"image {i}: map shape {m.shape} != mask shape {g.shape}"
            )
        per_image.append(auroc(m.reshape(-1), (g.reshape(-1) != 0).astype(np.int8)))
    return float(np.mean(per_image))


def recall_at(retrieved_ids: Sequence[str], relevant_ids: Sequence[str], k: int) -> float:
    """Fraction of relevant ids present in the first k retrieved."""
    if k < 1:
        raise DegenerateError(f"k must be >= 1, got {k}")
    relevant = set(relevant_ids)
    if not relevant:
        raise DegenerateError("no relevant ids to recall")
    hits = sum(1 for doc_id in list(retrieved_ids)[:k] if doc_id in relevant)
    return hits / len(relevant)
