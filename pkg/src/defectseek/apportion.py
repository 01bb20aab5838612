"""Largest-remainder apportionment of an integer budget over weights."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ArgumentError

__all__ = ["largest_remainder"]


def largest_remainder(
    weights: Sequence[float], total: int, caps: Sequence[int] | None = None
) -> list[int]:
    """Split ``total`` integer slots proportionally to ``weights``.

    Each bucket gets floor(total * w_i / sum(w)) slots, then leftover
    slots go to the largest fractional remainders, ties to the lowest
    index. Optional per-bucket ``caps`` bound the allocation; capped
    surplus cascades to the remaining buckets the same way. With caps,
    sum(caps) must cover ``total``. All-zero weights split evenly.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] == 0:
        raise ArgumentError("weights must be a non-empty 1-D sequence")
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise ArgumentError("weights must be finite and non-negative")
    if total < 0:
        raise ArgumentError(f"total must be non-negative, got {total}")
    n = w.shape[0]
    if caps is None:
        cap = np.full(n, total, dtype=np.int64)
    else:
        cap = np.asarray(caps, dtype=np.int64)
        if cap.shape != (n,) or np.any(cap < 0):
            raise ArgumentError("caps must be non-negative and match weights")
        if int(cap.sum()) < total:
            raise ArgumentError(
                f"caps sum to {int(cap.sum())}, cannot hold total {total}"
            )
    if w.sum() == 0.0:
        w = np.ones(n, dtype=np.float64)

    quota = total * (w / w.sum())
    alloc = np.minimum(np.floor(quota).astype(np.int64), cap)
    remainder = quota - alloc  # > 1 only for capped buckets, which are full anyway
    left = total - int(alloc.sum())
    while left > 0:
        open_buckets = np.flatnonzero(alloc < cap)
        # lowest index wins ties: argsort is stable over the sorted negation
        order = open_buckets[np.argsort(-remainder[open_buckets], kind="stable")]
        for i in order:
            if left == 0:
                break
            alloc[i] += 1
            remainder[i] -= 1.0
            left -= 1
    return [int(a) for a in alloc]
