"""Wall-time and peak-memory measurement of pipeline stages.

Each stage builds its inputs once, then the measured body runs R times.
Wall time is perf_counter around the body; memory is the interpreter's
peak allocation during the body (tracemalloc), reset per run. Both are
approximations of production cost, good for comparing stages and
spotting regressions, not for absolute accounting.
"""

from __future__ import annotations

import time
import tracemalloc
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ArgumentError
from .formats import EmbeddingMatrix
from .knowledge import KnowledgeDocument, build_index
from .localization import localization_map
from .retrieval import kde_sample_retrieve, score_all
from .score_clustering import fit_score_gmm, kde_weights
from .sparse_code import SparseCodeProblem, ista_solve
from .synthetic import ClusterPlan, DefectPlan, KbPlan, gen_defect_grid, gen_planted_kb

__all__ = ["BenchSpec", "bench", "STAGES"]


@dataclass(frozen=True)
class BenchSpec:
    stage: str
    repeats: int = 3
    n: int = 500
    dim: int = 64
    budget: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ArgumentError(
                f"unknown stage {self.stage!r}, expected one of {sorted(STAGES)}"
            )
        if self.repeats < 1:
            raise ArgumentError(f"repeats must be >= 1, got {self.repeats}")
        if self.n < 4 or self.dim < 4:
            raise ArgumentError("bench sizes must be at least 4")
        if self.budget < 1:
            raise ArgumentError(f"budget must be >= 1, got {self.budget}")


def _bench_kb(spec: BenchSpec):
    third = max(spec.n // 3, 1)
    plan = KbPlan(
        dim=spec.dim,
        clusters=(
            ClusterPlan(count=third, center=0.85, spread=0.02),
            ClusterPlan(count=third, center=0.6, spread=0.02),
            ClusterPlan(count=max(spec.n - 2 * third, 1), center=0.3, spread=0.05),
        ),
    )
    kb = gen_planted_kb(plan, seed=spec.seed)
    return kb.index(), kb.key


def _stage_score(spec: BenchSpec) -> Callable[[], object]:
    index, key = _bench_kb(spec)
    return lambda: score_all(key, index)


def _stage_gmm(spec: BenchSpec) -> Callable[[], object]:
    index, key = _bench_kb(spec)
    scores = score_all(key, index).values
    return lambda: fit_score_gmm(scores, seed=spec.seed)


def _stage_kde(spec: BenchSpec) -> Callable[[], object]:
    index, key = _bench_kb(spec)
    scores = score_all(key, index).values
    clustering = fit_score_gmm(scores, seed=spec.seed)
    return lambda: kde_weights(clustering, scores)


def _stage_retrieve(spec: BenchSpec) -> Callable[[], object]:
    index, key = _bench_kb(spec)
    return lambda: kde_sample_retrieve(key, index, spec.budget, seed=spec.seed)


def _stage_ista(spec: BenchSpec) -> Callable[[], object]:
    rng = np.random.default_rng(spec.seed)
    problem = SparseCodeProblem(
        queries=rng.standard_normal((4, spec.dim)),
        dictionary=rng.standard_normal((max(spec.n // 32, 4), spec.dim)),
    )
    return lambda: ista_solve(problem)


def _stage_localize(spec: BenchSpec) -> Callable[[], object]:
    side = max(int(np.sqrt(spec.n)), 4)
    plan = DefectPlan(
        grid_h=side,
        grid_w=side,
        rect=(side // 4, side // 4, side // 2, side // 2),
        signal=0.5,
        noise=0.1,
        dim=spec.dim,
    )
    sample = gen_defect_grid(plan, seed=spec.seed)
    return lambda: localization_map(
        sample.patches, sample.normal_prompt, sample.anomaly_prompt, side * 4, side * 4
    )


def _stage_ingest(spec: BenchSpec) -> Callable[[], object]:
    index, _ = _bench_kb(spec)
    docs = tuple(
        KnowledgeDocument(
            doc_id=d.doc_id,
            lock_row=d.lock_row,
            category=d.category,
            defect_type=d.defect_type,
            page=d.page,
            summary=d.summary,
        )
        for d in index.documents
    )
    matrix = EmbeddingMatrix(data=index.locks.data.copy())
    return lambda: build_index(docs, matrix)


STAGES: dict[str, Callable[[BenchSpec], Callable[[], object]]] = {
    "score": _stage_score,
    "gmm": _stage_gmm,
    "kde": _stage_kde,
    "retrieve": _stage_retrieve,
    "ista": _stage_ista,
    "localize": _stage_localize,
    "ingest": _stage_ingest,
}


def _mean_sd(samples: list[float]) -> dict[str, float]:
    arr = np.asarray(samples, dtype=np.float64)
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "sd": sd, "samples": [float(s) for s in samples]}


def bench(spec: BenchSpec) -> dict:
    """Run one stage ``repeats`` times and report mean and SD."""
    body = STAGES[spec.stage](spec)
    wall: list[float] = []
    mem: list[float] = []
    for _ in range(spec.repeats):
        tracemalloc.start()
        t0 = time.perf_counter()
        body()
        elapsed = time.perf_counter() - t0
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        wall.append(elapsed)
        mem.append(float(peak))
    return {
        "stage": spec.stage,
        "repeats": spec.repeats,
        "n": spec.n,
        "dim": spec.dim,
        "wall_time_s": _mean_sd(wall),
        "peak_mem_bytes": _mean_sd(mem),
    }
