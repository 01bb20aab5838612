from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # makes `import oracles` work

from defectseek import ClusterPlan, EmbeddingMatrix, KbPlan, KnowledgeDocument, build_index


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def random_unit_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    rows = rng.standard_normal((count, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def small_index(rng: np.random.Generator, count: int = 12, dim: int = 6):
    """A tiny index with generic metadata, for interface-level tests."""
    rows = random_unit_rows(rng, count, dim).astype(np.float32)
    docs = [
        KnowledgeDocument(
            doc_id=f"doc-{i:03d}",
            lock_row=i,
            category="widget",
            defect_type="scratch" if i % 2 else "dent",
            page=i,
            summary=f"exemplar {i}",
        )
        for i in range(count)
    ]
    return build_index(docs, EmbeddingMatrix(data=rows))


def three_cluster_plan(dim: int = 16) -> KbPlan:
    return KbPlan(
        dim=dim,
        clusters=(
            ClusterPlan(count=40, center=0.88, spread=0.01, label="dent"),
            ClusterPlan(count=25, center=0.62, spread=0.012, relevant=4, label="crack"),
            ClusterPlan(count=35, center=0.25, spread=0.04, label="bg"),
        ),
    )
