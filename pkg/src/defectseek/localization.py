"""Patch-level anomaly localization from prompt similarities.

Each patch embedding is compared against two prompt vectors, one
describing the flawless object and one describing the defect. Cosines
are shifted from [-1, 1] to [0, 1] and the per-patch anomaly value is
the shifted-similarity ratio

    value = s_defect / (s_normal + s_defect),   s = (1 + cos) / 2

so 0.5 means the patch sits equidistant from both prompts, and swapping
the prompts maps every value v to 1 - v. The patch grid is then
upsampled bilinearly (half-pixel centers, edges clamped) to the image
resolution. Interpolation is convex, so upsampling can neither invert
the ordering of flat regions nor leave [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DataError, DimensionError
from .formats import EmbeddingMatrix, normalize_rows

__all__ = [
    "PatchGrid",
    "LocalizationMap",
    "PriorEmbedding",
    "bilinear_upsample",
    "localization_map",
    "image_score",
    "assemble_prior",
    "split_prior",
    "prompt_similarity_matrix",
]

DEFAULT_AGGREGATOR = "topq"
DEFAULT_TOPQ = 0.01
AGGREGATORS = ("max", "topq")


@dataclass(frozen=True)
class PatchGrid:
    """A grid_h x grid_w grid of unit-normalized patch embeddings.

    Row r of ``embeddings`` is the patch at (r // grid_w, r % grid_w).
    """

    grid_h: int
    grid_w: int
    embeddings: EmbeddingMatrix

    def __post_init__(self) -> None:
        if self.grid_h < 1 or self.grid_w < 1:
            raise DimensionError(
                f"grid must be at least 1x1, got {self.grid_h}x{self.grid_w}"
            )
        if self.embeddings.count != self.grid_h * self.grid_w:
            raise DimensionError(
                f"grid {self.grid_h}x{self.grid_w} needs "
                f"{self.grid_h * self.grid_w} embeddings, got {self.embeddings.count}"
            )

    @classmethod
    def from_matrix(cls, grid_h: int, grid_w: int, matrix: EmbeddingMatrix) -> "PatchGrid":
        """Build a grid, normalizing rows on the way in."""
        return cls(grid_h=grid_h, grid_w=grid_w, embeddings=normalize_rows(matrix))


@dataclass(frozen=True)
class LocalizationMap:
    """Per-pixel anomaly probabilities plus an optional image score."""

    values: np.ndarray
    image_score: float | None = None

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise DimensionError(f"map must be 2-D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise DataError("localization map contains non-finite values")
        if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
            raise DataError("localization map values must lie in [0, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])


def _lerp(a: np.ndarray, b: np.ndarray, f: np.ndarray) -> np.ndarray:
    # a + f*(b - a) stays inside [min(a,b), max(a,b)] and is exact on
    # constants, which keeps flat maps flat after upsampling.
    return a + f * (b - a)


def bilinear_upsample(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a 2-D array up with half-pixel-center bilinear sampling."""
    grid = np.asarray(values, dtype=np.float64)
    if grid.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got shape {grid.shape}")
    h, w = grid.shape
    if h < 1 or w < 1:
        raise DimensionError("cannot upsample an empty array")
    if out_h < h or out_w < w:
        raise ArgumentError(
            f"target {out_h}x{out_w} is smaller than source {h}x{w}"
        )
    src_y = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    src_x = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    y0 = np.floor(src_y)
    x0 = np.floor(src_x)
    fy = src_y - y0
    fx = src_x - x0
    y0c = np.clip(y0, 0, h - 1).astype(np.intp)
    y1c = np.clip(y0 + 1, 0, h - 1).astype(np.intp)
    x0c = np.clip(x0, 0, w - 1).astype(np.intp)
    x1c = np.clip(x0 + 1, 0, w - 1).astype(np.intp)
    top = _lerp(grid[np.ix_(y0c, x0c)], grid[np.ix_(y0c, x1c)], fx[None, :])
    bottom = _lerp(grid[np.ix_(y1c, x0c)], grid[np.ix_(y1c, x1c)], fx[None, :])
    return _lerp(top, bottom, fy[:, None])


def _unit_prompt(vec: np.ndarray, dim: int, name: str) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64).reshape(-1)
    if v.shape[0] != dim:
        raise DimensionError(f"{name} prompt has dim {v.shape[0]}, patches have dim {dim}")
    if not np.all(np.isfinite(v)):
        raise DataError(f"{name} prompt contains non-finite values")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise DataError(f"{name} prompt is the zero vector")
    return v / norm


def localization_map(
    patches: PatchGrid,
    normal_prompt: np.ndarray,
    anomaly_prompt: np.ndarray,
    out_h: int | None = None,
    out_w: int | None = None,
) -> LocalizationMap:
    """Shifted-cosine ratio per patch, upsampled to the target size.

    A patch whose shifted similarities are both zero (possible only when
    both cosines are exactly -1) has no usable evidence and is set to
    0.5. Output defaults to the patch resolution.
    """
    out_h = patches.grid_h if out_h is None else out_h
    out_w = patches.grid_w if out_w is None else out_w
    rows = patches.embeddings.rows64()
    normal = _unit_prompt(normal_prompt, patches.embeddings.dim, "normal")
    anomaly = _unit_prompt(anomaly_prompt, patches.embeddings.dim, "anomaly")
    s_normal = np.clip((1.0 + rows @ normal) / 2.0, 0.0, 1.0)
    s_anomaly = np.clip((1.0 + rows @ anomaly) / 2.0, 0.0, 1.0)
    denom = s_normal + s_anomaly
    ratio = np.full(denom.shape, 0.5)
    nonzero = denom > 0.0
    ratio[nonzero] = s_anomaly[nonzero] / denom[nonzero]
    grid = ratio.reshape(patches.grid_h, patches.grid_w)
    out = np.clip(bilinear_upsample(grid, out_h, out_w), 0.0, 1.0)
    return LocalizationMap(values=out)


def image_score(
    map_values: LocalizationMap | np.ndarray,
    aggregator: str = DEFAULT_AGGREGATOR,
    q: float = DEFAULT_TOPQ,
) -> float:
    """Aggregate a map to one score: ``max`` or mean of the top q fraction."""
    vals = (
        map_values.values if isinstance(map_values, LocalizationMap) else
        np.asarray(map_values, dtype=np.float64)
    )
    flat = vals.reshape(-1)
    if flat.size == 0:
        raise ArgumentError("cannot score an empty map")
    if aggregator == "max":
        return float(flat.max())
    if aggregator == "topq":
        if not 0.0 < q <= 1.0:
            raise ArgumentError(f"q must lie in (0, 1], got {q}")
        take = max(1, int(np.ceil(q * flat.size)))
        top = np.sort(flat)[-take:]
        return float(top.mean())
    raise ArgumentError(f"unknown aggregator {aggregator!r}")


@dataclass(frozen=True)
class PriorEmbedding:
    """Flattened localization map concatenated with a visual embedding."""

    data: np.ndarray
    map_shape: tuple[int, int]
    vis_dim: int

    def __post_init__(self) -> None:
        vec = np.asarray(self.data, dtype=np.float64).reshape(-1)
        expected = self.map_shape[0] * self.map_shape[1] + self.vis_dim
        if vec.shape[0] != expected:
            raise DimensionError(
                f"prior vector has {vec.shape[0]} entries, expected {expected}"
            )
        if not np.all(np.isfinite(vec)):
            raise DataError("prior embedding contains non-finite values")
        vec.setflags(write=False)
        object.__setattr__(self, "data", vec)


def assemble_prior(loc_map: LocalizationMap, vis: np.ndarray) -> PriorEmbedding:
    """Concatenate map values (row-major) with the visual embedding."""
    vis_vec = np.asarray(vis, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(vis_vec)):
        raise DataError("visual embedding contains non-finite values")
    data = np.concatenate([loc_map.values.reshape(-1), vis_vec])
    return PriorEmbedding(
        data=data,
        map_shape=(loc_map.height, loc_map.width),
        vis_dim=int(vis_vec.shape[0]),
    )


def split_prior(prior: PriorEmbedding) -> tuple[LocalizationMap, np.ndarray]:
    """Invert assemble_prior exactly."""
    h, w = prior.map_shape
    map_part = prior.data[: h * w].reshape(h, w)
    vis_part = prior.data[h * w :].copy()
    return LocalizationMap(values=map_part.copy()), vis_part


def prompt_similarity_matrix(
    patches: PatchGrid, prompts: EmbeddingMatrix | np.ndarray
) -> np.ndarray:
    """Cosine similarity of every patch against every prompt, (n, m)."""
    if isinstance(prompts, EmbeddingMatrix):
        prompt_rows = prompts.rows64()
    else:
        prompt_rows = np.asarray(prompts, dtype=np.float64)
        if prompt_rows.ndim != 2:
            raise DimensionError(
                f"prompts must be 2-D, got shape {prompt_rows.shape}"
            )
    if prompt_rows.shape[1] != patches.embeddings.dim:
        raise DimensionError(
            f"prompt dim {prompt_rows.shape[1]} != patch dim {patches.embeddings.dim}"
        )
    if not np.all(np.isfinite(prompt_rows)):
        raise DataError("prompts contain non-finite values")
    norms = np.linalg.norm(prompt_rows, axis=1)
    if np.any(norms == 0.0):
        raise DataError("prompts contain a zero vector")
    unit = prompt_rows / norms[:, None]
    return patches.embeddings.rows64() @ unit.T
