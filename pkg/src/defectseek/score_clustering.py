"""Gaussian-mixture clustering of similarity scores and KDE deflation weights.

Retrieval scores from a category-organized knowledge base pile up in a
few tight groups, so a 1-D Gaussian mixture is fit over the score list
(EM, deterministic k-means++ seeding, BIC over K = 1..k_max) and each
cluster then receives a weight from a Gaussian kernel-density estimate:

    weight(cluster) = (1/K) * sum over members m of exp(logpdf(m) - max logpdf)

with the max taken over all scores. Dense clusters keep weight while a
single count-heavy spike is deflated relative to its bulk, which is what
the budgeted sampler in :mod:`defectseek.retrieval` keys off.

All accumulation happens in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConvergenceError, DegenerateDataError

__all__ = [
    "GaussianComponent",
    "ScoreClustering",
    "DensityWeights",
    "fit_score_gmm",
    "silverman_bandwidth",
    "kde_log_density",
    "kde_weights",
]

VARIANCE_FLOOR = 1e-8
BANDWIDTH_FLOOR = 1e-6
MAX_EM_ITER = 200
EM_TOL = 1e-8
_MONOTONE_SLACK = 1e-10
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianComponent:
    mean: float
    variance: float
    weight: float


@dataclass(frozen=True)
class ScoreClustering:
    """Result of a mixture fit over one score list.

    ``assignments[i]`` is the posterior-argmax component of score i,
    ties resolved to the lowest component index. ``loglik_trace`` holds
    the per-iteration log-likelihood of the selected fit.
    """

    components: tuple[GaussianComponent, ...]
    assignments: np.ndarray
    log_likelihood: float
    bic: float
    loglik_trace: tuple[float, ...]

    @property
    def k(self) -> int:
        return len(self.components)

    def members(self, component: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == component)

    def sizes(self) -> list[int]:
        return [int(np.sum(self.assignments == i)) for i in range(self.k)]


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty(k, dtype=np.float64)
    centers[0] = x[int(rng.integers(n))]
    d2 = np.square(x - centers[0])
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = x[idx]
        np.minimum(d2, np.square(x - centers[j]), out=d2)
    return centers


def _lloyd_refine(x: np.ndarray, centers: np.ndarray, iters: int = 10) -> np.ndarray:
    # A few k-means sweeps harden the seeding before EM takes over.
    for _ in range(iters):
        assign = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
        moved = False
        for j in range(centers.shape[0]):
            pts = x[assign == j]
            if pts.size:
                mean = pts.mean()
                if mean != centers[j]:
                    centers[j] = mean
                    moved = True
        if not moved:
            break
    return centers


def _em_fit(
    x: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int,
    tol: float,
    variance_floor: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, list[float]]:
    n = x.shape[0]
    centers = _lloyd_refine(x, _kmeanspp_centers(x, k, rng))
    order = np.argsort(centers, kind="stable")
    means = centers[order]
    global_var = max(float(np.var(x)), variance_floor)
    assign = np.argmin(np.abs(x[:, None] - means[None, :]), axis=1)
    variances = np.full(k, global_var)
    weights = np.full(k, 1.0 / k)
    for j in range(k):
        pts = x[assign == j]
        if pts.size:
            variances[j] = max(float(np.var(pts)), variance_floor)
            weights[j] = pts.size / n
    weights = np.maximum(weights, 1e-12)
    weights /= weights.sum()

    # Buffers are reused across iterations and the axis reductions run as
    # dot products; per-step allocations and small strided reduces dominate
    # the cost of these (n, k) problems otherwise. The quadratic term keeps
    # the (x - mean)^2 form: expanding the square loses precision badly
    # once a variance sits on the floor.
    xcol = x[:, None]
    ones_n = np.ones(n, dtype=np.float64)
    work = np.empty((n, k), dtype=np.float64)
    scratch = np.empty((n, k), dtype=np.float64)
    row_max = np.empty(n, dtype=np.float64)
    row_sum = np.empty(n, dtype=np.float64)
    log_norm = np.empty(n, dtype=np.float64)

    trace: list[float] = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        # E step
        np.subtract(xcol, means[None, :], out=work)
        np.multiply(work, work, out=work)
        work *= -0.5
        np.divide(work, variances[None, :], out=work)
        work += np.log(weights) - 0.5 * (np.log(variances) + _LOG_2PI)
        work.max(axis=1, out=row_max)
        np.subtract(work, row_max[:, None], out=work)
        np.exp(work, out=work)
        work.sum(axis=1, out=row_sum)
        np.log(row_sum, out=log_norm)
        log_norm += row_max
        ll = float(log_norm @ ones_n)
        if trace and ll < trace[-1] - _MONOTONE_SLACK:
            raise ConvergenceError(
                f"EM log-likelihood decreased from {trace[-1]!r} to {ll!r}"
            )
        trace.append(ll)
        np.divide(work, row_sum[:, None], out=work)  # responsibilities
        # M step
        bulk = ones_n @ work
        safe = np.maximum(bulk, 1e-300)
        new_means = (x @ work) / safe
        np.subtract(xcol, new_means[None, :], out=scratch)
        np.multiply(scratch, scratch, out=scratch)
        scratch *= work
        new_vars = ones_n @ scratch
        new_vars /= safe
        means = new_means
        variances = np.maximum(new_vars, variance_floor)
        weights = np.maximum(bulk / n, 1e-12)
        weights /= weights.sum()
        if ll - prev_ll < tol and np.isfinite(prev_ll):
            break
        prev_ll = ll

    np.subtract(xcol, means[None, :], out=work)
    np.multiply(work, work, out=work)
    work *= -0.5
    np.divide(work, variances[None, :], out=work)
    work += np.log(weights) - 0.5 * (np.log(variances) + _LOG_2PI)
    assignments = np.argmax(work, axis=1)
    return means, variances, weights, trace[-1], trace


def fit_score_gmm(
    scores: np.ndarray,
    k_max: int = 8,
    seed: int = 0,
    *,
    max_iter: int = MAX_EM_ITER,
    tol: float = EM_TOL,
    variance_floor: float = VARIANCE_FLOOR,
    restarts: int = 1,
) -> ScoreClustering:
    """Fit 1-D Gaussian mixtures for K = 1..k_max and keep the best BIC.

    BIC = -2 log L + (3K - 1) ln n; ties go to the smaller K. Each K is
    seeded deterministically from (seed, K, restart), so identical inputs
    give identical clusterings. A constant score list short-circuits to a
    single floored-variance component. Fewer than 2 scores is an error.
    """
    x = np.asarray(scores, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    if n < 2:
        raise DegenerateDataError(f"need at least 2 scores to cluster, got {n}")
    if k_max < 1:
        raise ArgumentError(f"k_max must be >= 1, got {k_max}")
    if restarts < 1:
        raise ArgumentError(f"restarts must be >= 1, got {restarts}")

    if np.ptp(x) == 0.0:
        comp = GaussianComponent(mean=float(x[0]), variance=variance_floor, weight=1.0)
        ll = float(
            n * (-0.5 * _LOG_2PI - 0.5 * math.log(variance_floor))
        )  # residuals are exactly zero
        bic = -2.0 * ll + 2.0 * math.log(n)
        return ScoreClustering(
            components=(comp,),
            assignments=np.zeros(n, dtype=np.intp),
            log_likelihood=ll,
            bic=bic,
            loglik_trace=(ll,),
        )

    best: ScoreClustering | None = None
    for k in range(1, min(k_max, n) + 1):
        k_best: tuple[float, tuple] | None = None
        for restart in range(restarts):
            rng = np.random.default_rng([seed, k, restart])
            means, variances, weights, ll, trace = _em_fit(
                x, k, rng, max_iter, tol, variance_floor
            )
            if k_best is None or ll > k_best[0]:
                k_best = (ll, (means, variances, weights, trace))
        assert k_best is not None
        ll, (means, variances, weights, trace) = k_best[0], k_best[1]
        bic = -2.0 * ll + (3.0 * k - 1.0) * math.log(n)
        if best is None or bic < best.bic:
            log_pdf = (
                -0.5 * np.square(x[:, None] - means[None, :]) / variances[None, :]
                - 0.5 * (np.log(variances[None, :]) + _LOG_2PI)
                + np.log(weights[None, :])
            )
            components = tuple(
                GaussianComponent(float(m), float(v), float(w))
                for m, v, w in zip(means, variances, weights)
            )
            best = ScoreClustering(
                components=components,
                assignments=np.argmax(log_pdf, axis=1),
                log_likelihood=ll,
                bic=bic,
                loglik_trace=tuple(trace),
            )
    assert best is not None
    return best


# ---------------------------------------------------------------------------
# Kernel density weighting


def silverman_bandwidth(
    scores: np.ndarray, floor: float = BANDWIDTH_FLOOR
) -> float:
    """Rule-of-thumb bandwidth 0.9 * min(std, IQR/1.34) * n^(-1/5), floored."""
    x = np.asarray(scores, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    if n < 2:
        raise DegenerateDataError(f"need at least 2 scores for a bandwidth, got {n}")
    std = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75.0, 25.0])
    iqr = float(q75 - q25)
    h = 0.9 * min(std, iqr / 1.34) * n ** (-0.2)
    return max(h, floor)


def kde_log_density(
    scores: np.ndarray, eval_points: np.ndarray, bandwidth: float
) -> np.ndarray:
    """Log of the Gaussian KDE built on ``scores``, taken at ``eval_points``."""
    if bandwidth <= 0.0:
        raise ArgumentError(f"bandwidth must be positive, got {bandwidth}")
    x = np.asarray(scores, dtype=np.float64).reshape(-1)
    pts = np.asarray(eval_points, dtype=np.float64).reshape(-1)
    z = (pts[:, None] - x[None, :]) / bandwidth
    log_kernels = -0.5 * np.square(z)
    row_max = log_kernels.max(axis=1, keepdims=True)
    log_sum = row_max[:, 0] + np.log(np.exp(log_kernels - row_max).sum(axis=1))
    return log_sum - math.log(x.shape[0] * bandwidth) - 0.5 * _LOG_2PI


@dataclass(frozen=True)
class DensityWeights:
    """Per-score log-densities and the cluster weights they induce.

    ``cluster_weights[c]`` lies in [0, |members(c)| / K]; the cluster
    holding the global density maximum always contributes one term equal
    to exp(0) = 1 before the 1/K scaling.
    """

    log_density: np.ndarray
    bandwidth: float
    cluster_weights: np.ndarray


def kde_weights(
    clustering: ScoreClustering,
    scores: np.ndarray,
    *,
    bandwidth_floor: float = BANDWIDTH_FLOOR,
) -> DensityWeights:
    """Weight each score cluster by its kernel-density mass.

    When every score is identical the density carries no information;
    the single cluster is then weighted 1.0 outright.
    """
    x = np.asarray(scores, dtype=np.float64).reshape(-1)
    if x.shape[0] != clustering.assignments.shape[0]:
        raise ArgumentError(
            f"clustering covers {clustering.assignments.shape[0]} scores, got {x.shape[0]}"
        )
    k = clustering.k
    if np.ptp(x) == 0.0:
        if k != 1:
            raise DegenerateDataError(
                "identical scores cannot support more than one cluster"
            )
        h = max(0.0, bandwidth_floor)
        log_density = kde_log_density(x, x, h)
        return DensityWeights(
            log_density=log_density, bandwidth=h, cluster_weights=np.array([1.0])
        )
    h = silverman_bandwidth(x, floor=bandwidth_floor)
    log_density = kde_log_density(x, x, h)
    # Accumulate scalar exp terms in document order so the result is exactly
    # the written sum: vectorized exp and blocked summation both drift by an
    # ulp from a straightforward recomputation.
    peak = float(log_density.max())
    sums = [0.0] * k
    for i, c in enumerate(clustering.assignments):
        sums[c] += math.exp(float(log_density[i]) - peak)
    weights = np.asarray([s / k for s in sums], dtype=np.float64)
    return DensityWeights(log_density=log_density, bandwidth=h, cluster_weights=weights)
