"""Sparse coding of query embeddings against a dictionary, via ISTA.

The problem solved per stage, for queries E_q (B, d) and a dictionary
E_l (K, d) whose rows are atoms, is the elastic-free lasso

    minimize over P:  0.5 * ||E_q - P @ E_l||_F^2 + lam * ||P||_1

with the classical iterative shrinkage-thresholding update

    P <- soft_threshold(P - step * grad f(P), lam * step)
    grad f(P) = -(E_q - P @ E_l) @ E_l.T
    step = mu / sigma_max(E_l.T @ E_l),  mu in (0, 1]

which descends monotonically from P = 0 and lands on a fixed point of
the update map. ``hierarchical_apply`` chains solves, feeding each
stage's reconstruction P* @ E_l to the next stage as its query.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError, ConvergenceError, DataError, DimensionError

__all__ = [
    "soft_threshold",
    "spectral_norm",
    "residual",
    "SparseCodeProblem",
    "SparseCodeState",
    "ista_solve",
    "hierarchical_apply",
]

DEFAULT_LAMBDA = 0.1
DEFAULT_MAX_ITER = 200
DEFAULT_TOL = 1e-8
_POWER_MAX_ITER = 10_000
_POWER_RTOL = 1e-8
_ZERO_EPS = 1e-12
_DESCENT_SLACK = 1e-10


def soft_threshold(x: np.ndarray | float, tau: float) -> np.ndarray | float:
    """sign(x) * max(|x| - tau, 0), elementwise. tau must be >= 0."""
    if tau < 0.0:
        raise ArgumentError(f"threshold must be non-negative, got {tau}")
    arr = np.asarray(x, dtype=np.float64)
    out = np.sign(arr) * np.maximum(np.abs(arr) - tau, 0.0)
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out


def spectral_norm(matrix: np.ndarray) -> float:
    """Largest singular value, by power iteration on the smaller Gram.

    The start vector is drawn from a fixed generator, so the routine is
    deterministic. Stops when the squared-norm estimate is stable to a
    relative 1e-8; raises ConvergenceError after 10000 iterations.
    """
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"matrix must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError("matrix contains non-finite values")
    if a.shape[0] == 0 or a.shape[1] == 0 or not a.any():
        return 0.0
    gram = a @ a.T if a.shape[0] <= a.shape[1] else a.T @ a
    v = np.random.default_rng(0).standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(_POWER_MAX_ITER):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        new_estimate = float(v @ w)  # Rayleigh quotient of the Gram
        v = w / norm
        if abs(new_estimate - estimate) <= _POWER_RTOL * new_estimate:
            return float(np.sqrt(new_estimate))
        estimate = new_estimate
    raise ConvergenceError("power iteration did not stabilize in 10000 iterations")


def residual(queries: np.ndarray, codes: np.ndarray, dictionary: np.ndarray) -> np.ndarray:
    """E_q - P @ E_l with shape checking."""
    e_q = np.asarray(queries, dtype=np.float64)
    p = np.asarray(codes, dtype=np.float64)
    e_l = np.asarray(dictionary, dtype=np.float64)
    if e_q.ndim != 2 or p.ndim != 2 or e_l.ndim != 2:
        raise DimensionError("queries, codes and dictionary must all be 2-D")
    if p.shape != (e_q.shape[0], e_l.shape[0]) or e_l.shape[1] != e_q.shape[1]:
        raise DimensionError(
            f"shapes do not conform: queries {e_q.shape}, codes {p.shape}, "
            f"dictionary {e_l.shape}"
        )
    return e_q - p @ e_l


@dataclass(frozen=True)
class SparseCodeProblem:
    """One lasso instance: queries, dictionary and solver knobs."""

    queries: np.ndarray
    dictionary: np.ndarray
    lam: float = DEFAULT_LAMBDA
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    step_scale: float = 1.0

    def __post_init__(self) -> None:
        e_q = np.ascontiguousarray(self.queries, dtype=np.float64)
        e_l = np.ascontiguousarray(self.dictionary, dtype=np.float64)
        if e_q.ndim != 2 or e_l.ndim != 2:
            raise DimensionError("queries and dictionary must be 2-D")
        if e_q.shape[1] != e_l.shape[1]:
            raise DimensionError(
                f"queries dim {e_q.shape[1]} != dictionary dim {e_l.shape[1]}"
            )
        if e_q.shape[0] < 1 or e_l.shape[0] < 1:
            raise DimensionError("queries and dictionary must be non-empty")
        if not np.all(np.isfinite(e_q)) or not np.all(np.isfinite(e_l)):
            raise DataError("sparse-code inputs contain non-finite values")
        if self.lam < 0.0:
            raise ArgumentError(f"lam must be non-negative, got {self.lam}")
        if self.max_iter < 1:
            raise ArgumentError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.tol <= 0.0:
            raise ArgumentError(f"tol must be positive, got {self.tol}")
        if not 0.0 < self.step_scale <= 1.0:
            raise ArgumentError(
                f"step_scale must lie in (0, 1], got {self.step_scale}"
            )
        object.__setattr__(self, "queries", e_q)
        object.__setattr__(self, "dictionary", e_l)


@dataclass(frozen=True)
class SparseCodeState:
    """Solver output: codes plus the full objective trace.

    ``objective_trace[0]`` is the objective at the zero start and the
    trace never increases by more than 1e-10 per step. ``converged``
    means both the objective change and the largest elementwise update
    fell below tol, at which point the codes sit on a fixed point of
    the shrinkage update to within tol.
    """

    codes: np.ndarray
    objective_trace: tuple[float, ...]
    iterations: int
    converged: bool
    step: float
    threshold: float

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1]

    @property
    def sparsity(self) -> float:
        """Fraction of code entries with magnitude at most 1e-12."""
        return float(np.mean(np.abs(self.codes) <= _ZERO_EPS))


def _objective(e_q: np.ndarray, p: np.ndarray, e_l: np.ndarray, lam: float) -> float:
    r = e_q - p @ e_l
    return 0.5 * float(np.sum(r * r)) + lam * float(np.sum(np.abs(p)))


def ista_solve(problem: SparseCodeProblem) -> SparseCodeState:
    """Run ISTA from P = 0 until a fixed point or the iteration cap."""
    e_q, e_l, lam = problem.queries, problem.dictionary, problem.lam
    gram = e_l @ e_l.T
    lipschitz = spectral_norm(gram)
    if lipschitz == 0.0:
        # All-zero dictionary: the penalty pins the optimum at P = 0.
        obj = _objective(e_q, np.zeros((e_q.shape[0], e_l.shape[0])), e_l, lam)
        return SparseCodeState(
            codes=np.zeros((e_q.shape[0], e_l.shape[0])),
            objective_trace=(obj,),
            iterations=0,
            converged=True,
            step=0.0,
            threshold=0.0,
        )
    step = problem.step_scale / lipschitz
    threshold = lam * step
    p = np.zeros((e_q.shape[0], e_l.shape[0]), dtype=np.float64)
    trace = [_objective(e_q, p, e_l, lam)]
    converged = False
    iterations = 0
    for iterations in range(1, problem.max_iter + 1):
        grad = -(e_q - p @ e_l) @ e_l.T
        p_next = soft_threshold(p - step * grad, threshold)
        obj = _objective(e_q, p_next, e_l, lam)
        if obj > trace[-1] + _DESCENT_SLACK:
            raise ConvergenceError(
                f"objective rose from {trace[-1]!r} to {obj!r} at iteration {iterations}"
            )
        delta_obj = trace[-1] - obj
        displacement = float(np.max(np.abs(p_next - p)))
        trace.append(obj)
        p = p_next
        if delta_obj < problem.tol and displacement < problem.tol:
            converged = True
            break
    return SparseCodeState(
        codes=p,
        objective_trace=tuple(trace),
        iterations=iterations,
        converged=converged,
        step=step,
        threshold=threshold,
    )


def hierarchical_apply(
    dictionaries: Sequence[np.ndarray],
    queries: np.ndarray,
    lam: float | Sequence[float] = DEFAULT_LAMBDA,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    step_scale: float = 1.0,
) -> tuple[np.ndarray, list[SparseCodeState]]:
    """Chain sparse-code solves, each stage refining the reconstruction.

    Stage s solves against ``dictionaries[s]`` with penalty ``lam[s]``
    (a scalar is broadcast to all stages) and hands P* @ E_l to the
    next stage. Returns the final reconstruction and per-stage states.
    """
    if len(dictionaries) < 1:
        raise ArgumentError("need at least one stage dictionary")
    if isinstance(lam, (int, float)):
        lams = [float(lam)] * len(dictionaries)
    else:
        lams = [float(v) for v in lam]
        if len(lams) != len(dictionaries):
            raise ArgumentError(
                f"{len(lams)} penalties for {len(dictionaries)} stages"
            )
    current = np.ascontiguousarray(queries, dtype=np.float64)
    states: list[SparseCodeState] = []
    for e_l, stage_lam in zip(dictionaries, lams):
        problem = SparseCodeProblem(
            queries=current,
            dictionary=e_l,
            lam=stage_lam,
            max_iter=max_iter,
            tol=tol,
            step_scale=step_scale,
        )
        state = ista_solve(problem)
        states.append(state)
        current = state.codes @ problem.dictionary
    return current, states
