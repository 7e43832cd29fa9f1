"""AIC choice of the number of knots ``js``.

Each curve gets its own AIC-minimizing ``J`` over the pool
``1..min(10, floor(d/2))``; the pooled choice is the lower median.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .bspline import fit_batch, make_basis, sparse_positions
from .core import as_node_matrix

MAX_KNOTS = 10


class SelectionMethod(str, Enum):
    RANDOM_KNOTS = "random-knots"
    BSPLINE_FULL = "bspline-full"
    BSPLINE_SPARSE = "bspline-sparse"


@dataclass(frozen=True)
class KnotSelection:
    per_curve: np.ndarray
    chosen: int
    candidates: np.ndarray


def candidate_pool(d: int) -> np.ndarray:
    d = int(d)
    if d < 2:
        raise ValueError("knot selection needs d >= 2")
    return np.arange(1, min(MAX_KNOTS, d // 2) + 1)


def aic_value(rss, d: int, j: int, p_eff: int):
    """``log(RSS / d) + 2 (J + p) / d``; vectorized over ``rss``."""
    rss = np.asarray(rss, dtype=float)
    if np.any(rss <= 0):
        raise ValueError("AIC needs a positive residual sum of squares")
    out = np.log(rss / d) + 2.0 * (j + p_eff) / d
    return float(out) if out.ndim == 0 else out


def _rss_floor(X: np.ndarray) -> np.ndarray:
    # perfect fits would send log(RSS) to -inf; clamp at rounding level of the data
    return np.finfo(float).eps * np.maximum(np.sum(X**2, axis=1), 1.0)


def _trajectory_estimates(X, j, method, p_eff, rng):
    d = X.shape[1]
    if method is SelectionMethod.RANDOM_KNOTS:
        mask = rng.random(X.shape) < j / d
        return np.where(mask, X * (d / j), 0.0)
    basis = make_basis(d, j, p_eff)
    if method is SelectionMethod.BSPLINE_FULL:
        return fit_batch(X, basis, "full")
    return fit_batch(X, basis, "sparse", sparse_positions(basis))


def select_knots(X, p_eff: int = 4, method="bspline-full", seed=0) -> KnotSelection:
    """Per-curve AIC knot counts and their lower median.

    For ``random-knots`` the trajectory estimate is the rescaled zero-filled
    vector ``(d/J) h_i`` drawn with ``seed`` (use ``p_eff=0``).  Spline methods
    use a basis of order ``p_eff``.  Candidates whose fit is infeasible are
    skipped.  Ties go to the smaller ``J``.
    """
    X = as_node_matrix(X)
    n, d = X.shape
    method = SelectionMethod(method)
    pool = candidate_pool(d)
    if pool.size == 1:
        return KnotSelection(np.full(n, pool[0]), int(pool[0]), pool)

    rng = np.random.default_rng(seed)
    floor = _rss_floor(X)
    aic = np.full((n, pool.size), np.inf)
    for col, j in enumerate(pool):
        try:
            H = _trajectory_estimates(X, int(j), method, p_eff, rng)
        except (ValueError, np.linalg.LinAlgError):
            continue
        rss = np.maximum(np.sum((X - H) ** 2, axis=1), floor)
        aic[:, col] = aic_value(rss, d, int(j), p_eff)
    if not np.any(np.isfinite(aic)):
        raise ValueError(f"no feasible knot count for method {method.value} with d={d}")
    per_curve = pool[np.argmin(aic, axis=1)]
    chosen = int(np.sort(per_curve)[(n - 1) // 2])
    return KnotSelection(per_curve, chosen, pool)
