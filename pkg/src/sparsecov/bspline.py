"""B-spline bases on equispaced knots and least-squares trajectory smoothing.

A basis of order ``p`` (degree ``p - 1``) with ``js`` interior knots
``l / (js + 1)`` has ``js + p`` functions.  Smoothed trajectories feed the
B-spline estimators (plain average and covariance, scale factor 1) and the
Bspline-Spatial estimators (the spatial formulas applied to smoothed values
at retained coordinates).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import qr, solve_triangular

from .core import as_node_matrix, grid, sample_cov
from .random_knots import ScalerLike, rks_cov, rks_mean
from .sparsify import SparseBatch, fixed_positions

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class KnotVector:
    interior: np.ndarray
    order: int
    augmented: np.ndarray

    @property
    def js(self) -> int:
        return self.interior.size

    @property
    def n_basis(self) -> int:
        return self.js + self.order


def make_knots(js: int, p: int = 4) -> KnotVector:
    """Interior knots ``l / (js + 1)`` padded with ``p`` copies of 0 and 1."""
    js, p = int(js), int(p)
    if js < 1:
        raise ValueError(f"need at least one interior knot, got js={js}")
    if p < 1:
        raise ValueError(f"spline order must be >= 1, got p={p}")
    interior = np.arange(1, js + 1) / (js + 1)
    augmented = np.concatenate([np.zeros(p), interior, np.ones(p)])
    return KnotVector(interior, p, augmented)


def eval_basis(t, knots: KnotVector) -> np.ndarray:
    """Cox-de Boor values of all ``js + p`` basis functions.

    Accepts a scalar or 1-D array of points in ``[0, 1]``; returns shape
    ``(js + p,)`` or ``(len(t), js + p)``.  The last interval is closed on the
    right so the final basis function equals 1 at ``t = 1``.
    """
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any((t < 0) | (t > 1)) or not np.all(np.isfinite(t)):
        raise ValueError("basis evaluation points must lie in [0, 1]")
    u = knots.augmented
    p = knots.order
    last = p - 1 + knots.js  # final non-degenerate interval [u[last], u[last+1]]

    B = ((u[:-1] <= t[:, None]) & (t[:, None] < u[1:])).astype(float)
    B[t == 1.0, :] = 0.0
    B[t == 1.0, last] = 1.0

    for k in range(2, p + 1):
        m = u.size - k
        left_den = u[k - 1:k - 1 + m] - u[:m]
        right_den = u[k:k + m] - u[1:1 + m]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den > 0, (t[:, None] - u[:m]) / left_den, 0.0)
            right = np.where(right_den > 0, (u[k:k + m] - t[:, None]) / right_den, 0.0)
        B = left * B[:, :m] + right * B[:, 1:m + 1]
    return B[0] if scalar else B


def _check_conditioning(A: np.ndarray, what: str, squared: bool = False) -> None:
    """Raise if ``A`` (or ``A^T A`` when ``squared``) is singular or ill-conditioned."""
    sv = np.linalg.svd(A, compute_uv=False)
    cond = np.inf if sv[-1] <= 0 else sv[0] / sv[-1]
    if squared:
        cond = cond**2
    if not cond <= MAX_CONDITION:
        raise np.linalg.LinAlgError(f"{what} is singular or ill-conditioned (condition {cond:.3g})")


def _orthonormal_factor(rows: np.ndarray):
    # QR avoids squaring the condition number as the normal equations would
    _check_conditioning(rows, "spline least-squares system", squared=True)
    return qr(rows, mode="economic")


@dataclass(frozen=True)
class SplineBasis:
    """Basis evaluated on the grid ``j / d``.

    ``design`` is the ``(d, js + p)`` matrix, ``gram`` the empirical inner
    product matrix ``design^T design / d``.
    """

    knots: KnotVector
    design: np.ndarray
    gram: np.ndarray

    @property
    def d(self) -> int:
        return self.design.shape[0]


def design_matrix(d: int, knots: KnotVector) -> SplineBasis:
    d = int(d)
    if d < knots.n_basis:
        raise ValueError(f"d={d} grid points cannot determine {knots.n_basis} spline coefficients")
    B = eval_basis(grid(d), knots)
    gram = B.T @ B / d
    _check_conditioning(gram, "B-spline gram matrix")
    return SplineBasis(knots, B, gram)


def make_basis(d: int, js: int, p: int = 4) -> SplineBasis:
    return design_matrix(d, make_knots(js, p))


def sparse_positions(basis: SplineBasis) -> np.ndarray:
    """Retained columns for the sparse fit: ``js + p`` knot-aligned positions."""
    return fixed_positions(basis.d, basis.knots.n_basis)


def _projector_rows(basis: SplineBasis, positions: Optional[np.ndarray]):
    B = basis.design
    if positions is None:
        return B
    positions = np.asarray(positions, dtype=int)
    if positions.size < basis.knots.n_basis:
        raise ValueError("underdetermined fit; reduce knots or order "
                         f"({positions.size} retained points for {basis.knots.n_basis} coefficients)")
    return B[positions]


def fit_coefficients(X, basis: SplineBasis, mode: str = "full",
                     positions: Optional[np.ndarray] = None) -> np.ndarray:
    """Least-squares spline coefficients, one row per trajectory.

    ``mode="full"`` regresses on all ``d`` grid points.  ``mode="sparse"``
    uses only the retained columns ``positions`` (default:
    :func:`sparse_positions`).
    """
    X = as_node_matrix(X)
    if X.shape[1] != basis.d:
        raise ValueError(f"data has d={X.shape[1]} but basis was built for d={basis.d}")
    if mode == "full":
        rows, Xs = basis.design, X
    elif mode == "sparse":
        if positions is None:
            positions = sparse_positions(basis)
        rows = _projector_rows(basis, positions)
        Xs = X[:, np.asarray(positions, dtype=int)]
    else:
        raise ValueError(f"unknown fit mode {mode!r}; use 'full' or 'sparse'")
    Q, R = _orthonormal_factor(rows)
    return solve_triangular(R, Q.T @ Xs.T).T


def fit_batch(X, basis: SplineBasis, mode: str = "full",
              positions: Optional[np.ndarray] = None) -> np.ndarray:
    """Smoothed trajectories evaluated on the full grid."""
    return fit_coefficients(X, basis, mode, positions) @ basis.design.T


def smoother_matrix(basis: SplineBasis) -> np.ndarray:
    """``B (B^T B)^-1 B^T``: the full-mode hat matrix."""
    Q, _ = _orthonormal_factor(basis.design)
    return Q @ Q.T


def bspline_mean(H) -> np.ndarray:
    """Plain average of smoothed trajectories (no ``d / js`` rescaling)."""
    return as_node_matrix(H).mean(axis=0)


def bspline_cov(H) -> np.ndarray:
    """Sample covariance of smoothed trajectories."""
    return sample_cov(H)


def bspline_spatial(H, batch: SparseBatch, T: ScalerLike,
                    center: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Spatial mean and covariance of smoothed values at retained coordinates."""
    smoothed = batch.masked(as_node_matrix(H))
    return rks_mean(smoothed, T), rks_cov(smoothed, T, center=center)
