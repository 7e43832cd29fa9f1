"""Grid containers, the non-sparsified baseline estimators and norm helpers.

All estimators work on an ``(n, d)`` array whose row ``i`` holds node ``i``'s
vector sampled on the uniform grid ``t_j = j / d``, ``j = 1..d``.  Covariances
are plain ``(d, d)`` arrays.
"""

from __future__ import annotations

import numpy as np


def as_node_matrix(X) -> np.ndarray:
    """Validate and return ``X`` as a 2-D float array with finite entries."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D node matrix, got shape {X.shape}")
    n, d = X.shape
    if n < 1 or d < 1:
        raise ValueError(f"node matrix must have n >= 1 and d >= 1, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("node matrix contains non-finite entries")
    return X


def grid(d: int) -> np.ndarray:
    """Time points ``j / d`` for ``j = 1..d``."""
    return np.arange(1, d + 1) / d


def sample_mean(X) -> np.ndarray:
    """Average of the node vectors."""
    return as_node_matrix(X).mean(axis=0)


def sample_cov(X) -> np.ndarray:
    """Averaged covariance with divisor ``n``.

    The population-style divisor is deliberate; every sparsified estimator and
    MSE identity in this package is written against it.
    """
    X = as_node_matrix(X)
    return scaled_cov(X - X.mean(axis=0))


def scaled_cov(U: np.ndarray, scale=None) -> np.ndarray:
    """``diag(scale) (U^T U / n) diag(scale)`` from centered rows ``U``.

    Every covariance estimator in the package goes through this helper, so
    reductions to the sample covariance hold bit-for-bit.
    """
    G = U.T @ U / U.shape[0]
    G = 0.5 * (G + G.T)
    if scale is not None:
        scale = np.asarray(scale, dtype=float)
        G = G * np.multiply.outer(scale, scale)
    return G


def frobenius_mse(A, B, normalized: bool = True) -> float:
    """Squared Frobenius distance between two covariances.

    With ``normalized=True`` the sum is divided by ``d**2`` (the per-entry
    mean squared error used for AMSE); otherwise the plain squared norm is
    returned.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    sq = float(np.sum((A - B) ** 2))
    if normalized:
        sq /= A.shape[0] * A.shape[-1]
    return sq


def sup_error(A, B) -> float:
    """Largest absolute entrywise difference."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return float(np.max(np.abs(A - B)))


def mean_mse(a, b) -> float:
    """``(1/d) * sum_j (a_j - b_j)**2`` for two grid functions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))
