"""Functional PCA of grid covariances.

The integral eigenequation is discretized with the uniform quadrature weight
``1/d``: eigenpairs of ``G / d`` with eigenvectors rescaled by ``sqrt(d)`` so
that ``(1/d) sum_j psi_k(j/d)^2 = 1``.  Eigenvalues are then on the same scale
as those of the continuous covariance operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import scipy.linalg

FVE_THRESHOLD = 0.95
FULL_SOLVE_MAX_D = 1024
LEADING_PAIRS = 50


@dataclass(frozen=True)
class EigenSystem:
    """Descending eigenvalues and quadrature-orthonormal eigenfunctions.

    ``eigenvalues`` are clipped at zero; ``raw_eigenvalues`` keep the solver
    output for diagnostics.  Column ``k`` of ``eigenfunctions`` is ``psi_k``
    on the grid.
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    raw_eigenvalues: np.ndarray

    @property
    def d(self) -> int:
        return self.eigenfunctions.shape[0]

    def fpcs(self, kappa: int | None = None) -> np.ndarray:
        """Rescaled eigenfunctions ``phi_k = sqrt(lambda_k) psi_k``."""
        k = self.eigenvalues.size if kappa is None else kappa
        return self.eigenfunctions[:, :k] * np.sqrt(self.eigenvalues[:k])

    def reconstruct(self, kappa: int | None = None) -> np.ndarray:
        phi = self.fpcs(kappa)
        return phi @ phi.T


def eigendecompose(G, n_components: int | None = None) -> EigenSystem:
    """Quadrature eigendecomposition of a covariance on the grid.

    The full spectrum is computed for ``d <= 1024``; larger grids return the
    leading ``max(n_components, 50)`` pairs.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"covariance must be square, got shape {G.shape}")
    if not np.all(np.isfinite(G)):
        raise ValueError("covariance contains non-finite entries")
    d = G.shape[0]
    A = 0.5 * (G + G.T) / d
    if d <= FULL_SOLVE_MAX_D:
        vals, vecs = scipy.linalg.eigh(A)
    else:
        k = min(d, max(n_components or 0, LEADING_PAIRS))
        vals, vecs = scipy.linalg.eigh(A, subset_by_index=[d - k, d - 1])
    vals, vecs = vals[::-1], vecs[:, ::-1]
    return EigenSystem(np.clip(vals, 0.0, None), vecs * np.sqrt(d), vals)


def truncate_fve(eigs: EigenSystem | np.ndarray, threshold: float = FVE_THRESHOLD) -> int:
    """Smallest ``l`` whose leading eigenvalues explain more than ``threshold``.

    Uses nonnegative eigenvalues only.  The inequality is strict; cumulative
    shares within rounding of the threshold do not count as exceeding it.
    """
    lam = eigs.eigenvalues if isinstance(eigs, EigenSystem) else np.asarray(eigs, float)
    lam = np.clip(lam, 0.0, None)
    total = lam.sum()
    if total <= 0:
        raise ValueError("spectrum has no positive eigenvalue")
    excess = np.cumsum(lam) - threshold * total
    return int(np.argmax(excess > 1e-12 * total)) + 1


def fpc_scores(H, mhat, eigs: EigenSystem, kappa: int) -> np.ndarray:
    """``xi_ik = lambda_k^-1/2 (1/d) sum_j (h_i - mhat)(j/d) psi_k(j/d)``."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    lam = eigs.eigenvalues[:kappa]
    if kappa < 1 or kappa > eigs.eigenvalues.size:
        raise ValueError(f"kappa={kappa} outside 1..{eigs.eigenvalues.size}")
    if np.any(lam <= 1e-12 * eigs.eigenvalues[0]):
        raise ValueError("scores need eigenvalues above rounding level for every kept component")
    proj = (H - np.asarray(mhat, dtype=float)) @ eigs.eigenfunctions[:, :kappa] / eigs.d
    return proj / np.sqrt(lam)


def _quad_unit(v: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.mean(v**2))
    if norm == 0:
        raise ValueError("cannot align a zero vector")
    return v / norm


def align_and_loss(est, truth, kind: str = "half-squared") -> Tuple[int, float]:
    """Sign that best aligns ``est`` with ``truth`` and the resulting loss.

    Both vectors are normalized under the quadrature inner product first.
    ``half-squared`` gives ``1 - |<est, truth>|``; ``projection`` gives
    ``sqrt(1 - <est, truth>^2)``.
    """
    a = _quad_unit(np.asarray(est, dtype=float))
    b = _quad_unit(np.asarray(truth, dtype=float))
    inner = float(np.clip(np.mean(a * b), -1.0, 1.0))
    sign = 1 if inner >= 0 else -1
    if kind == "half-squared":
        return sign, 1.0 - abs(inner)
    if kind == "projection":
        return sign, float(np.sqrt(max(1.0 - inner**2, 0.0)))
    raise ValueError(f"unknown loss kind {kind!r}")


def eigenspace_groups(eigenvalues, kappa: int, rtol: float = 1e-8) -> List[np.ndarray]:
    """Index groups of (numerically) equal eigenvalues covering the first ``kappa``.

    A group straddling ``kappa`` is kept whole.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    groups, start = [], 0
    while start < kappa:
        stop = start + 1
        while stop < lam.size and abs(lam[stop] - lam[start]) <= rtol * max(abs(lam[start]), 1e-300):
            stop += 1
        groups.append(np.arange(start, stop))
        start = stop
    return groups


def eigenspace_loss(est_vectors, true_vectors) -> float:
    """Projection distance ``||P_est - P_true||_F / sqrt(2)`` between eigenspaces.

    Columns of both arguments are quadrature-orthonormal eigenfunctions; the
    loss is invariant to rotations within either span.
    """
    E = np.atleast_2d(np.asarray(est_vectors, dtype=float).T).T
    F = np.atleast_2d(np.asarray(true_vectors, dtype=float).T).T
    d = E.shape[0]
    overlap = E.T @ F / d
    sq = 0.5 * (E.shape[1] + F.shape[1]) - np.sum(overlap**2)
    return float(np.sqrt(max(sq, 0.0)))
