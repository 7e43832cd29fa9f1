"""Random-knots and Random-knots-Spatial estimators and their MSE theory.

Random-knots rescales the zero-filled batch by ``d / js``.  The spatial
variant replaces that constant by ``beta_bar / T(M_j)``, where ``M_j`` counts
the nodes that kept coordinate ``j`` and ``T`` is a positive scaler on
``{1..n}``.

Two centerings are available for the covariances.  The default subtracts the
column average of the sparsified batch.  Passing ``center=m`` (the sample mean
of the unsparsified data) instead centers every retained entry at ``m`` and
leaves dropped entries at zero, which is the deterministic-center model under
which the closed-form MSE identities are derived.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
from scipy.stats import binom

from .core import as_node_matrix, scaled_cov
from .sparsify import SparseBatch, coverage_counts


class ScalerKind(str, Enum):
    UNIT = "unit"
    OPTIMAL = "optimal"
    AVG = "avg"
    CUSTOM = "custom"


@dataclass(frozen=True)
class SpatialScaler:
    """Table of ``T(r)`` for ``r = 1..n`` (``t_values[r - 1]``)."""

    t_values: np.ndarray
    kind: ScalerKind = ScalerKind.CUSTOM

    def __post_init__(self):
        t = np.asarray(self.t_values, dtype=float).ravel()
        if t.size < 1:
            raise ValueError("scaler needs at least one value")
        if not np.all(np.isfinite(t)) or np.any(t <= 0):
            raise ValueError("scaler values must be finite and positive")
        object.__setattr__(self, "t_values", t)

    @property
    def n(self) -> int:
        return self.t_values.size

    def __call__(self, r):
        return self.t_values[np.asarray(r) - 1]


ScalerLike = Union[SpatialScaler, np.ndarray, list]


def _scaler(T: ScalerLike, n: int) -> SpatialScaler:
    if not isinstance(T, SpatialScaler):
        T = SpatialScaler(np.asarray(T, dtype=float))
    if T.n != n:
        raise ValueError(f"scaler has {T.n} entries but there are {n} nodes")
    return T


def unit_scaler(n: int) -> SpatialScaler:
    return SpatialScaler(np.ones(int(n)), ScalerKind.UNIT)


def custom_scaler(values) -> SpatialScaler:
    return SpatialScaler(np.asarray(values, dtype=float), ScalerKind.CUSTOM)


def t_optimal(ratio: float, n: int) -> SpatialScaler:
    """``T*(r) = sqrt(1 + ratio * ((r - 1) / (n - 1))**2)``.

    ``ratio`` is the correlation-energy ratio ``R2 / R1``.
    """
    if ratio < 0:
        raise ValueError(f"ratio must be nonnegative, got {ratio}")
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    if n == 1:
        return SpatialScaler(np.ones(1), ScalerKind.OPTIMAL)
    r = np.arange(1, n + 1)
    return SpatialScaler(np.sqrt(1.0 + ratio * ((r - 1) / (n - 1)) ** 2), ScalerKind.OPTIMAL)


def t_avg(n: int) -> SpatialScaler:
    """Default scaler: ``t_optimal`` evaluated at ratio ``n / 2``."""
    n = int(n)
    if n < 2:
        raise ValueError("the Avg scaler needs n >= 2")
    return SpatialScaler(t_optimal(n / 2, n).t_values, ScalerKind.AVG)


def _retention_weights(n: int, p: float, offset: int) -> np.ndarray:
    """``P(Binomial(n - offset, p) = r - offset)`` for ``r = 1..n``.

    Zero for ``r < offset``.  scipy evaluates the pmf in log space, so large
    ``n`` does not overflow.
    """
    r = np.arange(1, n + 1)
    w = binom.pmf(r - offset, n - offset, p)
    w[r < offset] = 0.0
    return w


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 < p <= 1.0:
        raise ValueError(f"retention probability must lie in (0, 1], got {p}")
    return p


def beta_bar(n: int, p: float, T: ScalerLike) -> float:
    """Normalizer making the spatial estimators unbiased.

    ``(sum_r p / T(r) * C(n-1, r-1) p^(r-1) (1-p)^(n-r))^-1``.  A constant
    scaler ``T = c`` gives exactly ``c / p``.
    """
    n = int(n)
    p = _check_p(p)
    T = _scaler(T, n)
    t = T.t_values
    if np.all(t == t[0]):
        return float(1.0 / p * t[0])
    return float(1.0 / np.sum(p / t * _retention_weights(n, p, 1)))


@dataclass(frozen=True)
class SpatialConstants:
    beta_bar: float
    c1: float
    c2: float
    p: float
    n: int


def spatial_constants(n: int, p: float, T: ScalerLike) -> SpatialConstants:
    """``beta_bar`` with the MSE constants ``c1`` and ``c2``.

    ``c1 = beta_bar^2 sum_r p / T(r)^2 w1(r) - 1/p`` and
    ``c2 = 1 - beta_bar^2 sum_{r>=2} p^2 / T(r)^2 w2(r)`` where ``w1`` and
    ``w2`` are Binomial(n-1, p) and Binomial(n-2, p) weights shifted to start
    at ``r = 1`` and ``r = 2``.
    """
    n = int(n)
    if n < 2:
        raise ValueError("spatial constants need n >= 2")
    p = _check_p(p)
    T = _scaler(T, n)
    bb = beta_bar(n, p, T)
    t2 = T.t_values ** 2
    if np.all(T.t_values == T.t_values[0]):
        # constant T: both sums collapse to 1 / T^2, so c1 = c2 = 0 exactly
        return SpatialConstants(bb, 0.0, 0.0, p, n)
    c1 = bb**2 * np.sum(p / t2 * _retention_weights(n, p, 1)) - 1.0 / p
    c2 = 1.0 - bb**2 * np.sum(p * p / t2 * _retention_weights(n, p, 2))
    return SpatialConstants(bb, float(c1), float(c2), p, n)


@dataclass(frozen=True)
class CorrelationEnergy:
    """Within-node energy ``r1`` and cross-node energy ``r2``.

    ``r1 = sum_i ||D_i||^4`` and ``r2 = 2 sum_{i<k} <D_i D_i^T, D_k D_k^T>``
    with ``D_i = x_i - mean``.  Their sum is ``||sum_i D_i D_i^T||_F^2``, so
    ``r2 / r1`` lies in ``[0, n - 1]``.
    """

    r1: float
    r2: float

    @property
    def ratio(self) -> float:
        """``r2 / r1``, defined as 0 when every row equals the mean."""
        return self.r2 / self.r1 if self.r1 > 0 else 0.0


def correlation_energy(X) -> CorrelationEnergy:
    X = as_node_matrix(X)
    D = X - X.mean(axis=0)
    gram = D @ D.T
    sq = np.diag(gram) ** 2
    r1 = float(np.sum(sq))
    r2 = float(max(np.sum(gram**2) - r1, 0.0))
    return CorrelationEnergy(r1, r2)


def _deviations(batch: SparseBatch, center: Optional[np.ndarray]) -> np.ndarray:
    H = batch.values
    if center is None:
        return H - H.mean(axis=0)
    center = np.asarray(center, dtype=float)
    if center.shape != (batch.d,):
        raise ValueError(f"center must have shape ({batch.d},), got {center.shape}")
    return np.where(batch.mask, H - center, 0.0)


def rk_mean(batch: SparseBatch) -> np.ndarray:
    """``(1/n) (d/js) sum_i h_i``."""
    return batch.values.mean(axis=0) * (1.0 / batch.retention)


def rk_cov(batch: SparseBatch, center: Optional[np.ndarray] = None) -> np.ndarray:
    """``(1/n) (d/js)^2 sum_i (h_i - c)(h_i - c)^T``.

    ``c`` is the batch column mean unless ``center`` is given (see the module
    docstring for the fixed-center convention).
    """
    scale = np.full(batch.d, 1.0 / batch.retention)
    return scaled_cov(_deviations(batch, center), scale)


def _spatial_scale(batch: SparseBatch, T: ScalerLike, counts=None) -> np.ndarray:
    T = _scaler(T, batch.n)
    M = coverage_counts(batch) if counts is None else np.asarray(counts, dtype=int)
    bb = beta_bar(batch.n, batch.retention, T)
    scale = np.zeros(batch.d)
    hit = M >= 1
    scale[hit] = bb / T(M[hit])
    return scale


def rks_mean(batch: SparseBatch, T: ScalerLike, counts=None) -> np.ndarray:
    """``(1/n) beta_bar / T(M_j) sum_i h_ij``; zero where ``M_j = 0``."""
    return batch.values.mean(axis=0) * _spatial_scale(batch, T, counts)


def rks_cov(batch: SparseBatch, T: ScalerLike, counts=None,
            center: Optional[np.ndarray] = None) -> np.ndarray:
    """Random-knots-Spatial covariance.

    Entry ``(j, j')`` is ``(1/n) beta_bar^2 / (T(M_j) T(M_j'))`` times the
    centered cross-product sum.  Rows and columns with ``M_j = 0`` are zero.
    """
    return scaled_cov(_deviations(batch, center), _spatial_scale(batch, T, counts))


def closed_mse_rk(X, js: int) -> float:
    """``E||G_hat - G_bar||^2 = ((d/js)^2 - 1) R1 / n^2``."""
    X = as_node_matrix(X)
    n, d = X.shape
    if not 1 <= js <= d:
        raise ValueError(f"js must lie in [1, {d}]")
    e = correlation_energy(X)
    return ((d / js) ** 2 - 1.0) * e.r1 / n**2


def closed_mse_rks(X, js: int, T: ScalerLike) -> float:
    """``((d/js + c1)^2 - 1) R1 / n^2 + ((1 - c2)^2 - 1) R2 / n^2``."""
    X = as_node_matrix(X)
    n, d = X.shape
    if not 1 <= js <= d:
        raise ValueError(f"js must lie in [1, {d}]")
    if n == 1:
        return 0.0
    e = correlation_energy(X)
    c = spatial_constants(n, js / d, T)
    return (((d / js + c.c1) ** 2 - 1.0) * e.r1 + ((1.0 - c.c2) ** 2 - 1.0) * e.r2) / n**2


def _mask_moments(n: int, p: float, T: SpatialScaler, power: int):
    """``E[xi_i s^power]`` and ``E[xi_i xi_k s^power]`` for one column.

    ``s = beta_bar / T(M)`` and ``xi`` are retention indicators of two
    distinct nodes.
    """
    bb = beta_bar(n, p, T)
    tp = T.t_values ** power
    single = bb**power * p * np.sum(_retention_weights(n, p, 1) / tp)
    pair = bb**power * p * p * np.sum(_retention_weights(n, p, 2) / tp) if n >= 2 else 0.0
    return single, pair


def exact_mean_rks_cov(X, js: int, T: ScalerLike) -> np.ndarray:
    """Exact expectation over Bernoulli masks of fixed-center ``rks_cov``.

    Off-diagonal entries equal the sample covariance; the diagonal is inflated
    by ``E[xi s^2] = d/js + c1`` because a coordinate's retention indicator is
    not independent of itself.
    """
    X = as_node_matrix(X)
    n, d = X.shape
    T = _scaler(T, n)
    G = scaled_cov(X - X.mean(axis=0), np.ones(d))
    a2, _ = _mask_moments(n, js / d, T, 2)
    out = G.copy()
    out[np.diag_indices(d)] *= a2
    return out


def exact_mse_rks(X, js: int, T: ScalerLike, include_diagonal: bool = True) -> float:
    """Exact ``E||G_hat - G_bar||^2`` for fixed-center ``rks_cov``.

    Computed from per-column mask moments, so it agrees with brute-force
    enumeration of all retention masks.  With ``include_diagonal=False`` only
    the ``j != j'`` entries are summed; that part coincides with the
    closed-form expression once ``R1`` and ``R2`` are restricted to
    off-diagonal index pairs.
    """
    X = as_node_matrix(X)
    n, d = X.shape
    if not 1 <= js <= d:
        raise ValueError(f"js must lie in [1, {d}]")
    T = _scaler(T, n)
    p = js / d
    D = X - X.mean(axis=0)
    G = D.T @ D / n
    a2, b2 = _mask_moments(n, p, T, 2)
    a4, b4 = _mask_moments(n, p, T, 4)

    D2 = D**2
    # sum_i D_ij^2 D_ij'^2  and  sum_{i != k} D_ij D_ij' D_kj D_kj'
    same = D2.T @ D2
    cross = (n * G) ** 2 - same
    off = (a2**2 * same + b2**2 * cross) / n**2 - G**2
    np.fill_diagonal(off, 0.0)
    total = float(np.sum(off))
    if include_diagonal:
        s4 = np.sum(D2**2, axis=0)
        pair4 = (n * np.diag(G)) ** 2 - s4
        g = np.diag(G)
        diag = (a4 * s4 + b4 * pair4) / n**2 - 2.0 * a2 * g**2 + g**2
        total += float(np.sum(diag))
    return total
