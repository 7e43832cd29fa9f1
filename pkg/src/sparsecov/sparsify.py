"""Random (Bernoulli) and fixed-position sparsification of node vectors."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .core import as_node_matrix


class Scheme(str, Enum):
    BERNOULLI = "bernoulli"
    FIXED = "fixed"


@dataclass(frozen=True)
class SparseBatch:
    """Sparsified vectors with their retention mask.

    Attributes
    ----------
    values : ndarray, shape (n, d)
        ``H``; equal to ``X`` where ``mask`` is true and zero elsewhere.
    mask : ndarray of bool, shape (n, d)
    js : int
        Target number of retained coordinates per row.
    scheme : Scheme
    positions : ndarray of int or None
        Zero-based retained columns (fixed scheme only).  Column ``c`` sits at
        grid time ``(c + 1) / d``.
    """

    values: np.ndarray
    mask: np.ndarray
    js: int
    scheme: Scheme
    positions: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def retention(self) -> float:
        """Retention probability ``js / d``."""
        return self.js / self.d

    def masked(self, values) -> "SparseBatch":
        """Same mask applied to another ``(n, d)`` array."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.mask.shape:
            raise ValueError(f"shape mismatch: {values.shape} vs {self.mask.shape}")
        return SparseBatch(np.where(self.mask, values, 0.0), self.mask, self.js,
                           self.scheme, self.positions)


def _check_js(js: int, d: int) -> int:
    js = int(js)
    if not 1 <= js <= d:
        raise ValueError(f"js must lie in [1, {d}], got {js}")
    return js


def from_mask(X, mask, js: int) -> SparseBatch:
    """Build a Bernoulli-scheme batch from an explicit retention mask."""
    X = as_node_matrix(X)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != X.shape:
        raise ValueError(f"mask shape {mask.shape} does not match data {X.shape}")
    js = _check_js(js, X.shape[1])
    return SparseBatch(np.where(mask, X, 0.0), mask, js, Scheme.BERNOULLI)


def bernoulli_sparsify(X, js: int, seed=None) -> SparseBatch:
    """Keep each entry independently with probability ``js / d``.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`,
    including a ``Generator``.
    """
    X = as_node_matrix(X)
    js = _check_js(js, X.shape[1])
    rng = np.random.default_rng(seed)
    mask = rng.random(X.shape) < js / X.shape[1]
    return SparseBatch(np.where(mask, X, 0.0), mask, js, Scheme.BERNOULLI)


def fixed_positions(d: int, js: int) -> np.ndarray:
    """Zero-based columns nearest the equispaced interior knots ``l / (js + 1)``.

    Grid index ``round(l * d / (js + 1))`` (halves round up), clamped to
    ``[1, d]``; raises if two knots land on the same grid point.
    """
    js = _check_js(js, d)
    ell = np.arange(1, js + 1)
    idx = np.floor(ell * d / (js + 1) + 0.5).astype(int)
    idx = np.clip(idx, 1, d)
    if np.any(np.diff(idx) <= 0):
        raise ValueError(
            f"fixed positions collide for d={d}, js={js}; reduce js (safe when js <= d/2)"
        )
    return idx - 1


def fixed_sparsify(X, js: int) -> SparseBatch:
    """Keep the same ``js`` knot-aligned coordinates in every row."""
    X = as_node_matrix(X)
    pos = fixed_positions(X.shape[1], js)
    mask = np.zeros(X.shape, dtype=bool)
    mask[:, pos] = True
    return SparseBatch(np.where(mask, X, 0.0), mask, int(js), Scheme.FIXED, pos)


def coverage_counts(batch: SparseBatch) -> np.ndarray:
    """``M_j``: how many nodes retained coordinate ``j``."""
    return batch.mask.sum(axis=0).astype(int)
