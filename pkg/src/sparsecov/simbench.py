"""Synthetic generator, AMSE metrics and replicated estimator experiments.

Data follow ``x_i(t) = m(t) + sum_{k<=k0} xi_ik phi_k(t)`` with
``m(t) = sin(2 pi (t - 1/2))``, ``phi_k = sqrt(lambda_k) psi_k``,
``lambda_k = (1/4)^[k/2]``, ``psi_{2k-1} = sqrt(2) cos(2 k pi t)`` and
``psi_{2k} = sqrt(2) sin(2 k pi t)``.

Seeding: every random draw descends from the experiment seed.  Replicate
``r`` at grid point ``(n, d)`` owns ``SeedSequence(seed, spawn_key=(n, d, r))``;
its first child keys the generator, its second drives sparsification masks
and knot selection.  Scores ``xi_{., k}`` come from a Philox stream whose
counter is offset by ``k``, so raising ``k0`` or ``n`` leaves earlier draws
untouched.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bspline import bspline_cov, bspline_mean, bspline_spatial, fit_batch, make_basis, sparse_positions
from .core import frobenius_mse, grid, mean_mse, sample_cov, sample_mean, sup_error
from .fpca import (EigenSystem, align_and_loss, eigendecompose, eigenspace_groups,
                   eigenspace_loss, truncate_fve)
from .random_knots import (correlation_energy, rk_cov, rk_mean, rks_cov, rks_mean, t_avg,
                           t_optimal, unit_scaler)
from .selection import select_knots
from .sparsify import bernoulli_sparsify

log = logging.getLogger(__name__)

ESTIMATORS = ("sample", "random-knots", "rks", "bspline", "bspline-spatial")
METRICS = ("amse_cov", "sup_cov", "mse_mean", "amse_lambda", "amse_phi", "amse_eigenspace")
RESULT_HEADER = ("estimator", "n", "d", "js", "metric", "value", "replicates", "seed")


def true_mean(t) -> np.ndarray:
    return np.sin(2 * np.pi * (np.asarray(t, dtype=float) - 0.5))


def true_eigenvalues(k0: int, convention: str = "floor") -> np.ndarray:
    """``(1/4)^[k/2]`` for ``k = 1..k0`` with ``[.]`` as floor or ceiling."""
    k = np.arange(1, k0 + 1)
    if convention == "floor":
        e = k // 2
    elif convention == "ceil":
        e = (k + 1) // 2
    else:
        raise ValueError(f"unknown eigenvalue convention {convention!r}")
    return 0.25 ** e.astype(float)


def eigenvalue_total(convention: str = "floor") -> float:
    """Sum of the infinite eigenvalue sequence."""
    return 5.0 / 3.0 if convention == "floor" else 2.0 / 3.0


def true_eigenfunctions(t, k0: int) -> np.ndarray:
    """``psi_k(t)`` as a ``(len(t), k0)`` matrix."""
    t = np.asarray(t, dtype=float)
    k = np.arange(1, k0 + 1)
    freq = (k + 1) // 2
    arg = 2 * np.pi * np.outer(t, freq)
    return np.sqrt(2.0) * np.where(k % 2 == 1, np.cos(arg), np.sin(arg))


@lru_cache(maxsize=16)
def _fpc_table(d: int, k0: int, convention: str) -> np.ndarray:
    phi = true_eigenfunctions(grid(d), k0) * np.sqrt(true_eigenvalues(k0, convention))
    phi.setflags(write=False)
    return phi


@dataclass(frozen=True)
class GeneratorSpec:
    n: int
    d: int
    k0: int = 1000
    convention: str = "floor"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.k0 < 1:
            raise ValueError("n, d and k0 must be positive")
        true_eigenvalues(1, self.convention)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    eigenvalues: np.ndarray
    fpcs: np.ndarray
    scores: np.ndarray


def _philox_key(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        words = seed.generate_state(2, np.uint64)
        return int(words[0]) | (int(words[1]) << 64)
    return int(seed) % (1 << 128)


def generate_scores(n: int, k0: int, seed) -> np.ndarray:
    """``(n, k0)`` standard normal scores, column ``k`` from counter block ``k``."""
    key = _philox_key(seed)
    xi = np.empty((n, k0))
    for k in range(k0):
        bitgen = np.random.Philox(key=key, counter=k << 192)
        xi[:, k] = np.random.Generator(bitgen).standard_normal(n)
    return xi


def generate_dataset(spec: GeneratorSpec) -> Dataset:
    phi = _fpc_table(spec.d, spec.k0, spec.convention)
    xi = generate_scores(spec.n, spec.k0, spec.seed)
    m = true_mean(grid(spec.d))
    X = m + xi @ phi.T
    return Dataset(X, m, phi @ phi.T, true_eigenvalues(spec.k0, spec.convention), phi, xi)


def true_eigensystem(d: int, k0: int = 1000, convention: str = "floor",
                     components: int = 20) -> EigenSystem:
    """Analytic eigenpairs on the grid, leading ``components`` only."""
    k = min(components, k0)
    lam = true_eigenvalues(k, convention)
    psi = true_eigenfunctions(grid(d), k)
    return EigenSystem(lam, psi, lam)


def amse_cov(pairs: Sequence[Tuple[np.ndarray, np.ndarray]]) -> float:
    """Average normalized squared Frobenius error over replicates."""
    if len(pairs) == 0:
        raise ValueError("need at least one replicate")
    return float(np.mean([frobenius_mse(a, b) for a, b in pairs]))


def _check_kappa(eigs: EigenSystem, kappa: int):
    if kappa < 1 or kappa > eigs.eigenvalues.size:
        raise ValueError(f"kappa={kappa} exceeds the {eigs.eigenvalues.size} available components")


def amse_eigensystem(estimates: Sequence[EigenSystem], truth: EigenSystem,
                     kappa: int) -> Tuple[float, float]:
    """``(AMSE(lambda), AMSE(phi))`` over the leading ``kappa`` components.

    Each estimated ``phi_k`` is sign-aligned to the truth before the squared
    error is averaged over grid points and components.
    """
    if len(estimates) == 0:
        raise ValueError("need at least one replicate")
    _check_kappa(truth, kappa)
    lam_true = truth.eigenvalues[:kappa]
    phi_true = truth.fpcs(kappa)
    lam_err, phi_err = [], []
    for est in estimates:
        _check_kappa(est, kappa)
        lam_err.append(np.mean((est.eigenvalues[:kappa] - lam_true) ** 2))
        phi_est = est.fpcs(kappa)
        signs = np.array([align_and_loss(est.eigenfunctions[:, k], truth.eigenfunctions[:, k])[0]
                          for k in range(kappa)])
        phi_err.append(np.mean((phi_est * signs - phi_true) ** 2))
    return float(np.mean(lam_err)), float(np.mean(phi_err))


def amse_eigenspace(estimates: Sequence[EigenSystem], truth: EigenSystem, kappa: int) -> float:
    """Mean squared projection distance per eigenspace of the truth.

    Tied true eigenvalues are grouped, so rotations inside a degenerate
    eigenspace cost nothing.
    """
    if len(estimates) == 0:
        raise ValueError("need at least one replicate")
    groups = eigenspace_groups(truth.eigenvalues, kappa)
    _check_kappa(truth, groups[-1][-1] + 1)
    vals = []
    for est in estimates:
        _check_kappa(est, groups[-1][-1] + 1)
        vals.append(np.mean([eigenspace_loss(est.eigenfunctions[:, g], truth.eigenfunctions[:, g]) ** 2
                             for g in groups]))
    return float(np.mean(vals))


@dataclass
class ExperimentConfig:
    """Sweep definition for :func:`run_experiment`.

    ``js=None`` selects knots by AIC per replicate (``p = 0`` for the
    random-knots pair, ``p = order`` for the spline pair).
    """

    n_values: Sequence[int] = (50, 100, 200, 400)
    d_values: Sequence[int] = (200,)
    replicates: int = 100
    seed: int = 0
    k0: int = 1000
    convention: str = "floor"
    js: Optional[int] = None
    order: int = 4
    scaler: str = "avg"
    centering: str = "empirical"
    fit: str = "full"
    estimators: Sequence[str] = ESTIMATORS
    threads: Optional[int] = None

    def grid_points(self) -> List[Tuple[int, int]]:
        return [(int(n), int(d)) for d in self.d_values for n in self.n_values]

    def __post_init__(self):
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.scaler not in ("unit", "avg", "optimal"):
            raise ValueError(f"unknown scaler {self.scaler!r}")
        if self.centering not in ("empirical", "fixed"):
            raise ValueError(f"unknown centering {self.centering!r}")
        if self.fit not in ("full", "sparse"):
            raise ValueError(f"unknown fit mode {self.fit!r}")


@dataclass
class ReplicationResult:
    replicate: int
    js: Dict[str, int] = field(default_factory=dict)
    metrics: Dict[str, Dict[str, float]] = field(default_factory=dict)
    errors: Dict[str, str] = field(default_factory=dict)
    runtimes: Dict[str, float] = field(default_factory=dict)


def _scaler_for(kind: str, X: np.ndarray):
    n = X.shape[0]
    if kind == "unit" or n < 2:
        return unit_scaler(n)
    if kind == "avg":
        return t_avg(n)
    return t_optimal(correlation_energy(X).ratio, n)


def _estimate(name, X, cfg, rng, js_cache):
    """Mean and covariance for one estimator plus the knot count it used."""
    n, d = X.shape
    mbar = X.mean(axis=0)
    center = mbar if cfg.centering == "fixed" else None
    if name == "sample":
        return sample_mean(X), sample_cov(X), d
    if name in ("random-knots", "rks"):
        js = js_cache.get("rk")
        if js is None:
            js = cfg.js or select_knots(X, 0, "random-knots", seed=rng).chosen
            js_cache["rk"] = js
        batch = bernoulli_sparsify(X, js, rng)
        if name == "random-knots":
            return rk_mean(batch), rk_cov(batch, center), js
        T = _scaler_for(cfg.scaler, X)
        return rks_mean(batch, T), rks_cov(batch, T, center=center), js
    js = js_cache.get("bs")
    if js is None:
        method = "bspline-full" if cfg.fit == "full" else "bspline-sparse"
        js = cfg.js or select_knots(X, cfg.order, method).chosen
        js_cache["bs"] = js
    basis = make_basis(d, js, cfg.order)
    positions = sparse_positions(basis) if cfg.fit == "sparse" else None
    H = fit_batch(X, basis, cfg.fit, positions)
    if name == "bspline":
        return bspline_mean(H), bspline_cov(H), js
    batch = bernoulli_sparsify(X, js, rng)
    T = _scaler_for(cfg.scaler, X)
    m, G = bspline_spatial(H, batch, T, center=center)
    return m, G, js


def run_replicate(cfg: ExperimentConfig, n: int, d: int, rep: int,
                  truth: EigenSystem, kappa: int) -> ReplicationResult:
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(n, d, rep))
    data_ss, work_ss = ss.spawn(2)
    data = generate_dataset(GeneratorSpec(n, d, cfg.k0, cfg.convention, data_ss))
    rng = np.random.default_rng(work_ss)
    X = data.X
    mbar, gbar = sample_mean(X), sample_cov(X)
    out = ReplicationResult(rep)
    js_cache: Dict[str, int] = {}
    for name in cfg.estimators:
        t0 = time.perf_counter()
        try:
            m, G, js = _estimate(name, X, cfg, rng, js_cache)
            ref_m, ref_G = (data.mean, data.cov) if name == "sample" else (mbar, gbar)
            eigs = eigendecompose(G)
            lam, phi = amse_eigensystem([eigs], truth, kappa)
            out.metrics[name] = {
                "amse_cov": frobenius_mse(G, ref_G),
                "sup_cov": sup_error(G, ref_G),
                "mse_mean": mean_mse(m, ref_m),
                "amse_lambda": lam,
                "amse_phi": phi,
                "amse_eigenspace": amse_eigenspace([eigs], truth, kappa),
            }
            out.js[name] = int(js)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("replicate %d (n=%d, d=%d) %s failed: %s", rep, n, d, name, exc)
            out.errors[name] = type(exc).__name__
        out.runtimes[name] = time.perf_counter() - t0
    return out


def _thread_count(threads: Optional[int]) -> int:
    if threads:
        return max(1, int(threads))
    env = os.environ.get("SPARSECOV_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(cfg: ExperimentConfig) -> List[dict]:
    """Replicate every grid point and return one row per estimator and metric.

    Rows carry the ``RESULT_HEADER`` keys.  ``js`` is the lower median of the
    per-replicate knot counts.  Estimators that failed in some replicates get
    an extra ``error:<Exception>`` row whose value is the failure count;
    their metrics average the successful replicates only.
    """
    rows: List[dict] = []
    workers = _thread_count(cfg.threads)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for n, d in cfg.grid_points():
            truth = true_eigensystem(d, cfg.k0, cfg.convention)
            kappa = truth_kappa(d, cfg.k0, cfg.convention)
            results = list(pool.map(lambda r: run_replicate(cfg, n, d, r, truth, kappa),
                                    range(cfg.replicates)))
            log.info("finished n=%d d=%d (%d replicates)", n, d, cfg.replicates)
            rows.extend(_aggregate(cfg, n, d, results))
    return rows


def truth_kappa(d: int, k0: int = 1000, convention: str = "floor") -> int:
    """Components needed to pass the FVE threshold on the analytic spectrum."""
    lam = true_eigenvalues(min(k0, 200), convention)
    return truncate_fve(lam)


def _aggregate(cfg, n, d, results: List[ReplicationResult]) -> List[dict]:
    rows = []
    for name in cfg.estimators:
        ok = [r for r in results if name in r.metrics]
        failed = [r.errors[name] for r in results if name in r.errors]
        js_vals = sorted(r.js[name] for r in ok)
        js = js_vals[(len(js_vals) - 1) // 2] if js_vals else 0
        base = {"estimator": name, "n": n, "d": d, "js": js, "seed": cfg.seed}
        if ok:
            for metric in METRICS:
                value = float(np.mean([r.metrics[name][metric] for r in ok]))
                rows.append({**base, "metric": metric, "value": value, "replicates": len(ok)})
        for err in sorted(set(failed)):
            rows.append({**base, "metric": f"error:{err}", "value": float(failed.count(err)),
                         "replicates": len(results)})
    return rows


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def metric_series(rows: List[dict], estimator: str, metric: str, d: int) -> Tuple[np.ndarray, np.ndarray]:
    """``(n, value)`` arrays for one estimator/metric at fixed ``d``, sorted by ``n``."""
    pts = sorted((r["n"], r["value"]) for r in rows
                 if r["estimator"] == estimator and r["metric"] == metric and r["d"] == d)
    if not pts:
        return np.array([]), np.array([])
    ns, vals = zip(*pts)
    return np.array(ns), np.array(vals)


def format_value(v) -> str:
    """Shortest round-trip decimal for floats, plain text otherwise."""
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
