"""Command-line entry point: ``sparsecov estimate|fpca|simulate|select-knots``.

Matrices are headerless CSV (one row per node vector); result tables carry a
header.  Settings resolve as flag > ``--config`` file (flat ``key=value``) >
built-in default.  Diagnostics go to stderr; stdout stays empty.

Exit codes: 0 success, 1 usage error, 2 I/O or input format error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .bspline import bspline_cov, bspline_mean, bspline_spatial, fit_batch, make_basis, sparse_positions
from .core import sample_cov, sample_mean
from .fpca import FVE_THRESHOLD, eigendecompose, fpc_scores, truncate_fve
from .random_knots import (beta_bar, custom_scaler, correlation_energy, rk_cov, rk_mean, rks_cov,
                           rks_mean, spatial_constants, t_avg, t_optimal, unit_scaler)
from .selection import SelectionMethod, select_knots
from .simbench import ESTIMATORS, RESULT_HEADER, ExperimentConfig, format_value, run_experiment
from .sparsify import bernoulli_sparsify

log = logging.getLogger("sparsecov")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InputError(Exception):
    """Unreadable or malformed input file."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- matrix I/O

def load_matrix(path) -> np.ndarray:
    """Read a headerless numeric CSV into an ``(n, d)`` array.

    Blank lines are skipped.  Ragged rows, unparsable cells and non-finite
    values raise :class:`InputError` naming the 1-based row and column.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    rows: List[List[float]] = []
    width = None
    for r, fields in enumerate(csv.reader(text.splitlines()), start=1):
        if not fields or all(not f.strip() for f in fields):
            continue
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise InputError(f"{path}: row {r} has {len(fields)} columns, expected {width}")
        vals = []
        for c, cell in enumerate(fields, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}: row {r}, column {c}: cannot parse {cell.strip()!r}") from None
            if not math.isfinite(v):
                raise InputError(f"{path}: row {r}, column {c}: non-finite value {cell.strip()!r}")
            vals.append(v)
        rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def save_matrix(path, A) -> None:
    """Write a matrix (or a vector as one column) with 17 significant digits."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    try:
        np.savetxt(path, A, fmt="%.17g", delimiter=",")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _write_manifest(path: Path, items: Dict[str, object]) -> None:
    _write_text(path, "".join(f"{k}={_fmt(v)}\n" for k, v in items.items()))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format_value(v)
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    return out


# ------------------------------------------------------------ configuration

def _int_list(text: str) -> List[int]:
    try:
        vals = [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty integer list")
    return vals


def _js_value(text: str):
    if str(text) == "auto":
        return "auto"
    try:
        js = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--js must be a positive integer or 'auto', got {text!r}") from None
    if js < 1:
        raise argparse.ArgumentTypeError(f"--js must be >= 1, got {js}")
    return js


def _scaler_value(text: str) -> str:
    text = str(text)
    if text in ("unit", "avg", "optimal") or (text.startswith("custom:") and len(text) > 7):
        return text
    raise argparse.ArgumentTypeError(f"--scaler must be unit, avg, optimal or custom:<file>, got {text!r}")


def _choice(options):
    def conv(text):
        if str(text) not in options:
            raise argparse.ArgumentTypeError(f"expected one of {', '.join(options)}, got {text!r}")
        return str(text)
    return conv


def _positive_int(text) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _seed_value(text) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be nonnegative")
    return v


def _fraction(text) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"threshold must lie in (0, 1), got {v}")
    return v


# option name -> (converter, default); shared by flags and config files
OPTIONS = {
    "input": (str, None),
    "cov": (str, None),
    "output_dir": (str, "."),
    "estimator": (_choice(ESTIMATORS), "sample"),
    "estimators": (lambda s: [_choice(ESTIMATORS)(e) for e in str(s).split(",") if e], list(ESTIMATORS)),
    "js": (_js_value, "auto"),
    "order": (_choice(("1", "2", "4")), "4"),
    "scaler": (_scaler_value, "avg"),
    "centering": (_choice(("empirical", "fixed")), "empirical"),
    "fit": (_choice(("full", "sparse")), "full"),
    "method": (_choice(tuple(m.value for m in SelectionMethod)), "bspline-full"),
    "seed": (_seed_value, 0),
    "replicates": (_positive_int, 100),
    "threads": (_positive_int, None),
    "n_values": (_int_list, [50, 100, 200, 400]),
    "d_values": (_int_list, [200]),
    "k0": (_positive_int, 1000),
    "convention": (_choice(("floor", "ceil")), "floor"),
    "threshold": (_fraction, FVE_THRESHOLD),
    "scores": (lambda s: str(s).lower() in ("1", "true", "yes", "on"), False),
}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def read_config(path) -> Dict[str, str]:
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    out = {}
    for num, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {num}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise UsageError(f"{path}: line {num}: unknown key {key!r}")
        out[key] = value
    return out


def resolve(args: argparse.Namespace, names: Sequence[str]) -> Dict[str, object]:
    """Merge flags, config file and defaults for the options ``names``."""
    config = read_config(args.config) if getattr(args, "config", None) else {}
    settings = {}
    for name in names:
        conv, default = OPTIONS[name]
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            settings[name] = flag_value
        elif name in config:
            try:
                settings[name] = conv(config[name])
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {name}: {exc}") from None
        else:
            settings[name] = default
    return settings


# ----------------------------------------------------------------- commands

def _scaler(spec: str, X: np.ndarray):
    n = X.shape[0]
    if spec.startswith("custom:"):
        values = load_matrix(spec[len("custom:"):]).ravel()
        if values.size != n:
            raise UsageError(f"custom scaler has {values.size} values but the data have n={n} rows")
        return custom_scaler(values)
    if spec == "unit" or n < 2:
        return unit_scaler(n)
    if spec == "avg":
        return t_avg(n)
    return t_optimal(correlation_energy(X).ratio, n)


def estimate(X: np.ndarray, settings: Dict[str, object]):
    """Run one estimator; returns ``(mean, cov, manifest items)``."""
    n, d = X.shape
    name = settings["estimator"]
    order = int(settings["order"])
    rng = np.random.default_rng(settings["seed"])
    center = X.mean(axis=0) if settings["centering"] == "fixed" else None
    info: Dict[str, object] = {"estimator": name, "n": n, "d": d}
    js = settings["js"]
    if name == "sample":
        info.update(js=d, scaler="none", beta_bar=1.0, c1=0.0, c2=0.0)
        return sample_mean(X), sample_cov(X), info

    if name in ("random-knots", "rks"):
        if js == "auto":
            js = select_knots(X, 0, "random-knots", seed=rng).chosen
        if js > d:
            raise UsageError(f"--js={js} exceeds d={d}")
        batch = bernoulli_sparsify(X, js, rng)
        info["js"] = js
        if name == "random-knots":
            info.update(scaler="none", beta_bar=d / js, c1=0.0, c2=0.0)
            return rk_mean(batch), rk_cov(batch, center), info
        T = _scaler(settings["scaler"], X)
        info.update(scaler=settings["scaler"], **_constants(n, js / d, T))
        return rks_mean(batch, T), rks_cov(batch, T, center=center), info

    fit = settings["fit"]
    if js == "auto":
        method = "bspline-full" if fit == "full" else "bspline-sparse"
        js = select_knots(X, order, method).chosen
    basis = make_basis(d, js, order)
    positions = sparse_positions(basis) if fit == "sparse" else None
    H = fit_batch(X, basis, fit, positions)
    info.update(js=js, order=order, fit=fit)
    if name == "bspline":
        info.update(scaler="none", beta_bar=1.0, c1=0.0, c2=0.0)
        return bspline_mean(H), bspline_cov(H), info
    if js > d:
        raise UsageError(f"--js={js} exceeds d={d}")
    batch = bernoulli_sparsify(X, js, rng)
    T = _scaler(settings["scaler"], X)
    info.update(scaler=settings["scaler"], **_constants(n, js / d, T))
    m, G = bspline_spatial(H, batch, T, center=center)
    return m, G, info


def _constants(n: int, p: float, T) -> Dict[str, object]:
    if n < 2:
        return {"beta_bar": beta_bar(n, p, T), "c1": "na", "c2": "na"}
    c = spatial_constants(n, p, T)
    return {"beta_bar": c.beta_bar, "c1": c.c1, "c2": c.c2}


def cmd_estimate(args) -> int:
    s = resolve(args, ["input", "output_dir", "estimator", "js", "order", "scaler",
                       "centering", "fit", "seed"])
    if not s["input"]:
        raise UsageError("estimate needs --input")
    t0 = time.perf_counter()
    X = load_matrix(s["input"])
    t_load = time.perf_counter() - t0
    m, G, info = estimate(X, s)
    t_est = time.perf_counter() - t0 - t_load
    out = _out_dir(s["output_dir"])
    save_matrix(out / "mean.csv", m)
    save_matrix(out / "cov.csv", G)
    info.update(centering=s["centering"], seed=s["seed"],
                time_load_s=t_load, time_estimate_s=t_est)
    _write_manifest(out / "manifest.txt", info)
    return EXIT_OK


def cmd_fpca(args) -> int:
    s = resolve(args, ["input", "cov", "output_dir", "threshold", "scores"])
    if not s["input"] and not s["cov"]:
        raise UsageError("fpca needs --cov or --input")
    X = load_matrix(s["input"]) if s["input"] else None
    G = load_matrix(s["cov"]) if s["cov"] else sample_cov(X)
    if G.shape[0] != G.shape[1]:
        raise InputError(f"covariance must be square, got {G.shape[0]}x{G.shape[1]}")
    if X is not None and X.shape[1] != G.shape[0]:
        raise InputError(f"data have d={X.shape[1]} but the covariance is {G.shape[0]}x{G.shape[0]}")
    eigs = eigendecompose(G)
    kappa = truncate_fve(eigs, s["threshold"])
    out = _out_dir(s["output_dir"])
    save_matrix(out / "eigenvalues.csv", eigs.eigenvalues)
    save_matrix(out / "eigenfunctions.csv", eigs.eigenfunctions)
    _write_text(out / "kappa.txt", f"{kappa}\n")
    if s["scores"]:
        if X is None:
            raise UsageError("--scores needs the raw data via --input")
        save_matrix(out / "scores.csv", fpc_scores(X, X.mean(axis=0), eigs, kappa))
    return EXIT_OK


def cmd_simulate(args) -> int:
    s = resolve(args, ["output_dir", "estimators", "js", "order", "scaler", "centering", "fit",
                       "seed", "replicates", "threads", "n_values", "d_values", "k0", "convention"])
    if s["scaler"].startswith("custom:"):
        raise UsageError("simulate supports --scaler unit, avg or optimal")
    cfg = ExperimentConfig(
        n_values=tuple(s["n_values"]), d_values=tuple(s["d_values"]),
        replicates=s["replicates"], seed=s["seed"], k0=s["k0"], convention=s["convention"],
        js=None if s["js"] == "auto" else s["js"], order=int(s["order"]), scaler=s["scaler"],
        centering=s["centering"], fit=s["fit"], estimators=tuple(s["estimators"]),
        threads=s["threads"])
    rows = run_experiment(cfg)
    out = _out_dir(s["output_dir"])
    path = out / "results.csv"
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULT_HEADER)
            for row in rows:
                w.writerow([format_value(row[k]) for k in RESULT_HEADER])
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return EXIT_OK


def cmd_select_knots(args) -> int:
    s = resolve(args, ["input", "output_dir", "order", "method", "seed"])
    if not s["input"]:
        raise UsageError("select-knots needs --input")
    X = load_matrix(s["input"])
    p_eff = 0 if s["method"] == "random-knots" else int(s["order"])
    sel = select_knots(X, p_eff, s["method"], seed=s["seed"])
    out = _out_dir(s["output_dir"])
    save_matrix(out / "per_curve.csv", sel.per_curve)
    _write_manifest(out / "selection.txt", {
        "method": s["method"], "p_eff": p_eff, "chosen": sel.chosen,
        "candidates": list(sel.candidates)})
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsecov", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def opt(p, name, help_text, metavar=None):
        conv, default = OPTIONS[name]
        shown = "" if default is None else f" (default: {_fmt(default)})"
        p.add_argument(_flag(name), type=conv, default=None, metavar=metavar,
                       help=help_text + shown)

    def common(p):
        p.add_argument("--config", default=None, help="flat key=value file; flags take precedence")
        opt(p, "output_dir", "directory for output files", "DIR")

    est = sub.add_parser("estimate", help="mean and covariance from a data matrix")
    common(est)
    opt(est, "input", "headerless CSV, one row per node vector", "FILE")
    opt(est, "estimator", "{" + ",".join(ESTIMATORS) + "}", "NAME")
    opt(est, "js", "retained coordinates / interior knots, or 'auto' for AIC", "INT|auto")
    opt(est, "order", "spline order {1,2,4}", "P")
    opt(est, "scaler", "spatial scaler {unit,avg,optimal,custom:<file>}", "KIND")
    opt(est, "centering", "{empirical,fixed}", "MODE")
    opt(est, "fit", "spline fit on all points or knot-aligned points {full,sparse}", "MODE")
    opt(est, "seed", "seed for sparsification masks", "INT")
    est.set_defaults(handler=cmd_estimate)

    fp = sub.add_parser("fpca", help="eigen-decomposition, truncation and scores")
    common(fp)
    opt(fp, "cov", "covariance matrix CSV", "FILE")
    opt(fp, "input", "raw data CSV (covariance estimated if --cov is absent)", "FILE")
    opt(fp, "threshold", "fraction of variance explained for truncation", "FVE")
    fp.add_argument("--scores", action="store_const", const=True, default=None,
                    help="also write FPC scores of --input")
    fp.set_defaults(handler=cmd_fpca)

    sim = sub.add_parser("simulate", help="replicated estimator sweep on synthetic data")
    common(sim)
    opt(sim, "n_values", "comma-separated sample sizes", "LIST")
    opt(sim, "d_values", "comma-separated grid sizes", "LIST")
    opt(sim, "replicates", "replicates per grid point", "INT")
    opt(sim, "estimators", "comma-separated estimators", "LIST")
    opt(sim, "k0", "terms in the generating expansion", "INT")
    opt(sim, "convention", "eigenvalue exponent rounding {floor,ceil}", "NAME")
    opt(sim, "js", "fixed knot count, or 'auto' for per-replicate AIC", "INT|auto")
    opt(sim, "order", "spline order {1,2,4}", "P")
    opt(sim, "scaler", "spatial scaler {unit,avg,optimal}", "KIND")
    opt(sim, "centering", "{empirical,fixed}", "MODE")
    opt(sim, "fit", "{full,sparse}", "MODE")
    opt(sim, "seed", "experiment seed", "INT")
    opt(sim, "threads", "worker threads (fallback: SPARSECOV_THREADS, then CPU count)", "INT")
    sim.set_defaults(handler=cmd_simulate)

    sk = sub.add_parser("select-knots", help="AIC choice of the knot count")
    common(sk)
    opt(sk, "input", "headerless CSV, one row per curve", "FILE")
    opt(sk, "method", "{random-knots,bspline-full,bspline-sparse}", "NAME")
    opt(sk, "order", "spline order {1,2,4} (random-knots uses 0)", "P")
    opt(sk, "seed", "seed for random-knots masks", "INT")
    sk.set_defaults(handler=cmd_select_knots)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
