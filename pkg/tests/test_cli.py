import numpy as np
import pytest

from sparsecov import cli
from sparsecov.core import sample_cov, sample_mean
from sparsecov.selection import candidate_pool, select_knots
from sparsecov.simbench import GeneratorSpec, generate_dataset, true_eigenvalues


@pytest.fixture
def data_file(tmp_path):
    X = generate_dataset(GeneratorSpec(20, 40, k0=60, seed=1)).X
    path = tmp_path / "x.csv"
    cli.save_matrix(path, X)
    return path, X


def _manifest(path):
    return dict(line.split("=", 1) for line in path.read_text().splitlines())


def test_load_matrix_examples(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("1,2\n3,4\n")
    assert np.array_equal(cli.load_matrix(p), [[1, 2], [3, 4]])
    p.write_text("1,2\n3\n")
    with pytest.raises(cli.InputError, match="row 2"):
        cli.load_matrix(p)
    p.write_text("1,2\n3,nan\n")
    with pytest.raises(cli.InputError, match="row 2, column 2"):
        cli.load_matrix(p)
    p.write_text("1,x\n")
    with pytest.raises(cli.InputError, match="row 1, column 2"):
        cli.load_matrix(p)
    with pytest.raises(cli.InputError):
        cli.load_matrix(tmp_path / "missing.csv")


def test_round_trip_full_precision(tmp_path):
    A = np.random.default_rng(0).normal(size=(5, 7)) * 10.0 ** np.arange(-3, 4)
    cli.save_matrix(tmp_path / "m.csv", A)
    assert np.array_equal(cli.load_matrix(tmp_path / "m.csv"), A)


def test_estimate_sample(tmp_path, data_file):
    path, X = data_file
    out = tmp_path / "out"
    assert cli.main(["estimate", "--input", str(path), "--output-dir", str(out)]) == 0
    assert np.array_equal(cli.load_matrix(out / "cov.csv"), sample_cov(X))
    assert np.array_equal(cli.load_matrix(out / "mean.csv").ravel(), sample_mean(X))


def test_estimate_random_knots_full_retention(tmp_path, data_file):
    path, X = data_file
    out = tmp_path / "out"
    assert cli.main(["estimate", "--input", str(path), "--output-dir", str(out),
                     "--estimator", "random-knots", "--js", "40"]) == 0
    assert np.array_equal(cli.load_matrix(out / "cov.csv"), sample_cov(X))
    assert _manifest(out / "manifest.txt")["beta_bar"] == "1.0"


def test_estimate_bspline_auto_records_choice(tmp_path, data_file):
    path, X = data_file
    out = tmp_path / "out"
    assert cli.main(["estimate", "--input", str(path), "--output-dir", str(out),
                     "--estimator", "bspline", "--js", "auto"]) == 0
    js = int(_manifest(out / "manifest.txt")["js"])
    assert js in candidate_pool(40) and js == select_knots(X, 4).chosen


@pytest.mark.parametrize("estimator", ["rks", "bspline-spatial"])
@pytest.mark.parametrize("scaler", ["unit", "avg", "optimal"])
def test_estimate_spatial_variants(tmp_path, data_file, estimator, scaler):
    path, _ = data_file
    out = tmp_path / "out"
    args = ["estimate", "--input", str(path), "--output-dir", str(out), "--estimator", estimator,
            "--js", "5", "--scaler", scaler, "--centering", "fixed", "--seed", "3"]
    assert cli.main(args) == 0
    first = (out / "cov.csv").read_bytes()
    info = _manifest(out / "manifest.txt")
    assert {"js", "scaler", "beta_bar", "c1", "c2", "time_estimate_s"} <= set(info)
    assert cli.main(args) == 0 and (out / "cov.csv").read_bytes() == first


def test_custom_scaler_file(tmp_path, data_file):
    path, _ = data_file
    scaler = tmp_path / "t.csv"
    cli.save_matrix(scaler, np.linspace(1, 2, 20))
    out = tmp_path / "out"
    assert cli.main(["estimate", "--input", str(path), "--output-dir", str(out),
                     "--estimator", "rks", "--js", "4", "--scaler", f"custom:{scaler}"]) == 0
    cli.save_matrix(scaler, np.ones(3))
    assert cli.main(["estimate", "--input", str(path), "--output-dir", str(out),
                     "--estimator", "rks", "--js", "4", "--scaler", f"custom:{scaler}"]) == 1


def test_config_precedence(tmp_path, data_file):
    path, _ = data_file
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# comment\nestimator = rks\njs = 5\ninput = {path}\n")
    out = tmp_path / "out"
    assert cli.main(["estimate", "--config", str(cfg), "--output-dir", str(out), "--js", "7"]) == 0
    info = _manifest(out / "manifest.txt")
    assert info["estimator"] == "rks" and info["js"] == "7"
    cfg.write_text("bogus = 1\n")
    assert cli.main(["estimate", "--config", str(cfg)]) == 1


def test_fpca_rank_one(tmp_path):
    d = 30
    phi = np.cos(np.linspace(0, 2, d)) + 1
    cov = tmp_path / "g.csv"
    cli.save_matrix(cov, np.outer(phi, phi))
    out = tmp_path / "out"
    assert cli.main(["fpca", "--cov", str(cov), "--output-dir", str(out)]) == 0
    lam = cli.load_matrix(out / "eigenvalues.csv").ravel()
    assert lam[0] > 0 and np.allclose(lam[1:], 0, atol=1e-12)
    assert (out / "kappa.txt").read_text().strip() == "1"
    psi = cli.load_matrix(out / "eigenfunctions.csv")
    assert np.allclose(psi.T @ psi / d, np.eye(d), atol=1e-8)


def test_fpca_generator_and_scores(tmp_path):
    data = generate_dataset(GeneratorSpec(60, 200, seed=2))
    cov, raw = tmp_path / "g.csv", tmp_path / "x.csv"
    cli.save_matrix(cov, data.cov)
    cli.save_matrix(raw, data.X)
    out = tmp_path / "out"
    assert cli.main(["fpca", "--cov", str(cov), "--input", str(raw), "--scores",
                     "--output-dir", str(out)]) == 0
    lam = cli.load_matrix(out / "eigenvalues.csv").ravel()[:10]
    assert np.max(np.abs(lam / true_eigenvalues(10) - 1)) < 0.02
    kappa = int((out / "kappa.txt").read_text())
    assert cli.load_matrix(out / "scores.csv").shape == (60, kappa)
    assert cli.main(["fpca", "--cov", str(cov), "--scores", "--output-dir", str(out)]) == 1


def test_select_knots_command(tmp_path, data_file):
    path, X = data_file
    out = tmp_path / "out"
    assert cli.main(["select-knots", "--input", str(path), "--output-dir", str(out)]) == 0
    info = _manifest(out / "selection.txt")
    assert int(info["chosen"]) == select_knots(X, 4).chosen
    assert cli.load_matrix(out / "per_curve.csv").shape == (20, 1)


def test_simulate_tiny_sweep(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["simulate", "--n-values", "50", "--d-values", "50", "--replicates", "3",
                     "--output-dir", str(out)]) == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == "estimator,n,d,js,metric,value,replicates,seed"
    assert len(lines) - 1 >= 5 * 6


def test_exit_codes(tmp_path, capsys):
    assert cli.main([]) == 1
    assert cli.main(["estimate", "--estimator", "nope"]) == 1
    assert cli.main(["estimate", "--js", "0", "--input", "x"]) == 1
    assert cli.main(["estimate"]) == 1
    assert cli.main(["estimate", "--input", str(tmp_path / "missing.csv")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3\n")
    assert cli.main(["estimate", "--input", str(bad)]) == 2
    tiny = tmp_path / "tiny.csv"
    cli.save_matrix(tiny, np.random.default_rng(0).normal(size=(4, 6)))
    assert cli.main(["estimate", "--input", str(tiny), "--estimator", "bspline", "--js", "5",
                     "--output-dir", str(tmp_path / "o")]) == 3
    captured = capsys.readouterr()
    assert captured.out == ""
    assert "error" in captured.err
