import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from sparsecov.sparsify import (Scheme, bernoulli_sparsify, coverage_counts, fixed_positions,
                                fixed_sparsify, from_mask)


def test_full_retention_keeps_everything():
    X = np.random.default_rng(1).normal(size=(5, 7))
    b = bernoulli_sparsify(X, 7, seed=3)
    assert b.mask.all() and np.array_equal(b.values, X)
    assert np.all(coverage_counts(b) == 5)


def test_retention_fraction_concentrates():
    b = bernoulli_sparsify(np.ones((1000, 1000)), 300, seed=0)
    p = 0.3
    sigma = np.sqrt(p * (1 - p) / 1e6)
    assert abs(b.mask.mean() - p) < 3 * sigma
    assert b.retention == pytest.approx(0.3)


def test_same_seed_same_batch():
    X = np.random.default_rng(2).normal(size=(6, 9))
    a, b = bernoulli_sparsify(X, 4, seed=11), bernoulli_sparsify(X, 4, seed=11)
    assert np.array_equal(a.mask, b.mask) and np.array_equal(a.values, b.values)


def test_fixed_positions_examples():
    # grid points {2, 3, 5} are zero-based columns {1, 2, 4}
    assert list(fixed_positions(6, 3)) == [1, 2, 4]
    # d odd: the single knot 1/2 rounds up to grid point (d + 1) / 2
    for d in (5, 7, 21):
        assert list(fixed_positions(d, 1)) == [(d + 1) // 2 - 1]


def test_fixed_positions_collision():
    with pytest.raises(ValueError):
        fixed_positions(4, 4)


def test_fixed_sparsify_shared_mask():
    X = np.random.default_rng(3).normal(size=(4, 20))
    b = fixed_sparsify(X, 5)
    assert b.scheme is Scheme.FIXED
    assert np.all(b.mask == b.mask[0]) and b.mask[0].sum() == 5
    assert set(coverage_counts(b)) <= {0, 4}
    assert np.array_equal(fixed_sparsify(X, 5).mask, b.mask)


def test_coverage_mean_binomial():
    b = bernoulli_sparsify(np.ones((400, 500)), 250, seed=4)
    M = coverage_counts(b)
    assert abs(M.mean() - 200) < 3 * np.sqrt(400 * 0.25 / 500)


def test_coverage_goodness_of_fit():
    n = 8
    b = bernoulli_sparsify(np.ones((n, 10_000)), 4_000, seed=5)
    M = coverage_counts(b)
    expected = stats.binom.pmf(np.arange(n + 1), n, 0.4) * M.size
    observed = np.bincount(M, minlength=n + 1)
    keep = expected >= 5
    chi2 = np.sum((observed[keep] - expected[keep]) ** 2 / expected[keep])
    assert stats.chi2.sf(chi2, keep.sum() - 1) > 0.01


def test_js_bounds():
    with pytest.raises(ValueError):
        bernoulli_sparsify(np.ones((2, 3)), 0)
    with pytest.raises(ValueError):
        bernoulli_sparsify(np.ones((2, 3)), 4)
    with pytest.raises(ValueError):
        from_mask(np.ones((2, 3)), np.ones((3, 2), bool), 1)


@given(st.integers(1, 6), st.integers(1, 12), st.data())
def test_dropped_entries_are_zero(n, d, data):
    js = data.draw(st.integers(1, d))
    X = np.random.default_rng(n * 100 + d).normal(size=(n, d)) + 1.0
    b = bernoulli_sparsify(X, js, seed=data.draw(st.integers(0, 2**31)))
    assert np.all(b.values[~b.mask] == 0)
    assert np.array_equal(b.values[b.mask], X[b.mask])
    other = b.masked(2 * X)
    assert np.array_equal(other.mask, b.mask) and np.all(other.values[~b.mask] == 0)
