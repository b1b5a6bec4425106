import math

import numpy as np
import pytest

from ppbounds.errors import ConfigurationError, DataError
from ppbounds.mle import (
    ParametricFamily,
    bernoulli_grid,
    categorical_family,
    fit,
    fit_counts,
    g_class,
    hellinger_squared,
    verify_rate,
)


def test_family_validation():
    with pytest.raises(ConfigurationError):
        ParametricFamily((0.0, 1.0), (0.5,), np.array([[0.6, 0.6]]), 0)
    with pytest.raises(ConfigurationError):
        # f_theta0 must be positive everywhere
        ParametricFamily((0.0, 1.0), (0.0, 1.0), np.array([[1.0, 0.0], [0.5, 0.5]]), 0)


def test_hellinger_examples():
    assert hellinger_squared([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert hellinger_squared([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
    val = hellinger_squared([0.5, 0.5], [0.25, 0.75])
    assert val == pytest.approx(1.0 - (math.sqrt(0.125) + math.sqrt(0.375)), abs=1e-15)
    assert val == pytest.approx(0.0340741737109318, abs=1e-12)


def test_hellinger_invariants():
    rng = np.random.default_rng(4)
    for _ in range(25):
        f = rng.dirichlet(np.ones(5))
        g = rng.dirichlet(np.ones(5))
        h_fg = hellinger_squared(f, g)
        assert h_fg == pytest.approx(hellinger_squared(g, f), abs=0)
        assert 0.0 <= h_fg <= 1.0
        # algebraic identity with the half-sum-of-squares form
        other = 0.5 * float(((np.sqrt(f) - np.sqrt(g)) ** 2).sum())
        assert h_fg == pytest.approx(other, abs=1e-12)
    assert hellinger_squared(f, f) == 0.0


def test_hellinger_support_mismatch():
    with pytest.raises(DataError):
        hellinger_squared([0.5, 0.5], [0.2, 0.3, 0.5])


def test_fit_bernoulli_example():
    family = bernoulli_grid([0.3, 0.5, 0.7], 0.5)
    sample = [1.0] * 7 + [0.0] * 3
    assert family.thetas[fit(sample, family)] == pytest.approx(0.7)


def test_fit_excludes_zero_density_thetas():
    # only theta index 1 puts mass on support point 2.0
    rows = [[0.5, 0.5, 0.0], [0.2, 0.3, 0.5], [1.0, 0.0, 0.0]]
    family = categorical_family([0.0, 1.0, 2.0], rows, 1)
    assert fit([2.0, 2.0, 0.0], family) == 1


def test_fit_tie_goes_to_smaller_index():
    rows = [[0.4, 0.6], [0.4, 0.6], [0.9, 0.1]]
    family = categorical_family([0.0, 1.0], rows, 0)
    assert fit([1.0, 0.0, 1.0], family) == 0


def test_fit_errors():
    family = bernoulli_grid([0.3, 0.7], 0.3)
    with pytest.raises(DataError):
        fit([], family)
    with pytest.raises(DataError):
        fit([2.0], family)
    rows = [[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]]
    fam = categorical_family([0.0, 1.0], rows, 0)
    # a sample hitting both points excludes thetas 1 and 2 but not 0
    assert fit([0.0, 1.0], fam) == 0


def test_counts_sufficient_statistic_matches_fit():
    family = bernoulli_grid(np.arange(0.2, 0.81, 0.1), 0.5)
    rng = np.random.default_rng(8)
    sample = rng.integers(0, 2, size=200).astype(float)
    counts = np.array([np.sum(sample == 0.0), np.sum(sample == 1.0)], dtype=float)
    assert counts.sum() == 200
    assert fit(sample, family) == fit_counts(counts, family)


def test_g_class_values_and_conditions():
    family = bernoulli_grid([0.3, 0.5, 0.7], 0.5)
    gc = g_class(family)
    i0 = family.theta0_index
    assert np.allclose(gc.table[i0], 0.0, atol=0)
    assert gc.d1.d[i0, i0] == 0.0
    i7 = family.thetas.index(0.7)
    assert gc.table[i7][1] == pytest.approx(0.18321595661992318, abs=1e-12)
    assert gc.table[i7][0] == pytest.approx(-0.2254033307585166, abs=1e-12)
    assert gc.d2.d[i7, i0] == pytest.approx(0.2053956526769576, abs=1e-12)
    assert gc.k_hat > 0


def test_g_class_d2_triangle_over_grid():
    family = bernoulli_grid([0.2, 0.35, 0.5, 0.65, 0.8], 0.5)
    d2 = g_class(family).d2.d
    n = len(family)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                assert d2[i, j] <= d2[i, k] + d2[k, j] + 1e-12


def test_verify_rate_single_theta_family():
    family = bernoulli_grid([0.5], 0.5)
    report = verify_rate(family, [20, 40], [0.001, 0.01], 300, 3)
    assert all(m == 0.0 for m in report.medians)
    assert all(row[2] == 0.0 for row in report.tail_rows)  # empirical P(h2 >= u)
    assert report.proof_inequality_violations == 0


def test_verify_rate_consistency_and_proof_inequality():
    thetas = np.round(np.arange(0.30, 0.7001, 0.005), 10)
    family = bernoulli_grid(thetas, 0.5)
    report = verify_rate(family, [50, 100, 200, 400], [0.0005, 0.001, 0.002], 2000, 11)
    assert report.proof_inequality_violations == 0
    assert report.medians_nonincreasing
    assert math.isfinite(report.fitted_c) and report.fitted_c > 0
    assert report.gamma_solver == "greedy"
    # medians sit on the exact atoms of the h2 distribution
    assert report.medians[0] == pytest.approx(8.016054e-04, rel=1e-5)


def test_verify_rate_median_decay_slope():
    thetas = np.round(np.arange(0.30, 0.7001, 0.005), 10)
    family = bernoulli_grid(thetas, 0.5)
    report = verify_rate(family, [50, 100, 200, 400], [0.001], 4000, 29)
    assert len(report.decaying_range) >= 3
    assert report.loglog_slope is not None
    assert -1.3 <= report.loglog_slope <= -0.7
