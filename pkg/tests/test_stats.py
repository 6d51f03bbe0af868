import math

import numpy as np
import pytest

from perclab import stats


def test_bootstrap_coverage_gaussian():
    rng = np.random.default_rng(12)
    hits_mean = hits_var = 0
    trials = 200
    for i in range(trials):
        x = rng.normal(size=200)
        m = stats.bootstrap_ci(x, "mean", 1000, 0.95, seed=i)
        v = stats.bootstrap_ci(x, "var", 1000, 0.95, seed=i)
        hits_mean += m.lo <= 0.0 <= m.hi
        hits_var += v.lo <= 1.0 <= v.hi
    assert 0.90 <= hits_mean / trials <= 0.99
    assert 0.85 <= hits_var / trials <= 0.99


def test_bootstrap_deterministic_and_degenerate():
    x = np.arange(50.0)
    assert stats.bootstrap_ci(x, "var", 500, 0.95, 3) == stats.bootstrap_ci(x, "var", 500, 0.95, 3)
    c = stats.bootstrap_ci(np.full(10, 4.0), "var")
    assert (c.estimate, c.lo, c.hi) == (0.0, 0.0, 0.0)
    iv = stats.bootstrap_ci(x, "var", 500)
    assert iv.lo <= iv.estimate <= iv.hi and iv.n == 50


def test_interval_helpers():
    a = stats.Interval(1.0, 0.0, 2.0, 5)
    b = stats.Interval(3.0, 1.5, 4.0, 5)
    c = stats.Interval(9.0, 8.0, 10.0, 5)
    assert a.overlaps(b) and not a.overlaps(c)
    assert a.midpoint == 1.0


def test_mean_ci():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    ci = stats.mean_ci(x, 0.95)
    half = 1.959963984540054 * x.std(ddof=1) / 2
    assert ci.lo == pytest.approx(2.5 - half) and ci.hi == pytest.approx(2.5 + half)


def test_fits():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert stats.fit_through_origin(x, 3 * x) == pytest.approx(3.0)
    fit = stats.weighted_linear_fit(x, 2 * x - 1, [1, 2, 3, 4])
    assert (fit.slope, fit.intercept, fit.r2) == pytest.approx((2.0, -1.0, 1.0))
    two = stats.weighted_linear_fit([0, 1], [0, 5])
    assert two.slope == 5 and math.isnan(two.r2)
    noisy = stats.weighted_linear_fit(x, [0, 1, 0, 1])
    assert 0 <= noisy.r2 < 0.5


def test_log_probability_fit_censors():
    grid = [1, 2, 3, 4]
    counts = [1000, 100, 10, 2]
    fit, used = stats.log_probability_fit(grid, counts, 10_000, min_count=5)
    assert used.tolist() == [True, True, True, False]
    assert fit.slope == pytest.approx(-math.log(10))
    assert fit.r2 == pytest.approx(1.0)
