"""Replica-level estimators: bootstrap intervals and small weighted fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as _st


@dataclass(frozen=True)
class Interval:
    estimate: float
    lo: float
    hi: float
    n: int

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def overlaps(self, other: "Interval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi


def _sample_var(a, axis=-1):
    return np.var(a, axis=axis, ddof=1)


def _mean(a, axis=-1):
    return np.mean(a, axis=axis)


STATISTICS = {"var": _sample_var, "mean": _mean}


def bootstrap_ci(
    samples,
    statistic: str = "var",
    n_resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> Interval:
    """Percentile bootstrap interval of ``statistic`` over replica values.

    Degenerate inputs (fewer than two samples, or all equal) give a
    zero-width interval at the point estimate.
    """
    x = np.asarray(samples, dtype=float)
    fn = STATISTICS[statistic]
    if x.size < 2:
        est = float(fn(x)) if x.size and statistic == "mean" else float("nan")
        return Interval(est, est, est, int(x.size))
    est = float(fn(x))
    if np.all(x == x[0]):
        return Interval(est, est, est, int(x.size))
    res = _st.bootstrap(
        (x,), fn, n_resamples=n_resamples, confidence_level=level, method="percentile",
        vectorized=True, random_state=np.random.default_rng(seed),
    )
    ci = res.confidence_interval
    return Interval(est, float(ci.low), float(ci.high), int(x.size))


def mean_ci(samples, level: float = 0.95) -> Interval:
    """Normal-approximation interval for a mean (used where a standard
    error is the natural summary)."""
    x = np.asarray(samples, dtype=float)
    m = float(x.mean()) if x.size else float("nan")
    if x.size < 2:
        return Interval(m, m, m, int(x.size))
    se = float(x.std(ddof=1) / np.sqrt(x.size))
    z = float(_st.norm.ppf(0.5 + level / 2))
    return Interval(m, m - z * se, m + z * se, int(x.size))


def standard_error(samples) -> float:
    x = np.asarray(samples, dtype=float)
    return float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")


def fit_through_origin(x, y, weights=None) -> float:
    """Least-squares ``c`` in ``y ~ c * x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    den = float(np.sum(w * x * x))
    return float(np.sum(w * x * y) / den) if den > 0 else float("nan")


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float
    n_points: int


def weighted_linear_fit(x, y, weights=None) -> LinearFit:
    """Weighted least squares line with weighted coefficient of
    determination.  Two points give an exact line and ``r2 = nan``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    k = int(x.size)
    if k < 2:
        return LinearFit(float("nan"), float("nan"), float("nan"), k)
    sw = w.sum()
    xm = np.sum(w * x) / sw
    ym = np.sum(w * y) / sw
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    if k == 2:
        return LinearFit(slope, intercept, float("nan"), k)
    resid = y - (intercept + slope * x)
    ss_tot = np.sum(w * (y - ym) ** 2)
    r2 = float(1.0 - np.sum(w * resid ** 2) / ss_tot) if ss_tot > 0 else float("nan")
    return LinearFit(slope, intercept, r2, k)


def log_probability_fit(grid, counts, total, min_count: int = 5) -> tuple[LinearFit, np.ndarray]:
    """Fit ``log P`` against the grid using only uncensored points.

    Weights are inverse binomial variances of ``log p_hat`` (``count /
    (1 - p_hat)``).  Returns the fit and the boolean mask of points used.
    """
    grid = np.asarray(grid, dtype=float)
    counts = np.asarray(counts, dtype=float)
    total = np.broadcast_to(np.asarray(total, dtype=float), counts.shape)
    used = counts >= min_count
    ph = counts[used] / total[used]
    w = counts[used] / np.maximum(1.0 - ph, 1e-300)
    fit = weighted_linear_fit(grid[used], np.log(ph), w)
    return fit, used
