"""
Summary statistics for the studies: Monte Carlo means with standard errors,
moment z-scores against a standard normal, and least-squares fits of decay
rates and convergence orders.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import statsmodels.api as sm
from scipy import stats

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearFit:
    slope: float
    stderr: float
    intercept: float
    n_points: int

    def interval(self, k=2.0):
        return self.slope - k * self.stderr, self.slope + k * self.stderr

    def overlaps(self, low, high, k=2.0):
        """True when slope +- k*stderr meets the target range [low, high]."""
        lo, hi = self.interval(k)
        return hi >= low and lo <= high


def mean_and_stderr(values):
    """Compensated mean and its Monte Carlo standard error (ddof=1)."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    count = values.size
    if count == 0:
        raise ValueError("no values to average")
    mean = math.fsum(values) / count
    if count == 1:
        return mean, math.nan
    var = math.fsum((values - mean) ** 2) / (count - 1)
    return mean, math.sqrt(var / count)


def fit_line(x, y):
    """OLS fit y = a + b x; the slope standard error is nan with two points."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size or x.size < 2:
        raise ValueError("need at least two (x, y) points of equal length, got %d and %d" % (x.size, y.size))
    result = sm.OLS(y, sm.add_constant(x)).fit()
    stderr = float(result.bse[1]) if x.size > 2 else math.nan
    return LinearFit(float(result.params[1]), stderr, float(result.params[0]), int(x.size))


def fit_loglog_slope(h, errors):
    """Convergence order: slope of log(error) against log(h)."""
    h = np.asarray(h, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if np.any(h <= 0) or np.any(errors <= 0):
        raise ValueError("log-log fit needs positive step sizes and errors")
    return fit_line(np.log(h), np.log(errors))


def fit_log_decay(steps, values):
    """
    Exponential decay rate r of values ~ C exp(-r k); the returned fit holds
    r as its slope (sign flipped) with the OLS standard error.
    """
    values = np.asarray(values, dtype=np.float64)
    keep = values > 0
    if np.sum(keep) < 2:
        raise ValueError("decay fit needs at least two positive values")
    fit = fit_line(np.asarray(steps, dtype=np.float64)[keep], np.log(values[keep]))
    return LinearFit(-fit.slope, fit.stderr, fit.intercept, fit.n_points)


def sample_moments(samples, axis=0):
    """Mean, variance (ddof=1) and skewness along `axis`."""
    samples = np.asarray(samples, dtype=np.float64)
    return np.mean(samples, axis=axis), np.var(samples, axis=axis, ddof=1), stats.skew(samples, axis=axis)


def normal_moment_zscores(samples, axis=0):
    """
    z-scores of the sample mean, variance and skewness against N(0, 1),
    with standard errors 1/sqrt(B), sqrt(2/B) and sqrt(6/B).
    """
    samples = np.asarray(samples, dtype=np.float64)
    count = samples.shape[axis]
    mean, var, skew = sample_moments(samples, axis)
    return {
        "mean": mean,
        "var": var,
        "skew": skew,
        "mean_z": mean * math.sqrt(count),
        "var_z": (var - 1.0) / math.sqrt(2.0 / count),
        "skew_z": skew / math.sqrt(6.0 / count),
    }


def combined_z(a, se_a, b, se_b):
    """|a - b| in units of the combined standard error."""
    scale = math.sqrt(se_a ** 2 + se_b ** 2)
    if scale == 0:
        return 0.0 if a == b else math.inf
    return abs(a - b) / scale
