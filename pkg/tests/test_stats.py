import math

import numpy as np
import pytest

from src.stats import (LinearFit, combined_z, fit_line, fit_log_decay, fit_loglog_slope, mean_and_stderr,
                       normal_moment_zscores)


def test_mean_and_stderr():
    mean, stderr = mean_and_stderr([1.0, 2.0, 3.0, 4.0])
    assert mean == 2.5
    assert stderr == pytest.approx(math.sqrt(5.0 / 3.0 / 4.0))
    single = mean_and_stderr([7.0])
    assert single[0] == 7.0 and math.isnan(single[1])
    with pytest.raises(ValueError):
        mean_and_stderr([])


def test_compensated_mean():
    values = [1e16, 1.0, -1e16, 1.0]
    assert mean_and_stderr(values)[0] == 0.5


def test_fit_line_recovers_exact_slope():
    x = np.arange(6.0)
    fit = fit_line(x, 1.0 + 2.0 * x)
    assert fit.slope == pytest.approx(2.0)
    assert fit.intercept == pytest.approx(1.0)
    assert fit.stderr == pytest.approx(0.0, abs=1e-10)
    assert fit.n_points == 6
    assert math.isnan(fit_line([0.0, 1.0], [0.0, 1.0]).stderr)
    with pytest.raises(ValueError):
        fit_line([1.0], [1.0])


def test_log_decay_rate():
    steps = np.arange(20)
    fit = fit_log_decay(steps, 3.0 * np.exp(-0.3 * steps))
    assert fit.slope == pytest.approx(0.3)
    values = np.exp(-0.3 * steps)
    values[-5:] = 0.0
    assert fit_log_decay(steps, values).n_points == 15
    with pytest.raises(ValueError):
        fit_log_decay([0, 1], [1.0, 0.0])


def test_loglog_order():
    h = np.array([0.2, 0.1, 0.05, 0.025])
    fit = fit_loglog_slope(h, 0.7 * h ** 2)
    assert fit.slope == pytest.approx(2.0)
    with pytest.raises(ValueError):
        fit_loglog_slope(h, -h)


def test_interval_overlap():
    fit = LinearFit(slope=1.9, stderr=0.05, intercept=0.0, n_points=5)
    assert fit.interval() == pytest.approx((1.8, 2.0))
    assert fit.overlaps(1.95, 2.3)
    assert not fit.overlaps(2.05, 2.3)


def test_normal_moment_zscores(rng):
    samples = rng.normal(size=(50000, 3))
    moments = normal_moment_zscores(samples)
    assert set(moments) == {"mean", "var", "skew", "mean_z", "var_z", "skew_z"}
    for key in ("mean_z", "var_z", "skew_z"):
        assert np.all(np.abs(moments[key]) < 5.0)
    shifted = normal_moment_zscores(samples + 0.1)
    assert np.all(shifted["mean_z"] > 10.0)


def test_combined_z():
    assert combined_z(1.0, 0.3, 0.0, 0.4) == pytest.approx(2.0)
    assert combined_z(1.0, 0.0, 1.0, 0.0) == 0.0
    assert math.isinf(combined_z(1.0, 0.0, 0.0, 0.0))
