import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from src.config import build_experiment, load_config
from src.coupling import CouplingParams, reflection_skipped
from src.experiments import (ExperimentConfig, bias_study, contraction_experiment, contraction_theorem_check,
                             coupled_run, dimension_sweep, distance_series, fit_decay_window, initial_pair,
                             interaction_sweep, marginal_check, order_study, product_bias, sample_run)
from src.integrator import IntegratorConfig, PhasePoint, verlet_flow
from src.model import GaussianMixture, MeanFieldModel, Quadratic, QuadraticInteraction, ZeroInteraction
from src.sampler import IntensiveFunc
from src.theory import RegularityParams

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _quadratic_cfg(**kwargs):
    model = MeanFieldModel(Quadratic(1.0), QuadraticInteraction(1), epsilon=0.1, n=3, d=2)
    base = dict(model=model, integrator=IntegratorConfig(1.0, 10), coupling=CouplingParams(gamma=1.0, max_steps=300),
                seed=11, replicas=6)
    base.update(kwargs)
    return ExperimentConfig(**base)


def _theorem_cfg(**kwargs):
    model = MeanFieldModel(Quadratic(1.0), ZeroInteraction(), n=1, d=1)
    base = dict(model=model, integrator=IntegratorConfig(0.35, 1000),
                coupling=CouplingParams(gamma=1.0 / 0.35), seed=3, draws=20000,
                regularity=RegularityParams(K=1.0, L=1.0))
    base.update(kwargs)
    return ExperimentConfig(**base)


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        _quadratic_cfg(replicas=0)
    with pytest.raises(ValueError):
        _quadratic_cfg(step_ladder=(8,))
    with pytest.raises(ValueError):
        _quadratic_cfg(initializer="sobol")
    assert _quadratic_cfg(steps=50).window_length == 50


def test_initial_pairs():
    cfg = _quadratic_cfg(init_scale=2.0)
    x0, y0 = initial_pair(cfg.model, cfg, 0)
    again = initial_pair(cfg.model, cfg, 0)
    other = initial_pair(cfg.model, cfg, 1)
    np.testing.assert_array_equal(x0, again[0])
    assert not np.array_equal(x0, other[0])
    assert not np.array_equal(x0, y0)

    means = np.array([[0.0, 1.0], [4.0, 3.0]])
    mixture = MeanFieldModel(GaussianMixture(means), n=5, d=2)
    x0, y0 = initial_pair(mixture, cfg, 0)
    for state in (x0, y0):
        assert np.all(state >= means.min(axis=0)) and np.all(state <= means.max(axis=0))


def test_distance_series_and_window():
    class Trace(object):
        def __init__(self, values):
            self.mean_distance = values

        def __len__(self):
            return len(self.mean_distance)

    traces = [Trace([1.0, 0.4, 0.2, 0.1, 0.05]), Trace([1.0, 0.4, 0.2])]
    frame = distance_series(traces)
    assert list(frame.columns) == ["step", "mean_distance", "stderr", "n_active"]
    np.testing.assert_allclose(frame.mean_distance, [1.0, 0.4, 0.2, 0.05, 0.025])
    assert frame.n_active.tolist() == [2, 2, 2, 1, 1]
    fit, (start, end) = fit_decay_window(frame, 2)
    assert (start, end) == (0, 2)
    assert fit.slope > 0


def test_contraction_on_quadratic_model():
    report = contraction_experiment(_quadratic_cfg())
    assert report.passed, report.summary_lines()
    assert report.fits["converged_fraction"] == 1.0
    assert report.fits["rate"] > 0
    frame = report.series["contraction"]
    assert frame.mean_distance.iloc[0] > frame.mean_distance.iloc[-1]
    assert set(report.series) == {"contraction", "coupling_trace"}


def test_contraction_does_not_depend_on_threads():
    one = contraction_experiment(_quadratic_cfg(replicas=4))
    two = contraction_experiment(_quadratic_cfg(replicas=4, threads=2))
    np.testing.assert_array_equal(one.series["contraction"].values, two.series["contraction"].values)
    assert one.fits == two.fits


def test_infinite_radius_on_mixture_is_noted():
    means = np.array([[0.0, 0.0], [2.0, 1.0]])
    model = MeanFieldModel(GaussianMixture(means), QuadraticInteraction(1), epsilon=0.01, n=2, d=2)
    report = contraction_experiment(_quadratic_cfg(model=model, replicas=2, record_positions=True))
    assert any("r_tilde = inf" in note for note in report.notes)
    assert "positions" in report.series


def test_coupled_and_sample_runs():
    report = coupled_run(_quadratic_cfg())
    assert report.fits["converged"] == 1.0
    assert len(report.series["coupling_trace"]) == report.fits["steps"] + 1

    report = sample_run(_quadratic_cfg(steps=20, burn_in=5, window=10, observable="func:norm_sq"))
    assert report.fits["retained_states"] == 21
    assert "ergodic_average" in report.fits
    thinned = sample_run(_quadratic_cfg(steps=20, thin=5))
    assert thinned.fits["retained_states"] == 5
    assert "ergodic_average" not in thinned.fits


def test_theorem_check_refusals():
    report = contraction_theorem_check(_theorem_cfg(regularity=None))
    assert report.refused and not report.passed

    report = contraction_theorem_check(_theorem_cfg(integrator=IntegratorConfig(0.5, 1000)))
    assert report.refused
    assert any("cond_T" in note for note in report.notes)

    cap = 0.5 * (0.35 / (36.0 * 149.0)) ** 2
    params = RegularityParams(K=1.0, L=1.0, L_tilde=1.0, epsilon=1.01 * cap)
    report = contraction_theorem_check(_theorem_cfg(regularity=params))
    assert report.refused
    assert any("cond_epsilon" in note for note in report.notes)


def test_theorem_check_at_coincident_states():
    report = contraction_theorem_check(_theorem_cfg(draws=100), x=np.zeros((1, 1)), y=np.zeros((1, 1)))
    assert report.fits["rho0"] == 0.0
    assert report.fits["estimate"] == 0.0
    assert report.passed


def test_theorem_check_contracts():
    report = contraction_theorem_check(_theorem_cfg())
    assert report.passed, report.summary_lines()
    assert report.fits["ratio"] < 1.0 - report.fits["c"]
    assert report.fits["rho0"] == pytest.approx(0.35 * -math.expm1(-0.1 / 0.35))


def test_theorem_check_does_not_depend_on_threads():
    cfg = _theorem_cfg(draws=45000)
    one = contraction_theorem_check(cfg)
    two = contraction_theorem_check(replace(cfg, threads=3))
    assert one.fits == two.fits


def test_order_study_on_interacting_quadratic():
    model = MeanFieldModel(Quadratic(1.0), QuadraticInteraction(1), epsilon=0.1, n=4, d=1)
    cfg = _quadratic_cfg(model=model, replicas=50, step_ladder=(8, 16, 32, 64), reference_factor=32, n_list=(2, 8))
    report = order_study(cfg)
    assert report.passed, report.summary_lines()
    assert report.fits["order"] == pytest.approx(2.0, abs=0.3)
    names = [v.name for v in report.verdicts]
    assert names == ["common_random_numbers", "reference_stable", "strong_order", "harmonic_halving", "linear_in_n"]
    assert list(report.series["order_study"].columns) == ["h", "mean_error", "stderr"]


def test_product_bias_matches_the_stationary_variance():
    # Verlet HMC on |x|^2/2 leaves N(0, 1/(1 - h^2/4)) invariant
    h, window = 0.2, 50
    cfg = _quadratic_cfg(replicas=4000, window=window)
    mean, stderr = product_bias(cfg, 5, IntensiveFunc("square0"))
    harmonic = MeanFieldModel(Quadratic(1.0), n=1, d=1)
    a = verlet_flow(harmonic, PhasePoint([[1.0]], [[0.0]]), IntegratorConfig(1.0, 5)).q[0, 0]
    stationary = h * h / (4.0 - h * h)
    expected = stationary * (1.0 - sum(a ** (2 * k) for k in range(window)) / window)
    assert abs(mean - expected) <= 0.02 * expected + 4.0 * stderr
    assert stderr < 0.2 * expected


def test_marginal_check_and_negative_control():
    model = MeanFieldModel(Quadratic(1.0), n=4, d=2)
    cfg = _quadratic_cfg(model=model, draws=20000, coupling=CouplingParams(gamma=1.0, r_tilde=1.0))
    report = marginal_check(cfg)
    assert report.passed, report.summary_lines()
    assert report.fits["n_sync"] == 2 * 20000
    assert report.fits["n_shift"] + report.fits["n_reflect"] == 2 * 20000
    assert len(report.series["marginal_check"]) == 8

    broken = marginal_check(cfg, velocity_coupler=reflection_skipped)
    assert not broken.passed


def test_marginal_check_replaces_infinite_radius():
    model = MeanFieldModel(Quadratic(1.0), n=2, d=1)
    report = marginal_check(_quadratic_cfg(model=model, draws=1000))
    assert any("r_tilde = inf" in note for note in report.notes)
    assert report.fits["n_sync"] == 1000


@pytest.mark.slow
def test_mixture_contraction_reaches_tolerance():
    cfg = build_experiment(load_config(str(CONFIGS / "mixture_contraction.cfg")), seed=42)
    report = contraction_experiment(cfg)
    assert report.fits["converged_fraction"] >= 0.9
    assert report.fits["rate"] > 0


@pytest.mark.slow
def test_dimension_sweep_rates_agree():
    cfg = build_experiment(load_config(str(CONFIGS / "dimension_sweep.cfg")), seed=42)
    report = dimension_sweep(cfg)
    assert report.passed, report.summary_lines()


@pytest.mark.slow
def test_interaction_sweep_reports_both_regimes():
    cfg = build_experiment(load_config(str(CONFIGS / "interaction_sweep.cfg")), seed=42)
    report = interaction_sweep(cfg)
    frame = report.series["interaction_sweep"]
    assert len(frame) == 8
    weak = frame[(frame.sign == 1) & (frame.epsilon == 0.01)]
    assert weak.converged_fraction.iloc[0] >= 0.9
    repulsive = frame[(frame.sign == -1) & (frame.epsilon >= 1.0)]
    assert len(repulsive) > 0
    assert (repulsive.converged_fraction < 0.9).all()
    assert report.passed, report.summary_lines()


@pytest.mark.slow
def test_bias_study_acceptance():
    cfg = build_experiment(load_config(str(CONFIGS / "bias_study.cfg")), seed=42)
    report = bias_study(cfg)
    assert report.passed, report.summary_lines()


@pytest.mark.slow
def test_quadratic_theorem_acceptance():
    cfg = build_experiment(load_config(str(CONFIGS / "quadratic_theorem.cfg")), seed=42)
    report = contraction_theorem_check(cfg)
    assert report.passed, report.summary_lines()


def test_theorem_check_notes_a_non_derived_coupling():
    report = contraction_theorem_check(_theorem_cfg(draws=100))
    assert any("differs from the derived" in note for note in report.notes)
    derived = _theorem_cfg(draws=100, coupling=CouplingParams(gamma=1.0 / 0.35, r_tilde=0.0))
    report = contraction_theorem_check(derived)
    assert not any("differs from the derived" in note for note in report.notes)


def test_diverged_replicas_are_reported():
    model = MeanFieldModel(Quadratic(1.0), QuadraticInteraction(-1), epsilon=50.0, n=3, d=1)
    report = contraction_experiment(_quadratic_cfg(model=model, replicas=3,
                                                   coupling=CouplingParams(gamma=1.0, max_steps=500)))
    assert report.fits["diverged_fraction"] == 1.0
    assert report.fits["converged_fraction"] == 0.0
    assert math.isinf(report.fits["final_mean_distance"])
    assert any("diverged" in note for note in report.notes)
    assert not report.passed
