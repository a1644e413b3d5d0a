import math

import numpy as np
import pytest

from src.integrator import IntegratorConfig
from src.model import MeanFieldModel, Quadratic
from src.rng import INITIAL_STATES, BatchStreams, ParticleStreams
from src.sampler import (ExtensiveSum, IntensiveFunc, IntensiveMean, ergodic_average, hmc_step, parse_observable,
                         run_chain, streaming_ergodic_average)

CFG = IntegratorConfig(1.0, 20)


def test_chain_keeps_initial_state(interacting):
    x0 = np.ones((5, 2))
    trace = run_chain(interacting, x0, 0, CFG, ParticleStreams.for_model(1, 0, 5))
    assert len(trace) == 1
    np.testing.assert_array_equal(trace.final, x0)


def test_chain_length_fencepost(interacting):
    trace = run_chain(interacting, np.zeros((5, 2)), 5, CFG, ParticleStreams.for_model(1, 0, 5))
    assert len(trace) == 6
    assert list(trace.steps) == [0, 1, 2, 3, 4, 5]


def test_thinning_keeps_last_state(interacting):
    full = run_chain(interacting, np.zeros((5, 2)), 5, CFG, ParticleStreams.for_model(1, 0, 5))
    thinned = run_chain(interacting, np.zeros((5, 2)), 5, CFG, ParticleStreams.for_model(1, 0, 5), thin=2)
    assert list(thinned.steps) == [0, 2, 4, 5]
    np.testing.assert_array_equal(thinned.states, full.states[[0, 2, 4, 5]])


def test_chain_argument_checks(interacting):
    with pytest.raises(ValueError):
        run_chain(interacting, np.zeros((5, 2)), -1, CFG, ParticleStreams.for_model(1, 0, 5))
    with pytest.raises(ValueError):
        run_chain(interacting, np.zeros((5, 2)), 3, CFG, ParticleStreams.for_model(1, 0, 5), thin=0)


def test_trace_long_form(interacting):
    trace = run_chain(interacting, np.zeros((5, 2)), 2, CFG, ParticleStreams.for_model(1, 0, 5))
    frame = trace.to_frame()
    assert list(frame.columns) == ["step", "particle", "coord", "value"]
    assert len(frame) == 3 * 5 * 2
    last = frame[frame.step == 2].value.values.reshape(5, 2)
    np.testing.assert_array_equal(last, trace.final)


def test_constant_observable_averages_to_one(interacting):
    trace = run_chain(interacting, np.zeros((5, 2)), 10, CFG, ParticleStreams.for_model(2, 0, 5))
    assert ergodic_average(trace, IntensiveFunc("const"), 3, 7) == 1.0


def test_single_term_average(interacting):
    trace = run_chain(interacting, np.zeros((5, 2)), 10, CFG, ParticleStreams.for_model(2, 0, 5))
    f = IntensiveMean(1)
    assert ergodic_average(trace, f, 4, 1) == pytest.approx(float(f(trace.states[4])))


def test_ergodic_average_window_checks(interacting):
    trace = run_chain(interacting, np.zeros((5, 2)), 10, CFG, ParticleStreams.for_model(2, 0, 5))
    with pytest.raises(ValueError):
        ergodic_average(trace, IntensiveMean(0), 5, 7)
    with pytest.raises(ValueError):
        ergodic_average(trace, IntensiveMean(0), 0, 0)
    thinned = run_chain(interacting, np.zeros((5, 2)), 10, CFG, ParticleStreams.for_model(2, 0, 5), thin=2)
    with pytest.raises(ValueError):
        ergodic_average(thinned, IntensiveMean(0), 0, 2)


def test_streaming_average_matches_stored_chain(interacting):
    f = IntensiveFunc("norm_sq")
    x0 = np.full((5, 2), 0.5)
    trace = run_chain(interacting, x0, 12, CFG, ParticleStreams.for_model(4, 0, 5))
    stored = ergodic_average(trace, f, 3, 10)
    streamed, _ = streaming_ergodic_average(interacting, x0, CFG, ParticleStreams.for_model(4, 0, 5), f, 3, 10)
    assert float(streamed) == pytest.approx(stored, rel=1e-12)


def test_one_step_from_origin_is_symmetric():
    model = MeanFieldModel(Quadratic(1.0), n=1, d=1)
    streams = BatchStreams(8, batch=10000)
    x = hmc_step(model, np.zeros((10000, 1, 1)), CFG, streams).ravel()
    assert abs(x.mean()) <= 4.0 * x.std() / math.sqrt(x.size)


def test_stationary_variance_of_gaussian_target():
    # the chain leaves N(0, 1/(1 - h^2/4)) invariant for V = |x|^2/2
    model = MeanFieldModel(Quadratic(1.0), n=1, d=1)
    cfg = IntegratorConfig(1.0, 20)
    x0 = BatchStreams(3, batch=20000, purpose=INITIAL_STATES).standard_normal(1, 1)
    streams = BatchStreams(3, batch=20000)
    x = x0
    for _ in range(20):
        x = hmc_step(model, x, cfg, streams)
    var = float(np.var(x))
    assert var == pytest.approx(1.0, rel=0.05)


def test_observables():
    x = np.array([[1.0, -2.0], [3.0, 4.0]])
    assert IntensiveMean(0)(x) == pytest.approx(2.0)
    assert ExtensiveSum(1)(x) == pytest.approx(2.0)
    assert IntensiveFunc("square0")(x) == pytest.approx(5.0)
    assert IntensiveFunc("norm_sq")(x) == pytest.approx(15.0)
    assert IntensiveFunc("abs0")(x) == pytest.approx(2.0)
    batch = np.stack([x, -x])
    np.testing.assert_allclose(IntensiveMean(0)(batch), [2.0, -2.0])


def test_parse_observable():
    assert repr(parse_observable("mean:1")) == "mean:1"
    assert repr(parse_observable("func:square0")) == "func:square0"
    assert repr(parse_observable("sum:0")) == "sum:0"
    with pytest.raises(ValueError):
        parse_observable("median:0")
    with pytest.raises(ValueError):
        parse_observable("func:cube")
    with pytest.raises(ValueError):
        parse_observable("mean:2").check(2)


@pytest.mark.slow
def test_long_chain_variance_and_mean():
    model = MeanFieldModel(Quadratic(1.0), n=1, d=1)
    cfg = IntegratorConfig(1.0, 20)
    trace = run_chain(model, np.zeros((1, 1)), 100000, cfg, ParticleStreams.for_model(42, 0, 1))
    values = trace.states[1000:, 0, 0]
    assert np.var(values) == pytest.approx(1.0, rel=0.05)
    # integrated autocorrelation time is below 4 at T = 1
    mean = ergodic_average(trace, IntensiveMean(0), 1000, 99000)
    assert abs(mean) <= 4.0 * 2.0 / math.sqrt(99000)


def test_uncoupled_chain_factorizes():
    pair = MeanFieldModel(Quadratic(1.0), n=2, d=2)
    single = MeanFieldModel(Quadratic(1.0), n=1, d=2)
    x0 = np.array([[1.0, -0.5], [0.2, 2.0]])
    chain = run_chain(pair, x0, 12, CFG, ParticleStreams(7, 0, [0, 1]))
    for i in range(2):
        alone = run_chain(single, x0[i:i + 1], 12, CFG, ParticleStreams(7, 0, [i]))
        np.testing.assert_array_equal(chain.states[:, i], alone.states[:, 0])


def test_relabelled_particles_permute_the_chain(interacting):
    perm = [3, 0, 4, 1, 2]
    x0 = np.arange(10.0).reshape(5, 2) / 4.0
    chain = run_chain(interacting, x0, 10, CFG, ParticleStreams(4, 0, range(5)))
    relabelled = run_chain(interacting, x0[perm], 10, CFG, ParticleStreams(4, 0, perm))
    np.testing.assert_allclose(relabelled.states, chain.states[:, perm], rtol=1e-10, atol=1e-12)
