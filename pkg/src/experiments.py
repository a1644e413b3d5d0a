""" Scripted studies: coupled contraction runs, the contraction-theorem check,
strong-accuracy and bias order studies, and the coupling marginal check.

Every study is a pure function of (ExperimentConfig, seed). Replicas own their
noise streams, run in groups through joblib, are reassembled in replica order
and reduced with compensated sums, so the thread count never changes a report.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src import py_utils
from src.coupling import (REFLECT, SHIFT, SYNC, CoupledPhase, CouplingParams, couple_velocities, coupled_hmc_step,
                          run_coupled_chain)
from src.integrator import IntegratorConfig, PhasePoint, harmonic_exact_flow, verlet_flow
from src.model import GaussianMixture, MeanFieldModel, Quadratic, QuadraticInteraction
from src.rng import INITIAL_STATES, STUDY, BatchStreams, ParticleStreams, draw_checksum
from src.sampler import (ExtensiveSum, IntensiveFunc, IntensiveMean, ergodic_average, parse_observable, run_chain,
                         streaming_ergodic_average)
from src.stats import (combined_z, fit_log_decay, fit_loglog_slope, mean_and_stderr, normal_moment_zscores)
from src.theory import RegularityParams, check_conditions, derive_constants, ell1_distance, rho_distance, \
    warn_if_long_duration

logger = logging.getLogger(__name__)

CONVERGED_FRACTION = 0.9
RATE_AGREEMENT_FACTOR = 2.0
ORDER_RANGE = (1.7, 2.3)
BIAS_ORDER_RANGE = (1.5, 2.5)
HALVING_RATIO = 4.0
HALVING_TOLERANCE = 0.10
REFERENCE_STABILITY = 0.05
N_SCALING_SLACK = 1.25
MC_ERROR_BUDGET = 0.2
Z_LIMIT = 4.0
BIAS_Z_LIMIT = 3.0
THEOREM_CHUNK = 20000


@dataclass
class ExperimentConfig:
    model: MeanFieldModel
    integrator: IntegratorConfig
    coupling: CouplingParams
    seed: int = 42
    replicas: int = 100
    steps: int = 1000
    thin: int = 1
    burn_in: int = 0
    window: Optional[int] = None
    observable: str = "mean:0"
    initializer: str = "auto"
    init_scale: float = 5.0
    step_ladder: Optional[Tuple[int, ...]] = None
    reference_factor: int = 64
    n_list: Optional[Tuple[int, ...]] = None
    replica_list: Optional[Tuple[int, ...]] = None
    epsilon_list: Optional[Tuple[float, ...]] = None
    sign_list: Optional[Tuple[int, ...]] = None
    record_positions: bool = False
    x_separation: float = 0.1
    draws: int = 100000
    inside_fraction: float = 0.5
    regularity: Optional[RegularityParams] = None
    threads: int = 1
    progress: bool = False

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replica count must be >= 1, got %s" % self.replicas)
        if self.threads < 1:
            raise ValueError("threads must be >= 1, got %s" % self.threads)
        if self.initializer not in ("auto", "box", "gaussian"):
            raise ValueError("initializer must be auto, box or gaussian, got %s" % self.initializer)
        if self.step_ladder is not None:
            ladder = tuple(int(s) for s in self.step_ladder)
            if len(ladder) < 2 or any(b <= a for a, b in zip(ladder, ladder[1:])):
                raise ValueError("step ladder T/h must hold >= 2 strictly increasing entries, got %s" % (ladder,))
            self.step_ladder = ladder
        if self.replica_list is not None and len(self.replica_list) != len(self.n_list or (1, 10, 100)):
            raise ValueError("replica_list needs one entry per n_list value, got %s" % (self.replica_list,))

    @property
    def window_length(self):
        return self.window if self.window is not None else self.steps

    def echo(self, model=None):
        model = model or self.model
        return {
            "model": model.to_dict(),
            "integrator": asdict(self.integrator),
            "coupling": asdict(self.coupling),
            "replicas": self.replicas,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    value: float
    threshold: str

    def describe(self):
        return "%s: %s (value %.6g; threshold %s)" % (self.name, "pass" if self.passed else "FAIL", self.value,
                                                     self.threshold)


@dataclass
class ExperimentReport:
    name: str
    seed: int
    config: dict = field(default_factory=dict)
    series: Dict[str, pd.DataFrame] = field(default_factory=dict)
    fits: Dict[str, float] = field(default_factory=dict)
    verdicts: List[Verdict] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    refused: bool = False

    @property
    def passed(self):
        return not self.refused and all(v.passed for v in self.verdicts)

    def add_verdict(self, name, passed, value, threshold):
        verdict = Verdict(name, bool(passed), float(value), threshold)
        self.verdicts.append(verdict)
        return verdict

    def note(self, message):
        logger.info(message)
        self.notes.append(message)

    def summary_lines(self):
        lines = ["***** %s *****" % self.name, "  seed = %d" % self.seed]
        for key in sorted(self.fits):
            lines.append("  %s = %.6g" % (key, self.fits[key]))
        for message in self.notes:
            lines.append("  note: %s" % message)
        for verdict in self.verdicts:
            lines.append("  " + verdict.describe())
        if self.refused:
            lines.append("  verdict: REFUSED")
        elif self.verdicts:
            lines.append("  overall: %s" % ("pass" if self.passed else "FAIL"))
        return lines


def _map_replicas(fn, replica_ids, threads, *args):
    """fn(group, *args) over contiguous replica groups; results flattened in replica order."""
    groups = [g for g in py_utils.split(list(replica_ids), threads) if g]
    if threads == 1 or len(groups) <= 1:
        results = [fn(group, *args) for group in groups]
    else:
        results = Parallel(n_jobs=threads)(delayed(fn)(group, *args) for group in groups)
    return py_utils.flatten_list(results)


def _check_duration(cfg, report):
    if cfg.regularity is not None and not cfg.integrator.exact:
        if not warn_if_long_duration(cfg.regularity, cfg.integrator):
            report.notes.append("duration outside (L + 4 eps L_tilde)(T^2 + T h) <= 1")


def initial_pair(model, cfg, replica):
    """
    Overdispersed starting states (x0, y0) of one replica: uniform over the
    bounding box of the mixture means, or N(0, init_scale^2 I).
    """
    streams = BatchStreams(cfg.seed, stream=replica, batch=2, purpose=INITIAL_STATES)
    kind = cfg.initializer
    if kind == "auto":
        kind = "box" if isinstance(model.confinement, GaussianMixture) else "gaussian"
    if kind == "box":
        if isinstance(model.confinement, GaussianMixture):
            low = model.confinement.means.min(axis=0)
            high = model.confinement.means.max(axis=0)
        else:
            low, high = -cfg.init_scale, cfg.init_scale
        xy = low + (high - low) * streams.uniform_box((2, model.n, model.d), 0.0, 1.0)
    else:
        xy = cfg.init_scale * streams.standard_normal(model.n, model.d)
    return xy[0], xy[1]


def _coupled_group(group, model, cfg, record_first):
    traces = []
    with np.errstate(over="ignore", invalid="ignore"):
        for replica in group:
            x0, y0 = initial_pair(model, cfg, replica)
            streams = ParticleStreams.for_model(cfg.seed, replica, model.n)
            traces.append(run_coupled_chain(model, x0, y0, cfg.integrator, cfg.coupling, streams,
                                            record_positions=record_first and replica == 0))
    return traces


def distance_series(traces):
    """Replica-averaged mean distance per step; replicas that finished contribute 0."""
    replicas = len(traces)
    length = max(len(t) for t in traces)
    table = np.zeros((replicas, length))
    active = np.zeros(length, dtype=int)
    for r, trace in enumerate(traces):
        table[r, :len(trace)] = trace.mean_distance
        active[:len(trace)] += 1
    mean = np.array([math.fsum(column) / replicas for column in table.T])
    if replicas > 1:
        stderr = np.std(table, axis=0, ddof=1) / math.sqrt(replicas)
    else:
        stderr = np.full(length, math.nan)
    return pd.DataFrame({"step": np.arange(length), "mean_distance": mean, "stderr": stderr, "n_active": active},
                        columns=["step", "mean_distance", "stderr", "n_active"])


def fit_decay_window(frame, replicas):
    """
    Log-linear decay fit from the first step below half the initial distance
    up to the last step at which every replica is still running.
    """
    values = frame.mean_distance.values
    full = np.nonzero(frame.n_active.values == replicas)[0]
    end = int(full[-1]) if full.size else 0
    below = np.nonzero(values[:end + 1] < 0.5 * values[0])[0]
    start = int(below[0]) if below.size else 0
    if end - start + 1 < 3:
        start = 0
    window = values[start:end + 1]
    if window.size < 2 or not np.all(np.isfinite(window)):
        return None, (start, end)
    try:
        return fit_log_decay(frame.step.values[start:end + 1], window), (start, end)
    except ValueError:
        return None, (start, end)


def contraction_experiment(cfg, model=None):
    model = model or cfg.model
    params = cfg.coupling
    logger.info("***** Running contraction experiment *****")
    logger.info("  Num particles = %d, dimension = %d", model.n, model.d)
    logger.info("  Num replicas = %d", cfg.replicas)
    logger.info("  Interaction strength = %g", model.epsilon)
    logger.info("  gamma = %g, r_tilde = %g, tol = %g", params.gamma, params.r_tilde, params.tol)
    report = ExperimentReport("contraction experiment", cfg.seed, cfg.echo(model))
    _check_duration(cfg, report)
    if math.isinf(params.r_tilde) and not isinstance(model.confinement, Quadratic):
        logger.warning("r_tilde = inf on a %s confinement: threshold not derived from K and R", model.confinement.name)
        report.notes.append("r_tilde = inf (shift/reflection always active); not derived from K and R")

    traces = _map_replicas(_coupled_group, range(cfg.replicas), cfg.threads, model, cfg, cfg.record_positions)
    # diverged replicas leave the averages unless every replica diverged
    finite = [t for t in traces if not t.diverged] or traces
    report.fits["diverged_fraction"] = sum(t.diverged for t in traces) / float(len(traces))
    if report.fits["diverged_fraction"] > 0:
        report.note("%d of %d replicas diverged (non-finite positions)" % (sum(t.diverged for t in traces),
                                                                          len(traces)))
    frame = distance_series(finite)
    report.series["contraction"] = frame
    report.series["coupling_trace"] = traces[0].to_frame()
    if cfg.record_positions:
        report.series["positions"] = traces[0].positions_frame()

    fraction = sum(t.converged for t in traces) / float(len(traces))
    report.fits["converged_fraction"] = fraction
    if finite[0].diverged:
        report.fits["final_mean_distance"] = math.inf
    else:
        report.fits["final_mean_distance"] = math.fsum(t.mean_distance[-1] for t in finite) / len(finite)
    report.fits["median_steps"] = float(np.median([t.n_steps for t in traces]))
    report.add_verdict("converged_fraction", fraction >= CONVERGED_FRACTION, fraction,
                       ">= %.2f of replicas below tol=%g within %d steps" % (CONVERGED_FRACTION, params.tol,
                                                                              params.max_steps))

    fit, (start, end) = fit_decay_window(frame, len(finite))
    report.fits["fit_start"] = start
    report.fits["fit_end"] = end
    if fit is None:
        report.note("decay window [%d, %d] too short or not finite: no rate fitted" % (start, end))
        report.add_verdict("decay_rate_positive", False, math.nan, "rate - 2 SE > 0")
    else:
        report.fits["rate"] = fit.slope
        report.fits["rate_stderr"] = fit.stderr
        lower = fit.slope - 2.0 * fit.stderr if np.isfinite(fit.stderr) else fit.slope
        report.add_verdict("decay_rate_positive", lower > 0, lower, "rate - 2 SE > 0")
    return report


def coupled_run(cfg):
    """One coupled pair (replica 0) from the configured initializer."""
    model = cfg.model
    logger.info("***** Running coupled chain *****")
    logger.info("  Num particles = %d, max steps = %d", model.n, cfg.coupling.max_steps)
    report = ExperimentReport("coupled chain", cfg.seed, cfg.echo())
    _check_duration(cfg, report)
    x0, y0 = initial_pair(model, cfg, 0)
    trace = run_coupled_chain(model, x0, y0, cfg.integrator, cfg.coupling, ParticleStreams.for_model(cfg.seed, 0, model.n),
                              record_positions=cfg.record_positions, progress=cfg.progress)
    report.series["coupling_trace"] = trace.to_frame()
    if cfg.record_positions:
        report.series["positions"] = trace.positions_frame()
    report.fits["converged"] = float(trace.converged)
    report.fits["steps"] = trace.n_steps
    report.fits["final_mean_distance"] = trace.mean_distance[-1]
    return report


def sample_run(cfg):
    """A single HMC chain (replica 0), thinned; ergodic average of the observable when unthinned."""
    model = cfg.model
    f = parse_observable(cfg.observable)
    f.check(model.d)
    logger.info("***** Running HMC chain *****")
    logger.info("  Num steps = %d, thin = %d", cfg.steps, cfg.thin)
    report = ExperimentReport("hmc chain", cfg.seed, cfg.echo())
    _check_duration(cfg, report)
    x0, _ = initial_pair(model, cfg, 0)
    streams = ParticleStreams.for_model(cfg.seed, 0, model.n)
    trace = run_chain(model, x0, cfg.steps, cfg.integrator, streams, thin=cfg.thin, progress=cfg.progress)
    report.series["chain_trace"] = trace.to_frame()
    report.fits["retained_states"] = len(trace)
    if cfg.thin == 1 and cfg.burn_in + cfg.window_length <= len(trace):
        report.fits["ergodic_average"] = ergodic_average(trace, f, cfg.burn_in, cfg.window_length)
    return report


def dimension_sweep(cfg):
    """Fitted decay rates for several particle counts; dimension-free rates agree within a factor 2."""
    n_list = cfg.n_list or (1, 10, 100)
    replica_list = cfg.replica_list or tuple(cfg.replicas for _ in n_list)
    logger.info("***** Running dimension sweep *****")
    logger.info("  n values = %s", list(n_list))
    report = ExperimentReport("dimension sweep", cfg.seed, cfg.echo())
    rows = []
    for n, reps in zip(n_list, replica_list):
        sub = contraction_experiment(replace(cfg, replicas=reps, record_positions=False), cfg.model.with_size(n))
        rows.append({"n": n, "rate": sub.fits.get("rate", math.nan), "rate_stderr": sub.fits.get("rate_stderr", math.nan),
                     "replicas": reps})
    frame = pd.DataFrame(rows, columns=["n", "rate", "rate_stderr", "replicas"])
    report.series["dimension_sweep"] = frame
    rates = frame.rate.values
    if np.all(np.isfinite(rates)) and np.all(rates > 0):
        spread = float(rates.max() / rates.min())
    else:
        spread = math.inf
    report.fits["rate_spread"] = spread
    report.add_verdict("rate_agreement", spread <= RATE_AGREEMENT_FACTOR, spread,
                       "max rate / min rate <= %g" % RATE_AGREEMENT_FACTOR)
    return report


def interaction_sweep(cfg):
    """Convergence of coupled runs over interaction strengths and signs."""
    eps_list = cfg.epsilon_list or (0.01, 1.0)
    sign_list = cfg.sign_list or (1, -1)
    base = cfg.model
    logger.info("***** Running interaction sweep *****")
    logger.info("  epsilon values = %s, signs = %s", list(eps_list), list(sign_list))
    report = ExperimentReport("interaction sweep", cfg.seed, cfg.echo())
    rows = []
    for sign in sign_list:
        for eps in eps_list:
            model = MeanFieldModel(base.confinement, QuadraticInteraction(sign), eps, base.n, base.d, base.pair_mode)
            sub = contraction_experiment(replace(cfg, record_positions=False), model)
            rows.append({"epsilon": eps, "sign": sign, "converged_fraction": sub.fits["converged_fraction"],
                         "final_mean_distance": sub.fits["final_mean_distance"]})
    frame = pd.DataFrame(rows, columns=["epsilon", "sign", "converged_fraction", "final_mean_distance"])
    report.series["interaction_sweep"] = frame

    attractive = frame[frame.sign == 1]
    if len(attractive):
        row = attractive.loc[attractive.epsilon.idxmin()]
        report.add_verdict("weak_attraction_converges", row.converged_fraction >= CONVERGED_FRACTION,
                           row.converged_fraction, "converged fraction >= %.2f at eps=%g" % (CONVERGED_FRACTION,
                                                                                             row.epsilon))
    for _, row in frame[(frame.sign == -1) & (frame.epsilon >= 1.0)].iterrows():
        report.add_verdict("strong_repulsion_eps_%g" % row.epsilon, row.converged_fraction < CONVERGED_FRACTION,
                           row.converged_fraction, "non-convergence reported (fraction < %.2f)" % CONVERGED_FRACTION)
    return report


def separated_pair(model, cfg):
    """Fixed x ~ N(0, I) and y = x shifted by x_separation along the first coordinate of every particle."""
    x = BatchStreams(cfg.seed, stream=0, batch=1, purpose=INITIAL_STATES).standard_normal(model.n, model.d)[0]
    y = x.copy()
    y[:, 0] += cfg.x_separation
    return x, y


def _rho_group(chunks, model, integrator, params, seed, x, y, R_1, sizes):
    values = []
    for chunk in chunks:
        batch = sizes[chunk]
        streams = BatchStreams(seed, stream=chunk, batch=batch, purpose=STUDY)
        phase = CoupledPhase(np.broadcast_to(x, (batch,) + x.shape).copy(), np.broadcast_to(y, (batch,) + y.shape).copy())
        phase = coupled_hmc_step(model, phase, integrator, params, streams)
        values.append(rho_distance(phase.x, phase.y, integrator.duration, R_1))
    return values


def contraction_theorem_check(cfg, x=None, y=None):
    """
    Monte Carlo estimate of E[rho(X, Y)] after one coupled step from fixed
    (x, y), against (1 - c) rho(x, y). Refuses when a parameter condition fails.
    """
    model = cfg.model
    logger.info("***** Running contraction theorem check *****")
    logger.info("  Num draws = %d", cfg.draws)
    report = ExperimentReport("contraction theorem check", cfg.seed, cfg.echo())
    params = cfg.regularity
    if params is None:
        report.refused = True
        report.note("refused: regularity constants K and L are required")
        return report
    T, h = cfg.integrator.duration, cfg.integrator.step_size
    conditions = check_conditions(params, T, h)
    for entry in conditions.entries:
        report.notes.append(entry.describe())
    if not conditions.passed:
        report.refused = True
        report.note("refused: failing conditions %s" % ", ".join(e.name for e in conditions.failing()))
        return report

    consts = derive_constants(params, T)
    if cfg.coupling.r_tilde != consts.R_tilde or not math.isclose(cfg.coupling.gamma, consts.gamma):
        report.note("coupling (gamma = %g, r_tilde = %g) differs from the derived gamma = %g, R_tilde = %g"
                    % (cfg.coupling.gamma, cfg.coupling.r_tilde, consts.gamma, consts.R_tilde))
    if x is None or y is None:
        x, y = separated_pair(model, cfg)
    x, y = model.check_shape(x), model.check_shape(y)
    rho0 = rho_distance(x, y, T, consts.R_1)
    sizes = [THEOREM_CHUNK] * (cfg.draws // THEOREM_CHUNK)
    if cfg.draws % THEOREM_CHUNK:
        sizes.append(cfg.draws % THEOREM_CHUNK)
    values = np.concatenate(_map_replicas(_rho_group, range(len(sizes)), cfg.threads, model, cfg.integrator,
                                          cfg.coupling, cfg.seed, x, y, consts.R_1, sizes))
    estimate, stderr = mean_and_stderr(values)
    bound = (1.0 - consts.c) * rho0
    report.fits.update({"rho0": rho0, "estimate": estimate, "stderr": stderr, "c": consts.c, "bound": bound})
    if rho0 > 0:
        report.fits["ratio"] = estimate / rho0
    report.series["contraction_check"] = pd.DataFrame([{"rho0": rho0, "estimate": estimate, "stderr": stderr,
                                                        "bound": bound, "c": consts.c}],
                                                      columns=["rho0", "estimate", "stderr", "bound", "c"])
    upper = estimate + Z_LIMIT * (stderr if np.isfinite(stderr) else 0.0)
    report.add_verdict("rho_contraction", upper <= bound, upper, "(1 - c) rho(x, y) = %.6g" % bound)
    return report


def _order_draws(model, cfg):
    """Initial states and velocities of every replica; redrawn identically for each step size."""
    x = BatchStreams(cfg.seed, stream=0, batch=cfg.replicas, purpose=INITIAL_STATES).standard_normal(model.n, model.d)
    xi = BatchStreams(cfg.seed, stream=0, batch=cfg.replicas, purpose=STUDY).standard_normal(model.n, model.d)
    return x, xi


def _endpoint_error(model, x, xi, integrator, reference):
    return mean_and_stderr(ell1_distance(verlet_flow(model, PhasePoint(x, xi), integrator).q, reference))


def order_study(cfg):
    """Strong error of the Verlet endpoint q_T against a fine-step reference, across a step-size ladder."""
    ladder = cfg.step_ladder or (8, 16, 32, 64, 128)
    model = cfg.model
    T = cfg.integrator.duration
    ref_steps = cfg.reference_factor * ladder[-1]
    logger.info("***** Running order study *****")
    logger.info("  Step ladder T/h = %s, reference T/h = %d", list(ladder), ref_steps)
    logger.info("  Num replicas = %d", cfg.replicas)
    report = ExperimentReport("order study", cfg.seed, cfg.echo())

    x, xi0 = _order_draws(model, cfg)
    reference = verlet_flow(model, PhasePoint(x, xi0), IntegratorConfig(T, ref_steps)).q
    rows, checksums = [], []
    for steps in ladder:
        x, xi = _order_draws(model, cfg)
        checksums.append(draw_checksum(xi))
        mean, stderr = _endpoint_error(model, x, xi, IntegratorConfig(T, steps), reference)
        rows.append({"h": T / steps, "mean_error": mean, "stderr": stderr})
    frame = pd.DataFrame(rows, columns=["h", "mean_error", "stderr"])
    report.series["order_study"] = frame
    same = len(set(checksums)) == 1 and checksums[0] == draw_checksum(xi0)
    report.add_verdict("common_random_numbers", same, float(len(set(checksums))), "one draw checksum across all h")

    finer = verlet_flow(model, PhasePoint(x, xi0), IntegratorConfig(T, 2 * ref_steps)).q
    fine_err, _ = _endpoint_error(model, x, xi0, IntegratorConfig(T, ladder[-1]), finer)
    change = abs(fine_err - rows[-1]["mean_error"]) / rows[-1]["mean_error"]
    report.fits["reference_change"] = change
    report.add_verdict("reference_stable", change <= REFERENCE_STABILITY, change,
                       "relative change <= %g when h_ref is halved" % REFERENCE_STABILITY)

    fit = fit_loglog_slope(frame.h.values, frame.mean_error.values)
    report.fits["order"] = fit.slope
    report.fits["order_stderr"] = fit.stderr
    report.add_verdict("strong_order", fit.overlaps(*ORDER_RANGE), fit.slope,
                       "slope +- 2 SE meets [%g, %g]" % ORDER_RANGE)

    _harmonic_halving(cfg, ladder, x, xi0, report)
    _n_scaling(cfg, ladder[0], report)
    return report


def _harmonic_halving(cfg, ladder, x, xi, report):
    """Halving h quarters the endpoint error of the harmonic oscillator, measured against its exact flow."""
    model = cfg.model
    T = cfg.integrator.duration
    k = model.confinement.k if isinstance(model.confinement, Quadratic) else 1.0
    harmonic = MeanFieldModel(Quadratic(k), None, 0.0, model.n, model.d)
    exact = harmonic_exact_flow(k, PhasePoint(x, xi), T).q
    errors = [_endpoint_error(harmonic, x, xi, IntegratorConfig(T, steps), exact)[0] for steps in ladder]
    ratios = [math.nan] + [a / b for a, b in zip(errors, errors[1:])]
    report.series["harmonic_halving"] = pd.DataFrame({"h": [T / s for s in ladder], "mean_error": errors,
                                                      "ratio": ratios}, columns=["h", "mean_error", "ratio"])
    worst = max(abs(r - HALVING_RATIO) / HALVING_RATIO for r in ratios[1:])
    report.fits["halving_worst_deviation"] = worst
    report.add_verdict("harmonic_halving", worst <= HALVING_TOLERANCE, worst,
                       "error ratio %g +- %d%%" % (HALVING_RATIO, int(100 * HALVING_TOLERANCE)))


def _n_scaling(cfg, steps, report):
    """Endpoint error at fixed h grows at most linearly in n."""
    n_list = cfg.n_list or (2, 20)
    T = cfg.integrator.duration
    rows = []
    for n in n_list:
        model = cfg.model.with_size(n)
        x, xi = _order_draws(model, cfg)
        reference = verlet_flow(model, PhasePoint(x, xi), IntegratorConfig(T, cfg.reference_factor * steps)).q
        mean, stderr = _endpoint_error(model, x, xi, IntegratorConfig(T, steps), reference)
        rows.append({"n": n, "mean_error": mean, "stderr": stderr})
    frame = pd.DataFrame(rows, columns=["n", "mean_error", "stderr"])
    report.series["order_n_scaling"] = frame
    if len(frame) < 2:
        return
    growth = frame.mean_error.values[-1] / frame.mean_error.values[0]
    allowed = N_SCALING_SLACK * frame.n.values[-1] / frame.n.values[0]
    report.fits["n_error_growth"] = growth
    report.add_verdict("linear_in_n", growth <= allowed, growth, "error growth <= %g" % allowed)


def product_bias(cfg, steps, f, k=1.0, n=1, d=1, stream=0):
    """
    Bias E[A_{m,b} f] - mu(f) of the Verlet HMC chain for V = k|x|^2/2 without
    interaction. An exact-flow chain driven by the same velocities and
    started from the same stationary draw serves as control variate, so the
    returned standard error shrinks with the bias itself.
    """
    harmonic = MeanFieldModel(Quadratic(k), None, 0.0, n, d)
    integrator = IntegratorConfig(cfg.integrator.duration, steps)
    x = BatchStreams(cfg.seed, stream=stream, batch=cfg.replicas, purpose=INITIAL_STATES).standard_normal(n, d)
    x = x / math.sqrt(k)
    y = x.copy()
    streams = BatchStreams(cfg.seed, stream=stream, batch=cfg.replicas, purpose=STUDY)
    window = cfg.window_length
    acc = np.zeros(cfg.replicas)
    for step in range(cfg.burn_in + window):
        if step >= cfg.burn_in:
            acc += f(x) - f(y)
        xi = streams.standard_normal(n, d)
        x = verlet_flow(harmonic, PhasePoint(x, xi), integrator).q
        y = harmonic_exact_flow(k, PhasePoint(y, xi), integrator.duration).q
    return mean_and_stderr(acc / window)


def _symmetric_target(f):
    """mu(f) for observables fixed by the symmetry x -> -x of quadratic models; None otherwise."""
    if isinstance(f, (IntensiveMean, ExtensiveSum)):
        return 0.0
    if isinstance(f, IntensiveFunc) and f.arg == "const":
        return 1.0
    return None


def bias_study(cfg):
    ladder = cfg.step_ladder or (5, 10, 20, 40)
    model = cfg.model
    T = cfg.integrator.duration
    k = model.confinement.k if isinstance(model.confinement, Quadratic) else 1.0
    logger.info("***** Running bias study *****")
    logger.info("  Step ladder T/h = %s", list(ladder))
    logger.info("  Num replicas = %d, burn-in = %d, window = %d", cfg.replicas, cfg.burn_in, cfg.window_length)
    report = ExperimentReport("bias study", cfg.seed, cfg.echo())

    square = IntensiveFunc("square0")
    rows = []
    for steps in ladder:
        mean, stderr = product_bias(cfg, steps, square, k=k, n=model.n, d=model.d)
        rows.append({"h": T / steps, "abs_bias": abs(mean), "stderr": stderr, "n": model.n})
    frame = pd.DataFrame(rows, columns=["h", "abs_bias", "stderr", "n"])
    report.series["bias_study"] = frame
    biases = frame.abs_bias.values
    decreasing = bool(np.all(np.diff(biases) < 0))
    report.add_verdict("bias_decreases_with_h", decreasing, float(biases[-1]), "strictly decreasing as h decreases")
    if np.all(biases > 0):
        fit = fit_loglog_slope(frame.h.values, biases)
        report.fits["bias_order"] = fit.slope
        report.fits["bias_order_stderr"] = fit.stderr
        report.add_verdict("bias_order", fit.overlaps(*BIAS_ORDER_RANGE), fit.slope,
                           "slope +- 2 SE meets [%g, %g]" % BIAS_ORDER_RANGE)
        budget = frame.stderr.values[-1] / biases[-1]
        report.add_verdict("mc_error_budget", budget <= MC_ERROR_BUDGET, budget,
                           "stderr / bias <= %g at the finest h" % MC_ERROR_BUDGET)
    else:
        report.add_verdict("bias_order", False, math.nan, "positive biases on every level")

    _intensive_bias(cfg, report)
    return report


def _intensive_bias(cfg, report):
    """Bias of an intensive observable with known mu(f), for several n; agreement within 3 combined sigma."""
    f = parse_observable(cfg.observable)
    f.check(cfg.model.d)
    target = _symmetric_target(f)
    if target is None or not isinstance(cfg.model.confinement, Quadratic):
        report.note("intensive-bias check skipped: mu(f) not known for %r on this model" % f)
        return
    k = cfg.model.confinement.k
    rows = []
    for n in cfg.n_list or (2, 10, 50):
        model = cfg.model.with_size(n)
        x0 = BatchStreams(cfg.seed, stream=1, batch=cfg.replicas, purpose=INITIAL_STATES).standard_normal(n, model.d)
        streams = BatchStreams(cfg.seed, stream=1, batch=cfg.replicas, purpose=STUDY)
        averages, _ = streaming_ergodic_average(model, x0 / math.sqrt(k), cfg.integrator, streams, f, cfg.burn_in,
                                                cfg.window_length)
        mean, stderr = mean_and_stderr(averages - target)
        rows.append({"h": cfg.integrator.step_size, "abs_bias": abs(mean), "stderr": stderr, "n": n, "signed": mean})
    frame = pd.DataFrame(rows, columns=["h", "abs_bias", "stderr", "n", "signed"])
    report.series["bias_intensive"] = frame.drop(columns=["signed"])
    worst = 0.0
    for i in range(len(frame)):
        for j in range(i + 1, len(frame)):
            worst = max(worst, combined_z(frame.signed[i], frame.stderr[i], frame.signed[j], frame.stderr[j]))
    report.fits["intensive_worst_z"] = worst
    report.add_verdict("intensive_bias_n_independent", worst <= BIAS_Z_LIMIT, worst,
                       "pairwise |difference| <= %g combined sigma" % BIAS_Z_LIMIT)


def marginal_pair(model, cfg, r_tilde):
    """
    Fixed (x, y) with a fraction of particles inside the coupling radius
    (|z| = r_tilde/2) and the rest outside (|z| = 2 r_tilde).
    """
    x = BatchStreams(cfg.seed, stream=0, batch=1, purpose=INITIAL_STATES).standard_normal(model.n, model.d)[0]
    direction = BatchStreams(cfg.seed, stream=1, batch=1, purpose=INITIAL_STATES).standard_normal(model.n, model.d)[0]
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    inside = int(math.floor(cfg.inside_fraction * model.n + 0.5))
    radius = np.where(np.arange(model.n) < inside, 0.5 * r_tilde, 2.0 * r_tilde)
    return x, x - radius[:, None] * direction


def marginal_check(cfg, velocity_coupler=couple_velocities):
    """Per-coordinate moments of coupled velocities eta against N(0, 1)."""
    model = cfg.model
    logger.info("***** Running marginal check *****")
    logger.info("  Num draws = %d", cfg.draws)
    report = ExperimentReport("marginal check", cfg.seed, cfg.echo())
    params = cfg.coupling
    if math.isinf(params.r_tilde):
        params = replace(params, r_tilde=1.0)
        report.note("r_tilde = inf replaced by 1.0 so that both sides of the threshold are exercised")
    x, y = marginal_pair(model, cfg, params.r_tilde)
    streams = BatchStreams(cfg.seed, stream=0, batch=cfg.draws, purpose=STUDY)
    xi = streams.standard_normal(model.n, model.d)
    u = streams.uniform(model.n)
    eta, branches = velocity_coupler(x - y, xi, u, params)
    for name, code in (("n_sync", SYNC), ("n_shift", SHIFT), ("n_reflect", REFLECT)):
        report.fits[name] = int(np.sum(branches == code))
    moments = normal_moment_zscores(eta.reshape(cfg.draws, model.n * model.d))
    frame = pd.DataFrame(moments, columns=["mean", "var", "skew", "mean_z", "var_z", "skew_z"])
    frame.insert(0, "coord", np.arange(model.n * model.d))
    report.series["marginal_check"] = frame
    worst = float(np.max(np.abs(frame[["mean_z", "var_z", "skew_z"]].values)))
    report.fits["worst_z"] = worst
    report.add_verdict("marginal_normality", worst <= Z_LIMIT, worst, "|z| <= %g for mean, var and skew" % Z_LIMIT)
    return report


STUDIES = {
    "sample": sample_run,
    "couple": coupled_run,
    "contraction": contraction_experiment,
    "dimension-sweep": dimension_sweep,
    "interaction-sweep": interaction_sweep,
    "contraction-check": contraction_theorem_check,
    "order-study": order_study,
    "bias-study": bias_study,
    "marginal-check": marginal_check,
}
