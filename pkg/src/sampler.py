""" Unadjusted HMC chains with full velocity refreshment, and ergodic averages of intensive observables. """

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from tqdm import trange

from src.integrator import PhasePoint, verlet_flow

logger = logging.getLogger(__name__)


class Observable(object):
    """Scalar function of a position state, evaluated over leading replica axes."""

    tag = None

    def __call__(self, x):
        raise NotImplementedError

    def check(self, d):
        pass

    def __repr__(self):
        return "%s:%s" % (self.tag, self.arg)


class IntensiveMean(Observable):
    """f(x) = (1/n) sum_i x^i_c."""

    tag = "mean"

    def __init__(self, coord=0):
        self.arg = int(coord)

    def check(self, d):
        if not 0 <= self.arg < d:
            raise ValueError("observable coordinate %d out of range for d=%d" % (self.arg, d))

    def __call__(self, x):
        return np.mean(x[..., self.arg], axis=-1)


def _const(p):
    return np.ones(p.shape[:-1])


def _square0(p):
    return p[..., 0] ** 2


def _norm_sq(p):
    return np.sum(p * p, axis=-1)


def _abs0(p):
    return np.abs(p[..., 0])


BUILTIN_FUNCS = {"const": _const, "square0": _square0, "norm_sq": _norm_sq, "abs0": _abs0}


class IntensiveFunc(Observable):
    """f(x) = (1/n) sum_i g(x^i) for a named built-in g on d-vectors."""

    tag = "func"

    def __init__(self, name):
        if name not in BUILTIN_FUNCS:
            raise ValueError("unknown observable function %s, expected one of %s" % (name, sorted(BUILTIN_FUNCS)))
        self.arg = name
        self._fn = BUILTIN_FUNCS[name]

    def __call__(self, x):
        return np.mean(self._fn(x), axis=-1)


class ExtensiveSum(Observable):
    """f(x) = sum_i x^i_c."""

    tag = "sum"

    def __init__(self, coord=0):
        self.arg = int(coord)

    def check(self, d):
        if not 0 <= self.arg < d:
            raise ValueError("observable coordinate %d out of range for d=%d" % (self.arg, d))

    def __call__(self, x):
        return np.sum(x[..., self.arg], axis=-1)


def parse_observable(text):
    """'mean:<c>', 'func:<name>' or 'sum:<c>'."""
    tag, _, arg = str(text).partition(":")
    tag = tag.strip()
    arg = arg.strip()
    if tag == "mean":
        return IntensiveMean(int(arg or 0))
    if tag == "sum":
        return ExtensiveSum(int(arg or 0))
    if tag == "func":
        return IntensiveFunc(arg)
    raise ValueError("observable must be mean:<c>, func:<name> or sum:<c>, got %s" % text)


@dataclass
class ChainTrace:
    """Retained states, shape (k, ..., n, d), and the step index of each."""

    states: np.ndarray
    steps: np.ndarray
    n_steps: int
    thin: int = 1
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.states)

    @property
    def final(self):
        return self.states[-1]

    def to_frame(self):
        """Long form: one row per (step, particle, coord)."""
        if self.states.ndim != 3:
            raise ValueError("long-form export needs an unbatched trace, got shape %s" % (self.states.shape,))
        k, n, d = self.states.shape
        return pd.DataFrame({
            "step": np.repeat(self.steps, n * d),
            "particle": np.tile(np.repeat(np.arange(n), d), k),
            "coord": np.tile(np.arange(d), k * n),
            "value": self.states.reshape(-1),
        })


def hmc_step(model, x, cfg, rng):
    """One transition X = q_T(x, xi), xi ~ N(0, I); the final velocity is discarded."""
    xi = rng.standard_normal(model.n, model.d)
    return verlet_flow(model, PhasePoint(x, xi), cfg).q


def run_chain(model, x0, m, cfg, rng, thin=1, progress=False):
    if int(m) != m or m < 0:
        raise ValueError("chain length m must be a non-negative integer, got %s" % m)
    if int(thin) != thin or thin < 1:
        raise ValueError("thin must be an integer >= 1, got %s" % thin)
    m, thin = int(m), int(thin)
    x = model.check_shape(x0)
    states, steps = [x.copy()], [0]
    for k in trange(1, m + 1, desc="HMC steps", disable=not progress):
        x = hmc_step(model, x, cfg, rng)
        if k % thin == 0 or k == m:
            states.append(x)
            steps.append(k)
    config = {"model": model.to_dict(), "duration": cfg.duration, "steps_per_transition": cfg.steps, "thin": thin}
    return ChainTrace(np.stack(states), np.asarray(steps), m, thin, config)


def _window_mean(values, m):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        return math.fsum(values) / m
    return np.sum(values, axis=0) / m


def ergodic_average(trace, f, burn_in, window):
    """A_{m,b} f = (1/m) sum_{k=b}^{b+m-1} f(X_k)."""
    if trace.thin != 1:
        raise ValueError("ergodic averages need an unthinned trace (thin=%d)" % trace.thin)
    if burn_in < 0 or window < 1:
        raise ValueError("need burn_in >= 0 and window >= 1, got b=%s m=%s" % (burn_in, window))
    if burn_in + window > len(trace):
        raise ValueError("window b+m=%d exceeds trace length %d" % (burn_in + window, len(trace)))
    return _window_mean(f(trace.states[burn_in:burn_in + window]), window)


def streaming_ergodic_average(model, x0, cfg, rng, f, burn_in, window, progress=False):
    """A_{m,b} f evaluated on the fly, without retaining the chain; x0 may carry replica axes."""
    if burn_in < 0 or window < 1:
        raise ValueError("need burn_in >= 0 and window >= 1, got b=%s m=%s" % (burn_in, window))
    x = model.check_shape(x0)
    for _ in range(burn_in):
        x = hmc_step(model, x, cfg, rng)
    total = np.zeros(x.shape[:-2])
    for _ in trange(window, desc="averaging", disable=not progress):
        total = total + f(x)
        x = hmc_step(model, x, cfg, rng)
    return total / window, x
