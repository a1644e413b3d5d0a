""" Particlewise coupling of two unadjusted HMC chains.

For each particle i with z = x^i - y^i the velocity eta^i of the second chain
is built from the velocity xi^i of the first:

  |z| >= r_tilde                  -> eta = xi                      (synchronous)
  u <= phi(e.xi + g|z|) / phi(e.xi) -> eta = xi + g z              (shift)
  otherwise                       -> eta = xi - 2 (e.xi) e          (reflection)

with e = z/|z| and g = gamma. eta is again standard normal.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
from tqdm import trange

from src.integrator import PhasePoint, verlet_flow
from src.theory import ell1_distance, mean_distance, rho_distance

logger = logging.getLogger(__name__)

SYNC = 0
SHIFT = 1
REFLECT = 2
BRANCH_NAMES = ("synchronous", "shifted", "reflected")


@dataclass(frozen=True)
class CouplingParams:
    """
    gamma: shift strength; r_tilde: synchronous threshold (inf keeps every
    particle in the shift/reflection regime); tol: termination threshold on
    the mean distance; max_steps: step cap for coupled runs.
    """

    gamma: float
    r_tilde: float = math.inf
    tol: float = 1e-5
    max_steps: int = 500

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0, got %s" % self.gamma)
        if not self.r_tilde >= 0:
            raise ValueError("r_tilde must be >= 0, got %s" % self.r_tilde)
        if not self.tol > 0:
            raise ValueError("tol must be > 0, got %s" % self.tol)
        if int(self.max_steps) != self.max_steps or self.max_steps < 0:
            raise ValueError("max_steps must be a non-negative integer, got %s" % self.max_steps)

    def metric_radius(self, duration):
        """R_1 = (5/4)(r_tilde + 2T) used by the rho metric of coupled traces."""
        return 1.25 * (self.r_tilde + 2.0 * duration)


def couple_velocities(z, xi, u, params):
    """
    Coupled velocities for every particle of a batch.

    z broadcasts against xi (shape (..., n, d)); u has shape (..., n).
    Returns (eta, branch codes).
    """
    z = np.asarray(z, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    norm = np.sqrt(np.sum(z * z, axis=-1))
    at_zero = norm == 0.0
    e_fixed = np.zeros(z.shape[-1])
    e_fixed[0] = 1.0
    e = np.where(at_zero[..., None], e_fixed, z / np.where(at_zero, 1.0, norm)[..., None])
    dot = np.sum(e * xi, axis=-1)
    log_ratio = -params.gamma * norm * dot - 0.5 * (params.gamma * norm) ** 2
    with np.errstate(divide="ignore"):
        shift = np.log(u) <= log_ratio
    sync = norm >= params.r_tilde
    shifted = np.where(at_zero[..., None], xi, xi + params.gamma * z)
    reflected = xi - 2.0 * dot[..., None] * e
    eta = np.where(sync[..., None], xi, np.where(shift[..., None], shifted, reflected))
    branches = np.where(sync, SYNC, np.where(shift, SHIFT, REFLECT))
    return eta, branches


def couple_velocity_particle(z_i, xi_i, u_i, params):
    """eta^i for a single particle (d-vectors z_i and xi_i, one uniform u_i)."""
    if not 0.0 <= u_i <= 1.0:
        raise ValueError("uniform draw must lie in [0, 1], got %s" % u_i)
    eta, _ = couple_velocities(np.asarray(z_i)[None, :], np.asarray(xi_i)[None, :], np.asarray([u_i]), params)
    return eta[0]


def reflection_skipped(z, xi, u, params):
    """Broken coupler for negative controls: the reflection branch falls back to the shift."""
    eta, branches = couple_velocities(z, xi, u, params)
    z = np.broadcast_to(np.asarray(z, dtype=np.float64), eta.shape)
    broken = np.where((branches == REFLECT)[..., None], xi + params.gamma * z, eta)
    return broken, branches


@dataclass(eq=False)
class CoupledPhase:
    x: np.ndarray
    y: np.ndarray
    branches: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.shape != self.y.shape:
            raise ValueError("coupled states differ in shape: %s vs %s" % (self.x.shape, self.y.shape))

    def branch_counts(self):
        if self.branches is None:
            return 0, 0, 0
        return tuple(int(np.sum(self.branches == code)) for code in (SYNC, SHIFT, REFLECT))


def coupled_hmc_step(model, phase, cfg, params, rng, velocity_coupler=couple_velocities):
    """X = q_T(x, xi), Y = q_T(y, eta) with eta coupled to xi particle by particle."""
    xi = rng.standard_normal(model.n, model.d)
    # one uniform per particle, synchronous ones included
    u = rng.uniform(model.n)
    eta, branches = velocity_coupler(phase.x - phase.y, xi, u, params)
    x_next = verlet_flow(model, PhasePoint(phase.x, xi), cfg).q
    y_next = verlet_flow(model, PhasePoint(phase.y, eta), cfg).q
    return CoupledPhase(x_next, y_next, branches)


@dataclass
class CouplingTrace:
    """Per-step distance series of a coupled run, step 0 included."""

    duration: float
    metric_radius: float
    step: List[int] = field(default_factory=list)
    mean_distance: List[float] = field(default_factory=list)
    ell1: List[float] = field(default_factory=list)
    rho: List[float] = field(default_factory=list)
    n_sync: List[int] = field(default_factory=list)
    n_shift: List[int] = field(default_factory=list)
    n_reflect: List[int] = field(default_factory=list)
    positions: Optional[list] = None
    converged: bool = False
    diverged: bool = False

    COLUMNS = ("step", "mean_distance", "ell1", "rho", "n_sync", "n_shift", "n_reflect")

    def __len__(self):
        return len(self.step)

    @property
    def n_steps(self):
        return self.step[-1] if self.step else 0

    def record(self, k, phase):
        counts = phase.branch_counts()
        self.step.append(k)
        self.mean_distance.append(mean_distance(phase.x, phase.y))
        self.ell1.append(ell1_distance(phase.x, phase.y))
        self.rho.append(rho_distance(phase.x, phase.y, self.duration, self.metric_radius))
        self.n_sync.append(counts[SYNC])
        self.n_shift.append(counts[SHIFT])
        self.n_reflect.append(counts[REFLECT])
        if self.positions is not None:
            self.positions.append((k, phase.x.copy(), phase.y.copy()))

    def to_frame(self):
        return pd.DataFrame({name: getattr(self, name) for name in self.COLUMNS}, columns=list(self.COLUMNS))

    def positions_frame(self):
        """Long form (step, particle, coord, x, y) of the recorded positions."""
        if self.positions is None:
            raise ValueError("positions were not recorded for this run")
        frames = []
        for k, x, y in self.positions:
            n, d = x.shape
            frames.append(pd.DataFrame({
                "step": k,
                "particle": np.repeat(np.arange(n), d),
                "coord": np.tile(np.arange(d), n),
                "x": x.reshape(-1),
                "y": y.reshape(-1),
            }))
        return pd.concat(frames, ignore_index=True)


def run_coupled_chain(model, x0, y0, cfg, params, rng, record_positions=False, velocity_coupler=couple_velocities,
                      progress=False):
    """
    Iterate coupled steps until the mean distance drops below params.tol, params.max_steps is
    reached or a position stops being finite (``trace.diverged``).
    """
    phase = CoupledPhase(model.check_shape(x0), model.check_shape(y0))
    trace = CouplingTrace(cfg.duration, params.metric_radius(cfg.duration), positions=[] if record_positions else None)
    trace.record(0, phase)
    for k in trange(1, params.max_steps + 1, desc="coupled steps", disable=not progress):
        if trace.mean_distance[-1] < params.tol:
            break
        phase = coupled_hmc_step(model, phase, cfg, params, rng, velocity_coupler)
        trace.record(k, phase)
        if not (np.all(np.isfinite(phase.x)) and np.all(np.isfinite(phase.y))):
            trace.diverged = True
            logger.warning("coupled run diverged at step %d: positions are no longer finite", k)
            break
    trace.converged = not trace.diverged and trace.mean_distance[-1] < params.tol
    if not trace.converged and not trace.diverged:
        logger.info("coupled run did not reach tol=%g within %d steps (mean distance %.3g)",
                    params.tol, params.max_steps, trace.mean_distance[-1])
    return trace
