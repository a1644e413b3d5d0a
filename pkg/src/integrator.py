""" Velocity Verlet flow for the mean-field Hamiltonian H(x, v) = U(x) + |v|^2 / 2. """

import logging
from dataclasses import dataclass

import numpy as np

from src.model import MeanFieldModel, Quadratic

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IntegratorConfig:
    """
    Duration T and the number of Verlet steps T/h.

    The step count is given directly, so T/h is an integer by construction.
    ``steps == 0`` requests the exact flow, available only for analytic
    harmonic models (see ``exact_stiffness``).
    """

    duration: float
    steps: int

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration T must be > 0, got %s" % self.duration)
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValueError("steps (T/h) must be a non-negative integer, got %s" % self.steps)
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def exact(self):
        return self.steps == 0

    @property
    def step_size(self):
        return 0.0 if self.exact else self.duration / self.steps

    def refined(self, factor):
        return IntegratorConfig(self.duration, self.steps * int(factor))


@dataclass(eq=False)
class PhasePoint:
    """Positions q and velocities p (unit masses), both of shape (..., n, d)."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.q.shape != self.p.shape:
            raise ValueError("q and p shapes differ: %s vs %s" % (self.q.shape, self.p.shape))

    def negated(self):
        return PhasePoint(self.q.copy(), -self.p)


def hamiltonian(model, phase):
    kinetic = 0.5 * np.sum(phase.p * phase.p, axis=(-2, -1))
    return model.potential_energy(phase.q) + kinetic


def _advance(model, q, p, h, steps, g=None):
    """Kick-drift-kick updates with one gradient evaluation per step."""
    if g is None:
        g = model.grad_full(q)
    half_h = 0.5 * h
    half_h2 = 0.5 * h * h
    for _ in range(steps):
        q = q + h * p - half_h2 * g
        g_new = model.grad_full(q)
        p = p - half_h * (g + g_new)
        g = g_new
    return q, p, g


def verlet_step(model, phase, h):
    """q' = q + h p - (h^2/2) grad U(q);  p' = p - (h/2)(grad U(q) + grad U(q'))."""
    if not h > 0:
        raise ValueError("step size h must be > 0, got %s" % h)
    q, p, _ = _advance(model, phase.q, phase.p, h, 1)
    return PhasePoint(q, p)


def exact_stiffness(model):
    """Stiffness k when the dynamics is an uncoupled harmonic oscillator, else None."""
    if isinstance(model, MeanFieldModel) and isinstance(model.confinement, Quadratic) and not model.interacting:
        return model.confinement.k
    return None


def harmonic_exact_flow(k, phase, t):
    """Analytic flow of V = k|x|^2/2 without interaction, componentwise."""
    if not k > 0:
        raise ValueError("stiffness k must be > 0, got %s" % k)
    omega = np.sqrt(k)
    c, s = np.cos(omega * t), np.sin(omega * t)
    q = phase.q * c + (phase.p / omega) * s
    p = -phase.q * omega * s + phase.p * c
    return PhasePoint(q, p)


def verlet_flow(model, phase, cfg):
    """(q_T, p_T) after T/h Verlet steps, or the analytic flow when cfg.exact."""
    if cfg.exact:
        k = exact_stiffness(model)
        if k is None:
            raise ValueError("exact flow (steps = 0) is only available for quadratic confinement without interaction")
        return harmonic_exact_flow(k, phase, cfg.duration)
    q, p, _ = _advance(model, phase.q, phase.p, cfg.step_size, cfg.steps)
    return PhasePoint(q, p)


def verlet_trajectory(model, phase, cfg):
    """Phase points at every grid time 0, h, ..., T (T/h + 1 entries)."""
    if cfg.exact:
        raise ValueError("trajectories are only exposed at Verlet grid times")
    h = cfg.step_size
    path = [PhasePoint(phase.q.copy(), phase.p.copy())]
    q, p, g = phase.q, phase.p, None
    for _ in range(cfg.steps):
        q, p, g = _advance(model, q, p, h, 1, g)
        path.append(PhasePoint(q, p))
    return path
