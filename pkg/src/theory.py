""" Derived constants, the concave metric rho, and the parameter conditions of the contraction theory.

All constants are functions of (K, L, L_tilde, R, epsilon, T) only; none of
them depends on the particle count n or the particle dimension d.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from src.model import MeanFieldModel, Quadratic, QuadraticInteraction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegularityParams:
    """
    Regularity constants of V and W, supplied by the user, never estimated.

    K: strong convexity of V outside a ball of radius R
    L: Lipschitz constant of grad V (K <= L)
    L_tilde: Lipschitz constant of grad W
    L_H, L_H_tilde: optional third-derivative bounds
    """

    K: float
    L: float
    L_tilde: float = 0.0
    R: float = 0.0
    epsilon: float = 0.0
    L_H: Optional[float] = None
    L_H_tilde: Optional[float] = None

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("K must be > 0, got %s" % self.K)
        if self.K > self.L:
            raise ValueError("K must not exceed L (K=%s, L=%s)" % (self.K, self.L))
        for name in ("L_tilde", "R", "epsilon"):
            if getattr(self, name) < 0:
                raise ValueError("%s must be >= 0, got %s" % (name, getattr(self, name)))
        for name in ("L_H", "L_H_tilde"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError("%s must be >= 0, got %s" % (name, value))


@dataclass(frozen=True)
class DerivedConstants:
    R_tilde: float
    gamma: float
    R_1: float
    kappa: float
    c: float
    M: float
    C_hat: float
    kappa_positive: bool = True

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Condition:
    name: str
    lhs: float
    rhs: float
    strict: bool = False

    @property
    def passed(self):
        return self.lhs < self.rhs if self.strict else self.lhs <= self.rhs

    def describe(self):
        if self.passed:
            op = "<" if self.strict else "<="
        else:
            op = ">=" if self.strict else ">"
        return "%s: %.6g %s %.6g %s" % (self.name, self.lhs, op, self.rhs, "pass" if self.passed else "FAIL")


@dataclass
class ConditionReport:
    entries: List[Condition] = field(default_factory=list)

    @property
    def passed(self):
        return all(entry.passed for entry in self.entries)

    def failing(self):
        return [entry for entry in self.entries if not entry.passed]

    def __getitem__(self, name):
        for entry in self.entries:
            if entry.name == name:
                return entry
        raise KeyError(name)


def effective_lipschitz(params):
    """Global Lipschitz constant L + 4 eps L_tilde of grad U."""
    return params.L + 4.0 * params.epsilon * params.L_tilde


def effective_convexity(params):
    """K - 4 eps L_tilde; U is strongly convex when R = 0 and this is positive."""
    return params.K - 4.0 * params.epsilon * params.L_tilde


def derive_constants(params, T):
    if not T > 0:
        raise ValueError("duration T must be > 0, got %s" % T)
    K, L, R = params.K, params.L, params.R
    R_tilde = 8.0 * R * math.sqrt((L + K) / K)
    gamma = 1.0 / T if R_tilde == 0 else min(1.0 / T, 1.0 / (4.0 * R_tilde))
    R_1 = 1.25 * (R_tilde + 2.0 * T)
    kappa = K - 3.0 * params.epsilon * params.L_tilde
    c = K * T * T * math.exp(-5.0 * R_tilde / (4.0 * T)) / 156.0
    M = math.exp(1.25 * (R_tilde / T + 2.0))
    C_hat = R * R * (L + K)
    if kappa <= 0:
        logger.warning("kappa = %.6g <= 0 (eps * L_tilde >= K/3): contraction theory does not apply", kappa)
    return DerivedConstants(R_tilde, gamma, R_1, kappa, c, M, C_hat, kappa_positive=kappa > 0)


def check_conditions(params, T, h1):
    """Evaluate every explicit parameter condition of the contraction theorem and of the trajectory estimates (t = T, h = h1)."""
    if not T > 0:
        raise ValueError("duration T must be > 0, got %s" % T)
    if h1 < 0:
        raise ValueError("h1 must be >= 0, got %s" % h1)
    K, L, eps_Lt = params.K, params.L, params.epsilon * params.L_tilde
    consts = derive_constants(params, T)
    R_tilde = consts.R_tilde
    third = math.inf if R_tilde == 0 else 3.0 / (256.0 * 5.0 * L * R_tilde ** 2)
    L_eff = effective_lipschitz(params)
    span = L_eff * (T * T + T * h1)
    h_cap = K * T / (525.0 * L + 235.0 * K)
    eps_cap = min(K / 6.0, 0.5 * (K * (R_tilde + T) / (36.0 * 149.0)) ** 2 * math.exp(-5.0 * R_tilde / T))
    entries = [
        Condition("cond_T", L * (T + h1) ** 2, 0.6 * min(0.25, 3.0 * K / (10.0 * L), third)),
        Condition("cond_h_T", h1, h_cap),
        Condition("cond_epsilon", eps_Lt, eps_cap, strict=True),
        Condition("basic_t", span, 1.0),
        Condition("conv_t", span, min(consts.kappa / L_eff, 0.25)),
        Condition("conv_h", h1, h_cap),
    ]
    return ConditionReport(entries)


def f_eval(r, T, R_1):
    """
    f(r) = int_0^r exp(-min(R_1, s)/T) ds in closed form.

    Concave, strictly increasing, f(0) = 0, f'(0) = 1, linear beyond R_1.
    """
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("distance r must be >= 0")
    inner = -T * np.expm1(-np.minimum(r, R_1) / T)
    outer = np.maximum(r - R_1, 0.0) * math.exp(-R_1 / T)
    out = inner + outer
    return float(out) if out.ndim == 0 else out


def f_prime(r, T, R_1):
    r = np.asarray(r, dtype=np.float64)
    out = np.exp(-np.minimum(R_1, r) / T)
    return float(out) if out.ndim == 0 else out


def particle_distances(x, y):
    """|x^i - y^i| per particle (Euclidean norm on each d-block)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("shape mismatch: %s vs %s" % (x.shape, y.shape))
    return np.sqrt(np.sum((x - y) ** 2, axis=-1))


def rho_distance(x, y, T, R_1):
    """rho(x, y) = sum_i f(|x^i - y^i|)."""
    out = np.sum(f_eval(particle_distances(x, y), T, R_1), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def ell1_distance(x, y):
    """sum_i |x^i - y^i|."""
    out = np.sum(particle_distances(x, y), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def mean_distance(x, y):
    """(1/n) sum_i |x^i - y^i|, the particle-averaged l1 distance."""
    dist = particle_distances(x, y)
    out = np.sum(dist, axis=-1) / dist.shape[-1]
    return float(out) if np.ndim(out) == 0 else out


def step_bound(c, R_tilde, T, delta0, eps_tilde):
    """
    Number of steps m after which the l1-Kantorovich distance to the
    invariant measure is at most eps_tilde:
        m >= (1/c) (5/2 + 5 R_tilde / (4T) + log(delta0 / eps_tilde)^+)
    """
    if not c > 0:
        raise ValueError("contraction rate c must be > 0, got %s" % c)
    if not (T > 0 and delta0 > 0 and eps_tilde > 0) or R_tilde < 0:
        raise ValueError("T, delta0 and eps_tilde must be > 0 and R_tilde >= 0")
    log_term = max(math.log(delta0 / eps_tilde), 0.0)
    value = (2.5 + 5.0 * R_tilde / (4.0 * T) + log_term) / c
    # ceil of an integer polluted by rounding noise must stay that integer
    return int(math.ceil(round(value, 9)))


def wasserstein_decay_bound(consts, m, w0, metric="ell1"):
    """Contraction envelope after m steps: e^{-cm} W_rho(0), or M e^{-cm} W_l1(0)."""
    decay = math.exp(-consts.c * m)
    if metric == "rho":
        return decay * w0
    if metric == "ell1":
        return consts.M * decay * w0
    raise ValueError("metric must be 'rho' or 'ell1', got %s" % metric)


def burn_in_bias_bound(c, b, m, grad_bound, w0):
    """Burn-in part of the ergodic-average bias bound: (1/m) G e^{-cb} / (1 - e^{-c}) W_l1(nu, mu_h)."""
    if not (c > 0 and m >= 1 and b >= 0):
        raise ValueError("need c > 0, m >= 1, b >= 0")
    return grad_bound * math.exp(-c * b) / (-math.expm1(-c)) * w0 / m


def exact_hmc_reference_rate(params, T, n):
    """
    The n-dependent rate available for exact HMC from a global (non-particlewise)
    analysis, with its duration condition. Its decay in n is what the
    particlewise rate c avoids.
    """
    K_eff = effective_convexity(params)
    L_eff = effective_lipschitz(params)
    if K_eff <= 0:
        return 0.0, Condition("exact_T", math.inf, 0.0)
    R_n = params.R * math.sqrt(2.0 * n * (params.L + params.K) / K_eff)
    inner = 0.25 * K_eff * T * T * (1.0 + R_n / T) * math.exp(-R_n / (2.0 * T))
    rate = 0.1 * min(1.0, inner) * math.exp(-2.0 * R_n / T)
    cap_R = math.inf if R_n == 0 else 1.0 / (64.0 * L_eff * R_n * R_n)
    cond = Condition("exact_T", L_eff * T * T, min(0.25, K_eff / L_eff, cap_R))
    return rate, cond


def position_bound(params, x, v, t, h):
    """Bound on max_{s<=t} sum_i |x_s^i| for the Verlet dynamics started at (x, v)."""
    span = effective_lipschitz(params) * (t * t + t * h)
    free = np.sum(np.maximum(np.linalg.norm(x, axis=-1), np.linalg.norm(x + t * v, axis=-1)), axis=-1)
    return (1.0 + span) * free


def velocity_bound(params, x, v, t, h):
    """Bound on max_{s<=t} sum_i |v_s^i| for the Verlet dynamics started at (x, v)."""
    L_eff = effective_lipschitz(params)
    span = L_eff * (t * t + t * h)
    free = np.sum(np.maximum(np.linalg.norm(x, axis=-1), np.linalg.norm(x + t * v, axis=-1)), axis=-1)
    return L_eff * t * (1.0 + span) * free + np.sum(np.linalg.norm(v, axis=-1), axis=-1)


def difference_position_bound(params, x, y, v, u, t, h):
    """Bound on max_{s<=t} sum_i |x_s^i - y_s^i| for two Verlet trajectories started at (x, v) and (y, u)."""
    return position_bound(params, np.asarray(x) - np.asarray(y), np.asarray(v) - np.asarray(u), t, h)


def regularity_for(model):
    """Known regularity constants of a quadratic model; None for other confinements."""
    if not isinstance(model, MeanFieldModel) or not isinstance(model.confinement, Quadratic):
        return None
    L_tilde = 1.0 if isinstance(model.interaction, QuadraticInteraction) else 0.0
    k = model.confinement.k
    return RegularityParams(K=k, L=k, L_tilde=L_tilde, R=0.0, epsilon=model.epsilon, L_H=0.0, L_H_tilde=0.0)


def warn_if_long_duration(params, cfg):
    """Log when T and h leave the regime (L + 4 eps L_tilde)(T^2 + T h) <= 1."""
    span = effective_lipschitz(params) * (cfg.duration ** 2 + cfg.duration * cfg.step_size)
    if span > 1.0:
        logger.warning("(L + 4 eps L_tilde)(T^2 + T h) = %.6g > 1: duration outside the a-priori estimate regime", span)
    return span <= 1.0
