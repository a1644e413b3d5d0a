""" Mean-field potentials U(x) = sum_i [V(x^i) + (eps/n) sum_{j != i} W(x^i - x^j)].

Positions are arrays of shape ``(..., n, d)``: the last two axes hold the n
particles of dimension d, leading axes index independent replicas.
"""

import copy
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

logger = logging.getLogger(__name__)

PAIR_MODES = ("sequential", "vectorized")


class ConfinementSpec(object):
    """Unary potential V acting on each particle."""

    name = None

    def check_dimension(self, d):
        pass

    def energy(self, p):
        raise NotImplementedError

    def grad(self, p):
        raise NotImplementedError

    def to_dict(self):
        output = copy.deepcopy(self.__dict__)
        output["type"] = self.name
        return output


@dataclass(frozen=True)
class Quadratic(ConfinementSpec):
    """V(p) = k |p|^2 / 2."""

    k: float = 1.0
    name = "quadratic"

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("Quadratic stiffness must be > 0, got %s" % self.k)

    def energy(self, p):
        return 0.5 * self.k * np.sum(p * p, axis=-1)

    def grad(self, p):
        return self.k * p


@dataclass(frozen=True, eq=False)
class GaussianMixture(ConfinementSpec):
    """
    V(p) = -log sum_k exp(-|p - mu_k|^2 / 2).

    Equal weights, unit covariance, normalisation dropped. Energy uses
    log-sum-exp and the gradient softmax weights, so states far from every
    mean do not underflow.
    """

    means: np.ndarray = field(default_factory=lambda: np.zeros((1, 2)))
    name = "mixture"

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        if means.shape[0] < 1:
            raise ValueError("GaussianMixture needs at least one mean")
        object.__setattr__(self, "means", means)

    def check_dimension(self, d):
        if self.means.shape[1] != d:
            raise ValueError("mixture means have dimension %d, model has d=%d" % (self.means.shape[1], d))

    def _exponents(self, p):
        diff = p[..., None, :] - self.means
        return diff, -0.5 * np.sum(diff * diff, axis=-1)

    def energy(self, p):
        _, expo = self._exponents(p)
        return -logsumexp(expo, axis=-1)

    def grad(self, p):
        diff, expo = self._exponents(p)
        weights = softmax(expo, axis=-1)
        # explicit loop over components: same summation order for any leading shape
        out = np.zeros(diff.shape[:-2] + diff.shape[-1:])
        for k in range(self.means.shape[0]):
            out += weights[..., k, None] * diff[..., k, :]
        return out

    def to_dict(self):
        return {"type": self.name, "means": self.means.tolist()}


@dataclass(frozen=True)
class Rosenbrock(ConfinementSpec):
    """V(p) = (a - p_1)^2 + b (p_2 - p_1^2)^2, two-dimensional particles only."""

    a: float = 1.0
    b: float = 10.0
    name = "rosenbrock"

    def check_dimension(self, d):
        if d != 2:
            raise ValueError("Rosenbrock confinement requires d = 2, got d=%d" % d)

    def energy(self, p):
        p1, p2 = p[..., 0], p[..., 1]
        return (self.a - p1) ** 2 + self.b * (p2 - p1 * p1) ** 2

    def grad(self, p):
        p1, p2 = p[..., 0], p[..., 1]
        bend = p2 - p1 * p1
        out = np.empty_like(p)
        out[..., 0] = -2.0 * (self.a - p1) - 4.0 * self.b * p1 * bend
        out[..., 1] = 2.0 * self.b * bend
        return out


class InteractionSpec(object):
    """Pair potential W(u), u = x^i - x^j."""

    name = None

    def energy(self, u):
        raise NotImplementedError

    def grad(self, u):
        raise NotImplementedError

    def flipped(self):
        return self

    def vanishes(self):
        return False

    def to_dict(self):
        output = copy.deepcopy(self.__dict__)
        output["type"] = self.name
        return output


@dataclass(frozen=True)
class ZeroInteraction(InteractionSpec):
    name = "zero"

    def energy(self, u):
        return np.zeros(u.shape[:-1])

    def grad(self, u):
        return np.zeros_like(u)

    def vanishes(self):
        return True


@dataclass(frozen=True)
class QuadraticInteraction(InteractionSpec):
    """W(u) = sign |u|^2 / 2; sign -1 is the repulsive case."""

    sign: int = 1
    name = "quadratic"

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("interaction sign must be +1 or -1, got %s" % self.sign)

    def energy(self, u):
        return 0.5 * self.sign * np.sum(u * u, axis=-1)

    def grad(self, u):
        return self.sign * u

    def flipped(self):
        return QuadraticInteraction(sign=-self.sign)


class MeanFieldModel(object):
    """
    n exchangeable particles in R^d with confinement V and interaction W of
    strength epsilon.

    A negative epsilon is stored as |epsilon| with the interaction sign
    flipped. ``pair_mode="sequential"`` accumulates pair forces over j in
    ascending order, one (n, d) slab at a time; ``"vectorized"`` sums an
    (n, n, d) tensor and may differ from it by rounding.
    """

    def __init__(self, confinement, interaction=None, epsilon=0.0, n=1, d=1, pair_mode="sequential"):
        if interaction is None:
            interaction = ZeroInteraction()
        if int(n) != n or n < 1:
            raise ValueError("particle count n must be an integer >= 1, got %s" % n)
        if int(d) != d or d < 1:
            raise ValueError("dimension d must be an integer >= 1, got %s" % d)
        if pair_mode not in PAIR_MODES:
            raise ValueError("pair_mode must be one of %s, got %s" % (PAIR_MODES, pair_mode))
        epsilon = float(epsilon)
        if epsilon < 0:
            epsilon = -epsilon
            interaction = interaction.flipped()
        confinement.check_dimension(int(d))
        self.confinement = confinement
        self.interaction = interaction
        self.epsilon = epsilon
        self.n = int(n)
        self.d = int(d)
        self.pair_mode = pair_mode

    def __repr__(self):
        return str(self.to_json_string())

    @property
    def interacting(self):
        return self.epsilon != 0.0 and not self.interaction.vanishes() and self.n > 1

    def to_dict(self):
        return {
            "confinement": self.confinement.to_dict(),
            "interaction": self.interaction.to_dict(),
            "epsilon": self.epsilon,
            "n": self.n,
            "d": self.d,
            "pair_mode": self.pair_mode,
        }

    def to_json_string(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def with_size(self, n):
        """Same potentials and strength, another particle count."""
        return MeanFieldModel(self.confinement, self.interaction, self.epsilon, n, self.d, self.pair_mode)

    def check_shape(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim < 2 or x.shape[-2:] != (self.n, self.d):
            raise ValueError("positions of shape %s do not match model (n=%d, d=%d)" % (x.shape, self.n, self.d))
        return x

    def potential_energy(self, x):
        x = self.check_shape(x)
        total = self.confinement.energy(x)
        if self.interacting:
            pair = np.zeros(x.shape[:-1])
            for j in range(self.n):
                term = self.interaction.energy(x - x[..., j:j + 1, :])
                term[..., j] = 0.0
                pair += term
            total = total + (self.epsilon / self.n) * pair
        return np.sum(total, axis=-1)

    def _pair_bracket(self, u):
        return self.interaction.grad(u) - self.interaction.grad(-u)

    def grad_particle(self, x, i):
        x = self.check_shape(x)
        if not 0 <= i < self.n:
            raise IndexError("particle index %d out of range for n=%d" % (i, self.n))
        xi = x[..., i, :]
        g = self.confinement.grad(xi)
        if not self.interacting:
            return g
        if self.pair_mode == "vectorized":
            acc = np.sum(self._pair_bracket(xi[..., None, :] - x), axis=-2)
        else:
            acc = np.zeros_like(xi)
            for j in range(self.n):
                acc += self._pair_bracket(xi - x[..., j, :])
        return g + (self.epsilon / self.n) * acc

    def grad_full(self, x):
        x = self.check_shape(x)
        g = self.confinement.grad(x)
        if not self.interacting:
            return g
        if self.pair_mode == "vectorized":
            acc = np.sum(self._pair_bracket(x[..., :, None, :] - x[..., None, :, :]), axis=-2)
        else:
            acc = np.zeros_like(x)
            for j in range(self.n):
                acc += self._pair_bracket(x - x[..., j:j + 1, :])
        return g + (self.epsilon / self.n) * acc


def potential_energy(model, x):
    """U(x); returns an array over leading replica axes (a 0-d array for a single state)."""
    return model.potential_energy(x)


def grad_particle(model, x, i):
    """nabla_i U(x), the negated force on particle i."""
    return model.grad_particle(x, i)


def grad_full(model, x):
    return model.grad_full(x)


def as_positions(model, x):
    """Validate and reshape a flat or (n, d) input into a position state."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        if arr.size != model.n * model.d:
            raise ValueError("expected %d entries, got %d" % (model.n * model.d, arr.size))
        arr = arr.reshape(model.n, model.d)
    arr = model.check_shape(arr)
    if not np.all(np.isfinite(arr)):
        raise ValueError("positions must be finite")
    return arr
