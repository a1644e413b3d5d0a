import sys
from pathlib import Path

import numpy as np
import pytest

# repository root on the path so that `src` and `run_hmc` import
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from src.model import GaussianMixture, MeanFieldModel, Quadratic, QuadraticInteraction, Rosenbrock  # noqa: E402


class ZeroForceModel(object):
    """Free dynamics: grad U = 0 everywhere."""

    def __init__(self, n, d):
        self.n = n
        self.d = d

    def check_shape(self, x):
        return np.asarray(x, dtype=np.float64)

    def grad_full(self, x):
        return np.zeros_like(x)

    def potential_energy(self, x):
        return np.zeros(np.shape(x)[:-2])


@pytest.fixture
def harmonic():
    return MeanFieldModel(Quadratic(1.0), n=1, d=1)


@pytest.fixture
def interacting():
    return MeanFieldModel(Quadratic(1.0), QuadraticInteraction(1), epsilon=0.1, n=5, d=2)


@pytest.fixture
def mixture_model():
    means = np.array([[0.0, 0.0], [3.0, 1.0], [1.0, 4.0]])
    return MeanFieldModel(GaussianMixture(means), QuadraticInteraction(1), epsilon=0.01, n=4, d=2)


@pytest.fixture
def rosenbrock_model():
    return MeanFieldModel(Rosenbrock(), QuadraticInteraction(-1), epsilon=0.2, n=3, d=2)


@pytest.fixture
def zero_force():
    return ZeroForceModel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
