""" Reproducible noise streams for velocity refreshments and coupling uniforms.

Every draw comes from a Philox counter-based bit generator keyed by
``SeedSequence(seed, spawn_key=(purpose, stream, ...))``. Uniforms are built
from the top 53 bits of raw 64-bit outputs and lie in the open interval (0, 1);
normals are their inverse CDF (``scipy.special.ndtri``). The draw sequence for
a fixed key therefore depends only on the Philox counter arithmetic and on
``ndtri``, not on numpy's ziggurat tables.
"""

import hashlib
import logging
from typing import Sequence

import numpy as np
from scipy.special import ndtri

logger = logging.getLogger(__name__)

# spawn_key purposes; distinct purposes never share counters
DYNAMICS = 0
INITIAL_STATES = 1
MODEL_CONSTRUCTION = 2
STUDY = 3

_TWO_POW_MINUS_53 = 2.0 ** -53


def _open_uniforms(bit_generator, count):
    raw = bit_generator.random_raw(count)
    top = (np.asarray(raw, dtype=np.uint64) >> np.uint64(11)).astype(np.float64)
    return (top + 0.5) * _TWO_POW_MINUS_53


def _philox(seed, spawn_key):
    if seed < 0 or seed >= 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer, got %s" % seed)
    return np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in spawn_key)))


class ParticleStreams(object):
    """
    One substream per particle of one replica.

    Particle ``pid`` of replica ``replica`` is always driven by the same
    substream, whatever other particles exist, so an n-particle chain can be
    compared draw-for-draw with single-particle chains or with a relabelled
    copy of itself.
    """

    def __init__(self, seed, replica=0, particle_ids=(0,), purpose=DYNAMICS):
        self.seed = int(seed)
        self.replica = int(replica)
        self.particle_ids = tuple(int(p) for p in particle_ids)
        self.purpose = purpose
        self._generators = [_philox(self.seed, (purpose, self.replica, pid)) for pid in self.particle_ids]

    @classmethod
    def for_model(cls, seed, replica, n, purpose=DYNAMICS):
        return cls(seed, replica, range(n), purpose=purpose)

    @property
    def n(self):
        return len(self.particle_ids)

    def subset(self, indices: Sequence[int]):
        """Fresh streams for the particles at ``indices`` (same keys, counters reset)."""
        return ParticleStreams(self.seed, self.replica, [self.particle_ids[i] for i in indices], purpose=self.purpose)

    def standard_normal(self, n, d):
        if n != self.n:
            raise ValueError("streams hold %d particles, %d requested" % (self.n, n))
        out = np.empty((n, d))
        for i, gen in enumerate(self._generators):
            out[i] = ndtri(_open_uniforms(gen, d))
        return out

    def uniform(self, n):
        if n != self.n:
            raise ValueError("streams hold %d particles, %d requested" % (self.n, n))
        out = np.empty(n)
        for i, gen in enumerate(self._generators):
            out[i] = _open_uniforms(gen, 1)[0]
        return out


class BatchStreams(object):
    """
    A single stream producing whole ``(batch, n, d)`` blocks in C order.

    Used by studies that advance many independent replicas as one array.
    """

    def __init__(self, seed, stream=0, batch=1, purpose=STUDY):
        self.seed = int(seed)
        self.stream = int(stream)
        self.batch = int(batch)
        if self.batch < 1:
            raise ValueError("batch must be >= 1, got %d" % self.batch)
        self._generator = _philox(self.seed, (purpose, self.stream))

    def standard_normal(self, n, d):
        size = self.batch * n * d
        return ndtri(_open_uniforms(self._generator, size)).reshape(self.batch, n, d)

    def uniform(self, n):
        return _open_uniforms(self._generator, self.batch * n).reshape(self.batch, n)

    def uniform_box(self, shape, low, high):
        size = int(np.prod(shape))
        u = _open_uniforms(self._generator, size).reshape(shape)
        return low + (high - low) * u


def draw_checksum(array):
    """SHA-256 of the raw bytes of a draw block; equal digests mean equal draws."""
    return hashlib.sha256(np.ascontiguousarray(array, dtype=np.float64).tobytes()).hexdigest()
