import numpy as np
import pytest

from src.rng import DYNAMICS, INITIAL_STATES, STUDY, BatchStreams, ParticleStreams, draw_checksum


def test_streams_are_reproducible():
    a = ParticleStreams(7, replica=2, particle_ids=range(3))
    b = ParticleStreams(7, replica=2, particle_ids=range(3))
    np.testing.assert_array_equal(a.standard_normal(3, 4), b.standard_normal(3, 4))
    np.testing.assert_array_equal(a.uniform(3), b.uniform(3))


def test_purposes_and_replicas_do_not_share_draws():
    base = ParticleStreams(7, 0, range(2), purpose=DYNAMICS).standard_normal(2, 3)
    other_purpose = ParticleStreams(7, 0, range(2), purpose=INITIAL_STATES).standard_normal(2, 3)
    other_replica = ParticleStreams(7, 1, range(2), purpose=DYNAMICS).standard_normal(2, 3)
    assert not np.array_equal(base, other_purpose)
    assert not np.array_equal(base, other_replica)


def test_particle_stream_does_not_depend_on_the_others():
    many = ParticleStreams.for_model(11, 0, 5)
    alone = many.subset([3])
    np.testing.assert_array_equal(many.standard_normal(5, 2)[3], alone.standard_normal(1, 2)[0])


def test_uniforms_in_open_interval():
    u = BatchStreams(3, batch=1000).uniform(10)
    assert u.shape == (1000, 10)
    assert np.all(u > 0.0) and np.all(u < 1.0)


def test_batch_normals_look_standard():
    z = BatchStreams(5, batch=20000, purpose=STUDY).standard_normal(1, 1).ravel()
    assert abs(z.mean()) < 4.0 / np.sqrt(z.size)
    assert abs(z.var() - 1.0) < 4.0 * np.sqrt(2.0 / z.size)


def test_uniform_box_bounds():
    box = BatchStreams(5).uniform_box((100, 2), -1.0, 3.0)
    assert box.shape == (100, 2)
    assert box.min() > -1.0 and box.max() < 3.0


def test_request_size_checked():
    streams = ParticleStreams.for_model(1, 0, 3)
    with pytest.raises(ValueError):
        streams.standard_normal(2, 1)
    with pytest.raises(ValueError):
        streams.uniform(4)


def test_seed_range_checked():
    with pytest.raises(ValueError):
        ParticleStreams(-1)
    with pytest.raises(ValueError):
        BatchStreams(2 ** 64)
    with pytest.raises(ValueError):
        BatchStreams(1, batch=0)
    ParticleStreams(2 ** 64 - 1)


def test_draw_checksum():
    a = BatchStreams(9, batch=4).standard_normal(2, 2)
    b = BatchStreams(9, batch=4).standard_normal(2, 2)
    c = BatchStreams(10, batch=4).standard_normal(2, 2)
    assert draw_checksum(a) == draw_checksum(b)
    assert draw_checksum(a) != draw_checksum(c)
