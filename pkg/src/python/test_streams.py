import numpy as np
import pytest

from streams import check_seed, stream, uniform_open, uniform_phases


def test_streams_are_reproducible():
    np.testing.assert_array_equal(stream(5, 'graph', 3).random(10), stream(5, 'graph', 3).random(10))


def test_streams_are_independent():
    base = stream(5, 'graph', 3).random(10)
    assert not np.array_equal(base, stream(5, 'graph', 4).random(10))
    assert not np.array_equal(base, stream(6, 'graph', 3).random(10))
    assert not np.array_equal(base, stream(5, 'frequencies', 3).random(10))


def test_prefix_property():
    long = uniform_open(9, 'frequencies', 100)
    np.testing.assert_array_equal(uniform_open(9, 'frequencies', 10), long[:10])


def test_uniform_open_interval():
    u = uniform_open(1, 'initial_phases', 10**5)
    assert u.min() > 0.0
    assert u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01


def test_uniform_phases_range():
    u = uniform_phases(2, 1000)
    assert np.all(np.abs(u) < np.pi)


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_bad_seed(seed):
    with pytest.raises(ValueError):
        check_seed(seed)


def test_largest_seed():
    assert check_seed(2**64 - 1) == 2**64 - 1
    stream(2**64 - 1, 'graph').random()
