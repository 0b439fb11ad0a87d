import numpy as np

from spectralgp import rng


def test_same_key_same_stream():
    np.testing.assert_array_equal(rng.standard_normal(7, "a", 3, 10), rng.standard_normal(7, "a", 3, 10))


def test_keys_are_independent_of_call_order():
    a1 = rng.uniform(1, "x", 0, 5)
    rng.uniform(1, "y", 0, 1000)
    np.testing.assert_array_equal(a1, rng.uniform(1, "x", 0, 5))


def test_distinct_keys_differ():
    assert not np.array_equal(rng.uniform(1, "x", 0, 5), rng.uniform(1, "x", 1, 5))
    assert not np.array_equal(rng.uniform(1, "x", 0, 5), rng.uniform(2, "x", 0, 5))


def test_normal_prefix_stable():
    long = rng.standard_normal(3, "t", 0, 101)
    np.testing.assert_array_equal(rng.standard_normal(3, "t", 0, 7), long[:7])


def test_box_muller_moments():
    z = rng.standard_normal(0, "moments", 0, 200_000)
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 0.02
    assert np.all(np.isfinite(z))
