"""Deterministic generator: reproducibility and distribution quality."""

import numpy as np
import pytest

from sketchshape.rng import Rng


def test_same_seed_same_stream_10k():
    a = Rng(12345)
    b = Rng(12345)
    assert [a.next_u64() for _ in range(10_000)] == [b.next_u64() for _ in range(10_000)]


def test_different_seeds_differ():
    assert Rng(1).next_u64() != Rng(2).next_u64()


def test_block_matches_scalar_stream():
    scalar = Rng(99)
    block = Rng(99)
    want = [scalar.uniform() for _ in range(257)]
    got = block.uniform_block(257).tolist()
    assert want == got


def test_uniform_range():
    u = Rng(7).uniform_block(100_000)
    assert u.min() >= 0.0
    assert u.max() < 1.0


def test_uniform_matrix_is_row_major_affine():
    r1 = Rng(5)
    m = r1.uniform_matrix(3, 4, -2.0, 2.0)
    r2 = Rng(5)
    flat = r2.uniform_block(12)
    np.testing.assert_array_equal(m.ravel(), -2.0 + 4.0 * flat)
    assert m.min() >= -2.0 and m.max() < 2.0


def test_normal_moments_one_million():
    # empirical mean within 0.02 and variance within 0.05 of (0, 1)
    z = Rng(2024).normal_matrix(1_000_000, 1).ravel()
    assert abs(z.mean()) < 0.02
    assert abs(z.var() - 1.0) < 0.05


def test_normal_matrix_matches_scalar_draws():
    m = Rng(11).normal_matrix(2, 3)
    scalars = Rng(11)
    # scalar normal() consumes a full pair per call, so compare against a
    # fresh generator's block of the same total count instead
    again = Rng(11).normal_matrix(1, 6)
    np.testing.assert_array_equal(m.ravel(), again.ravel())
    assert np.isfinite(m).all()
    assert scalars.normal() == pytest.approx(m[0, 0])


def test_normal_all_finite():
    z = Rng(3).normal_matrix(10_000, 4)
    assert np.isfinite(z).all()


def test_integer_bounds_and_determinism():
    r = Rng(42)
    draws = [r.integer(10) for _ in range(1000)]
    assert min(draws) == 0
    assert max(draws) == 9
    r2 = Rng(42)
    assert draws == [r2.integer(10) for _ in range(1000)]
    with pytest.raises(ValueError):
        r.integer(0)


def test_shuffle_is_permutation_and_deterministic():
    r = Rng(8)
    items = list(range(50))
    r.shuffle(items)
    assert sorted(items) == list(range(50))
    assert items != list(range(50))
    r2 = Rng(8)
    again = list(range(50))
    r2.shuffle(again)
    assert items == again


def test_permutation_helper():
    assert sorted(Rng(3).permutation(17)) == list(range(17))
