import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from ordtensor.datagen import haar_orthonormal
from ordtensor.tensor import (TuckerFactors, check_rank, from_flat, frobenius_norm, hosvd,
                              infinity_norm, mode_multiply, orthonormalize, refold, to_flat,
                              tucker_compose, unfold)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def cube_1_to_8():
    return from_flat(np.arange(1, 9), (2, 2, 2))


dims_strategy = st.lists(st.integers(1, 4), min_size=1, max_size=4).map(tuple)


class TestLayout:
    def test_flat_round_trip(self):
        t = cube_1_to_8()
        assert_array_equal(to_flat(t), np.arange(1, 9))
        # first index varies fastest
        assert t[1, 0, 0] == 2 and t[0, 1, 0] == 3 and t[0, 0, 1] == 5

    def test_from_flat_length_mismatch(self):
        with pytest.raises(ValueError):
            from_flat(np.arange(7), (2, 2, 2))

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            from_flat(np.arange(0), (0, 2))


class TestUnfold:
    def test_example_mode_one(self):
        m = unfold(cube_1_to_8(), 0)
        assert_array_equal(m, [[1, 3, 5, 7], [2, 4, 6, 8]])

    def test_column_order_matches_enumeration(self, rng):
        # column index of (i_0, i_2) when unfolding mode 1 of a 3x4x2 tensor
        t = rng.normal(size=(3, 4, 2))
        m = unfold(t, 1)
        for j in range(4):
            for i0 in range(3):
                for i2 in range(2):
                    assert m[j, i0 + 3 * i2] == t[i0, j, i2]

    def test_degenerate_dims(self):
        t = from_flat([4.0, 5.0, 6.0], (3, 1, 1))
        assert_array_equal(unfold(t, 0), [[4.0], [5.0], [6.0]])

    def test_refold_example(self):
        m = np.array([[1, 3, 5, 7], [2, 4, 6, 8]])
        assert_array_equal(refold(m, 0, (2, 2, 2)), cube_1_to_8())

    def test_refold_random(self, rng):
        t = rng.normal(size=(3, 4, 2))
        assert_array_equal(refold(unfold(t, 1), 1, t.shape), t)

    def test_refold_shape_mismatch(self):
        with pytest.raises(ValueError):
            refold(np.zeros((2, 4)), 0, (2, 2, 3))

    def test_mode_out_of_range(self):
        with pytest.raises(ValueError):
            unfold(cube_1_to_8(), 3)
        with pytest.raises(ValueError):
            unfold(cube_1_to_8(), -1)

    @settings(max_examples=50, deadline=None)
    @given(dims=dims_strategy, data=st.data())
    def test_round_trip_property(self, dims, data):
        t = np.arange(np.prod(dims), dtype=float).reshape(dims)
        k = data.draw(st.integers(0, len(dims) - 1))
        m = unfold(t, k)
        assert m.shape == (dims[k], t.size // dims[k])
        assert_array_equal(refold(m, k, dims), t)


class TestModeMultiply:
    def test_identity(self, rng):
        t = rng.normal(size=(3, 4, 2))
        assert_array_equal(mode_multiply(t, np.eye(4), 1), t)

    def test_row_sum_example(self):
        out = mode_multiply(np.ones((2, 2, 2)), np.array([[1.0, 1.0]]), 0)
        assert out.shape == (1, 2, 2)
        assert_array_equal(out, 2.0)

    def test_zero_matrix(self, rng):
        out = mode_multiply(rng.normal(size=(3, 4, 2)), np.zeros((5, 2)), 2)
        assert out.shape == (3, 4, 5)
        assert not out.any()

    def test_matches_unfolding_definition(self, rng):
        t = rng.normal(size=(3, 4, 2))
        m = rng.normal(size=(6, 4))
        expected = refold(m @ unfold(t, 1), 1, (3, 6, 2))
        assert_allclose(mode_multiply(t, m, 1), expected, atol=1e-12)

    def test_inner_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            mode_multiply(rng.normal(size=(3, 4, 2)), np.ones((2, 3)), 1)

    def test_distinct_modes_commute(self, rng):
        t = rng.normal(size=(3, 4, 2))
        a = rng.normal(size=(5, 3))
        b = rng.normal(size=(2, 4))
        left = mode_multiply(mode_multiply(t, a, 0), b, 1)
        right = mode_multiply(mode_multiply(t, b, 1), a, 0)
        assert_allclose(left, right, atol=1e-12)


class TestCompose:
    def test_rank_one(self, rng):
        u, v, w = (x / np.linalg.norm(x) for x in rng.normal(size=(3, 4)))
        tf = TuckerFactors(np.full((1, 1, 1), 2.5), [u[:, None], v[:, None], w[:, None]])
        assert_allclose(tucker_compose(tf), 2.5 * np.einsum("i,j,k->ijk", u, v, w), atol=1e-14)

    def test_identity_factors(self, rng):
        core = rng.normal(size=(2, 3, 4))
        tf = TuckerFactors(core, [np.eye(2), np.eye(3), np.eye(4)])
        assert_allclose(tucker_compose(tf), core)

    def test_orthonormal_factors_preserve_norm(self, rng):
        core = rng.normal(size=(2, 2, 2))
        factors = [haar_orthonormal(rng, d, 2) for d in (5, 6, 7)]
        theta = tucker_compose(TuckerFactors(core, factors))
        assert theta.shape == (5, 6, 7)
        assert abs(frobenius_norm(theta) - frobenius_norm(core)) < 1e-10

    def test_shape_mismatch(self, rng):
        tf = TuckerFactors(rng.normal(size=(2, 2)), [np.ones((3, 2)), np.ones((3, 3))])
        with pytest.raises(ValueError):
            tucker_compose(tf)
        with pytest.raises(ValueError):
            tucker_compose(TuckerFactors(rng.normal(size=(2, 2)), [np.ones((3, 2))]))

    def test_orthonormalize_keeps_theta(self, rng):
        core = rng.normal(size=(2, 3, 2))
        factors = [rng.normal(size=(4, 2)), rng.normal(size=(5, 3)), rng.normal(size=(3, 2))]
        tf = TuckerFactors(core, factors)
        out = orthonormalize(tf, 1)
        assert_allclose(out.factors[1].T @ out.factors[1], np.eye(3), atol=1e-12)
        assert_allclose(tucker_compose(out), tucker_compose(tf), atol=1e-10)


class TestNorms:
    def test_ones(self):
        t = np.ones((2, 2, 2))
        assert frobenius_norm(t) == pytest.approx(np.sqrt(8))
        assert infinity_norm(t) == 1

    def test_zero(self):
        t = np.zeros((2, 3))
        assert frobenius_norm(t) == 0 and infinity_norm(t) == 0

    def test_single_entry(self):
        t = np.zeros((2, 2, 2))
        t[1, 0, 1] = -3
        assert frobenius_norm(t) == pytest.approx(3)
        assert infinity_norm(t) == 3


class TestHosvd:
    def test_rank_one_recovery(self, rng):
        u, v, w = rng.normal(size=(3, 5))
        t = np.einsum("i,j,k->ijk", u, v, w)
        tf = hosvd(t, (1, 1, 1))
        assert frobenius_norm(tucker_compose(tf) - t) / frobenius_norm(t) < 1e-10

    def test_full_rank_exact(self, rng):
        t = rng.normal(size=(3, 4, 2))
        tf = hosvd(t, t.shape)
        assert frobenius_norm(tucker_compose(tf) - t) / frobenius_norm(t) < 1e-10

    def test_error_monotone_in_rank(self, rng):
        t = rng.normal(size=(5, 5, 5))
        errors = [frobenius_norm(tucker_compose(hosvd(t, (r, r, r))) - t) for r in (1, 2, 3, 4, 5)]
        assert all(a >= b - 1e-12 for a, b in zip(errors, errors[1:]))

    def test_factors_orthonormal(self, rng):
        tf = hosvd(rng.normal(size=(6, 5, 4)), (3, 2, 2))
        for m in tf.factors:
            assert_allclose(m.T @ m, np.eye(m.shape[1]), atol=1e-8)

    def test_rank_exceeds_dims(self, rng):
        with pytest.raises(ValueError, match="mode 2"):
            hosvd(rng.normal(size=(3, 2, 3)), (2, 3, 2))


def test_check_rank_names_mode():
    with pytest.raises(ValueError, match="mode 3"):
        check_rank((4, 4, 4), (2, 2, 5))
    with pytest.raises(ValueError):
        check_rank((4, 4), (1, 0))
    with pytest.raises(ValueError):
        check_rank((4, 4), (1, 1, 1))
