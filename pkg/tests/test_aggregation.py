import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdbev.aggregation import compress, concat_pillars, occupancy, to_bev_grid
from pdbev.errors import DomainError, ShapeError
from pdbev.tensors_io import GridConfig


def _random_lik(rng, shape=(4, 5, 6), zero_frac=0.3):
    lik = rng.exponential(size=shape) * rng.choice([1e-6, 1.0, 1e3], size=shape)
    empty = rng.uniform(size=shape[:2]) < zero_frac
    lik[empty] = 0.0
    return lik


class TestOccupancy:
    def test_example(self):
        lik = np.array([[[1.0, 3.0, 0.0, 0.0]]])
        np.testing.assert_allclose(occupancy(lik, 0.0)[0, 0], [0.25, 0.75, 0, 0], atol=1e-15)

    def test_already_normalized(self):
        np.testing.assert_allclose(occupancy(np.array([[[0.2, 0.6, 0.2]]]), 0.0)[0, 0], [0.2, 0.6, 0.2], atol=1e-15)

    def test_single_support(self):
        np.testing.assert_array_equal(occupancy(np.array([[[1.0, 0, 0, 0]]]), 0.0)[0, 0], [1, 0, 0, 0])

    def test_bias_by_hand(self):
        lik = np.array([[[1.0, 0.0]]])
        # (1 + .5, .5) / 2
        np.testing.assert_allclose(occupancy(lik, 0.5)[0, 0], [0.75, 0.25], atol=1e-15)

    @pytest.mark.parametrize("b_o", [0.0, 1e-3, 0.1])
    def test_empty_column_uniform(self, b_o):
        out = occupancy(np.zeros((2, 2, 5)), b_o)
        np.testing.assert_allclose(out, 0.2, atol=1e-15)

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            occupancy(-np.ones((1, 1, 2)))
        with pytest.raises(DomainError):
            occupancy(np.ones((1, 1, 2)), -1.0)

    def test_rank_checked(self):
        with pytest.raises(ShapeError):
            occupancy(np.ones((2, 2)))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 1e-3, 0.1]))
    def test_columns_sum_to_one(self, seed, b_o):
        out = occupancy(_random_lik(np.random.default_rng(seed)), b_o)
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(axis=2), 1.0, atol=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
    def test_scale_invariant_without_bias(self, seed, c):
        lik = _random_lik(np.random.default_rng(seed))
        np.testing.assert_allclose(occupancy(c * lik, 0.0), occupancy(lik, 0.0), rtol=1e-12, atol=1e-15)


class TestCompress:
    def test_example(self):
        feat = np.array([1.0, 2.0, 4.0]).reshape(1, 1, 3, 1)
        occ = np.array([0.5, 0.25, 0.25]).reshape(1, 1, 3)
        # .5*1 + .25*2 + .25*4
        assert compress(feat, occ)[0, 0, 0] == 2.0

    def test_constant_column(self):
        occ = occupancy(np.random.default_rng(2).exponential(size=(2, 2, 5)))
        np.testing.assert_allclose(compress(np.full((2, 2, 5, 1), 7.0), occ), 7.0, rtol=1e-12)

    def test_shape(self):
        out = compress(np.ones((3, 4, 5, 6)), np.full((3, 4, 5), 0.2))
        assert out.shape == (3, 4, 6)
        np.testing.assert_allclose(out, 1.0)

    def test_mismatch(self):
        with pytest.raises(ShapeError):
            compress(np.ones((3, 4, 5, 6)), np.ones((3, 4, 4)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_loop(self, seed):
        rng = np.random.default_rng(seed)
        feat = rng.normal(size=(3, 2, 4, 5))
        occ = occupancy(rng.exponential(size=(3, 2, 4)))
        expected = np.zeros((3, 2, 5))
        for x in range(3):
            for y in range(2):
                for z in range(4):
                    expected[x, y] += occ[x, y, z] * feat[x, y, z]
        np.testing.assert_allclose(compress(feat, occ), expected, rtol=1e-12, atol=1e-12)


class TestToBevGrid:
    def test_2x2_average(self):
        grid = GridConfig((0, 0, 0), (4, 4, 1), (0.5, 0.5, 1.0), (2, 2), 1.0)
        m = np.arange(16, dtype=float).reshape(4, 4, 1)
        out = to_bev_grid(m, grid)
        np.testing.assert_array_equal(out[..., 0], [[2.5, 4.5], [10.5, 12.5]])

    def test_constant_preserved(self):
        grid = GridConfig((0, 0, 0), (4, 4, 1), (0.5, 0.5, 1.0), (2, 2), 1.0)
        np.testing.assert_array_equal(to_bev_grid(np.full((4, 4, 1), 7.0), grid), np.full((2, 2, 1), 7.0))

    def test_identity_when_same_resolution(self):
        grid = GridConfig((0, 0, 0), (3, 2, 1), (1.0, 1.0, 1.0), (3, 2), 1.0)
        m = np.random.default_rng(0).normal(size=(3, 2, 4))
        np.testing.assert_array_equal(to_bev_grid(m, grid), m)

    def test_mass_preserved(self):
        grid = GridConfig((0, 0, 0), (6, 4, 1), (0.5, 0.5, 1.0), (3, 2), 1.0)
        m = np.random.default_rng(1).normal(size=(6, 4, 2))
        np.testing.assert_allclose(to_bev_grid(m, grid).sum(axis=(0, 1)) * 4, m.sum(axis=(0, 1)), rtol=1e-12)

    def test_footprint_mismatch(self):
        grid = GridConfig((0, 0, 0), (4, 4, 1), (0.5, 0.5, 1.0), (2, 2), 1.0)
        with pytest.raises(ShapeError):
            to_bev_grid(np.ones((3, 4, 1)), grid)


class TestConcatPillars:
    def test_layout(self):
        feat = np.arange(2 * 1 * 3 * 2, dtype=float).reshape(2, 1, 3, 2)
        out = concat_pillars(feat)
        assert out.shape == (2, 1, 6)
        np.testing.assert_array_equal(out[1, 0], feat[1, 0].ravel())
        np.testing.assert_array_equal(out[0, 0, 2:4], feat[0, 0, 1])

    def test_swapping_slices_swaps_blocks(self):
        feat = np.random.default_rng(4).normal(size=(2, 2, 3, 2))
        swapped = feat[:, :, [1, 0, 2]]
        a, b = concat_pillars(feat), concat_pillars(swapped)
        np.testing.assert_array_equal(b[..., 0:2], a[..., 2:4])
        np.testing.assert_array_equal(b[..., 2:4], a[..., 0:2])
        np.testing.assert_array_equal(b[..., 4:], a[..., 4:])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 4))
    def test_one_hot_compression_is_a_slice(self, seed, Z, C):
        rng = np.random.default_rng(seed)
        feat = rng.normal(size=(3, 4, Z, C))
        cat = concat_pillars(feat)
        for z in range(Z):
            occ = np.zeros((3, 4, Z))
            occ[..., z] = 1.0
            np.testing.assert_array_equal(compress(feat, occ), cat[..., z * C : (z + 1) * C])
