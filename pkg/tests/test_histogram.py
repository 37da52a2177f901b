import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from domainshift.errors import DimensionMismatch, EmptyPool
from domainshift.histogram import (
    BINS_PER_CHANNEL,
    ChannelDistribution,
    FeatureDistribution,
    feature_histogram,
    image_histogram,
    pool_histogram,
)


def counting_oracle(grid):
    """Direct per-pixel counting, independent of the bincount path."""
    probs = np.zeros(3 * 256)
    h, w, _ = grid.shape
    for i in range(h):
        for j in range(w):
            for c in range(3):
                probs[c * 256 + int(grid[i, j, c])] += 1
    return probs / (3 * h * w)


def solid(color, h=2, w=2):
    g = np.zeros((h, w, 3), dtype=np.uint8)
    g[:, :] = color
    return g


def test_all_red_grid_is_delta():
    d = image_histogram(solid((255, 0, 0)))
    assert d.probs[255] == pytest.approx(1 / 3)
    assert d.probs[256] == pytest.approx(1 / 3)  # G bin 0
    assert d.probs[512] == pytest.approx(1 / 3)  # B bin 0
    assert np.count_nonzero(d.probs) == 3


def test_two_point_symmetry():
    grid = np.array([[[0, 0, 0], [255, 255, 255]]], dtype=np.uint8)
    d = image_histogram(grid)
    for c in range(3):
        assert d.probs[c * 256 + 0] == pytest.approx(1 / 6)
        assert d.probs[c * 256 + 255] == pytest.approx(1 / 6)


def test_random_grid_matches_counting_oracle():
    g = np.random.Generator(np.random.Philox(key=42))
    grid = g.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    np.testing.assert_array_equal(image_histogram(grid).probs, counting_oracle(grid))


def test_pool_singleton_equals_image_histogram():
    g = np.random.Generator(np.random.Philox(key=7))
    grid = g.integers(0, 256, size=(3, 5, 3), dtype=np.uint8)
    np.testing.assert_array_equal(
        pool_histogram([grid]).probs, image_histogram(grid).probs
    )


def test_pool_black_white_equal_mixture():
    d = pool_histogram([solid((0, 0, 0)), solid((255, 255, 255))])
    for c in range(3):
        assert d.probs[c * 256 + 0] == pytest.approx(1 / 6)
        assert d.probs[c * 256 + 255] == pytest.approx(1 / 6)


def test_pool_pixel_weighting_matches_concatenation_oracle():
    g = np.random.Generator(np.random.Philox(key=9))
    a = g.integers(0, 256, size=(1, 1, 3), dtype=np.uint8)
    b = g.integers(0, 256, size=(1, 3, 3), dtype=np.uint8)
    # oracle: treat the pool as one flat image of all 4 pixels
    flat = np.concatenate([a.reshape(-1, 3), b.reshape(-1, 3)]).reshape(1, -1, 3)
    np.testing.assert_array_equal(pool_histogram([a, b]).probs, counting_oracle(flat))


def test_pool_permutation_invariance():
    g = np.random.Generator(np.random.Philox(key=11))
    grids = [g.integers(0, 256, size=(2, 2, 3), dtype=np.uint8) for _ in range(4)]
    np.testing.assert_array_equal(
        pool_histogram(grids).probs, pool_histogram(grids[::-1]).probs
    )


def test_pool_empty_raises():
    with pytest.raises(EmptyPool):
        pool_histogram([])


def test_image_weighting_differs_on_unequal_sizes():
    a = solid((0, 0, 0), 1, 1)
    b = solid((255, 255, 255), 1, 3)
    pixel = pool_histogram([a, b]).probs
    image = pool_histogram([a, b], weighting="image").probs
    assert pixel[0] == pytest.approx(1 / 12)  # 1 of 4 pixels
    assert image[0] == pytest.approx(1 / 6)  # half of the images
    assert not np.array_equal(pixel, image)


def test_affine_rebinning_equivalence():
    # (v/255 - 0.5)/0.5 is affine and order-preserving, so binning the
    # normalized values over [-1, 1] with 256 uniform bins reproduces the
    # raw-value histogram exactly.
    g = np.random.Generator(np.random.Philox(key=13))
    grid = g.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
    raw = image_histogram(grid)
    normalized = (grid.astype(np.float64) / 255.0 - 0.5) / 0.5
    rebinned = np.zeros(768)
    for c in range(3):
        vals = normalized[:, :, c].ravel()
        idx = np.minimum(np.floor((vals + 1.0) / 2.0 * 256).astype(int), 255)
        rebinned[c * 256 : (c + 1) * 256] = np.bincount(idx, minlength=256) / (3 * vals.size)
    np.testing.assert_allclose(raw.probs, rebinned, atol=1e-15)


def test_channel_distribution_invariants_enforced():
    bad = np.zeros(768)
    bad[0] = 1.0  # whole mass in one channel block
    with pytest.raises(ValueError):
        ChannelDistribution(bad)
    with pytest.raises(DimensionMismatch):
        ChannelDistribution(np.zeros(100))


def test_channel_distribution_roundtrip():
    d = image_histogram(solid((1, 2, 3)))
    d2 = ChannelDistribution.from_dict(d.to_dict())
    np.testing.assert_array_equal(d.probs, d2.probs)


# feature histograms -------------------------------------------------------


def test_single_vector_is_delta_per_dimension():
    d = feature_histogram([[0.3, -2.0, 5.0]], bins=4)
    for j in range(3):
        block = d.probs[j * 4 : (j + 1) * 4]
        assert math.fsum(block) == pytest.approx(1 / 3)
        assert np.count_nonzero(block) == 1


def test_two_point_fixed_range():
    d = feature_histogram([[0.0], [1.0]], bins=2, ranges=(0.0, 1.0))
    np.testing.assert_allclose(d.probs, [0.5, 0.5])


def test_value_at_hi_falls_in_last_bin():
    d = feature_histogram([[1.0]], bins=4, ranges=(0.0, 1.0))
    assert d.probs[3] == pytest.approx(1.0)


def test_out_of_range_clamps_to_edges():
    d = feature_histogram([[-5.0], [7.0]], bins=3, ranges=(0.0, 1.0))
    assert d.probs[0] == pytest.approx(0.5)
    assert d.probs[2] == pytest.approx(0.5)


def test_feature_histogram_matches_loop_oracle():
    g = np.random.Generator(np.random.Philox(key=21))
    x = g.normal(size=(100, 3))
    bins = 8
    d = feature_histogram(x, bins=bins)
    oracle = np.zeros(3 * bins)
    for j in range(3):
        lo, hi = x[:, j].min(), x[:, j].max()
        for v in x[:, j]:
            k = int((v - lo) / (hi - lo) * bins)
            k = min(k, bins - 1)
            oracle[j * bins + k] += 1
    oracle /= 100 * 3
    np.testing.assert_array_equal(d.probs, oracle)


def test_feature_histogram_permutation_invariance():
    g = np.random.Generator(np.random.Philox(key=23))
    x = g.normal(size=(20, 2))
    a = feature_histogram(x, bins=5)
    b = feature_histogram(x[::-1], bins=5)
    np.testing.assert_array_equal(a.probs, b.probs)


def test_degenerate_range_becomes_delta_in_bin_zero():
    d = feature_histogram([[1.0, 3.0], [1.0, 4.0]], bins=4)
    assert d.probs[0] == pytest.approx(0.5)  # dim 0 has zero spread


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        feature_histogram([[1.0, 2.0]], bins=4, ranges=[(0, 1)] * 3)


def test_feature_distribution_roundtrip():
    d = feature_histogram([[0.1, 0.9], [0.4, 0.2]], bins=4)
    d2 = FeatureDistribution.from_dict(d.to_dict())
    np.testing.assert_array_equal(d.probs, d2.probs)
    assert d2.ranges == d.ranges


@settings(max_examples=100, deadline=None)
@given(
    hnp.arrays(
        dtype=np.uint8,
        shape=st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3)),
    )
)
def test_normalization_property(grid):
    d = image_histogram(grid)
    assert abs(math.fsum(d.probs.tolist()) - 1.0) < 1e-9
    for c in range(3):
        block = d.probs[c * BINS_PER_CHANNEL : (c + 1) * BINS_PER_CHANNEL]
        assert abs(math.fsum(block.tolist()) - 1 / 3) < 1e-9
