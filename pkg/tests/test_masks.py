import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_contour
from seqvis.masks import (
    PROB_EPS,
    RleDecodeError,
    RleMask,
    argmax_labeling,
    boundary_band,
    boundary_f,
    boundary_tolerance,
    canonical,
    contour,
    frame_iou,
    rle_decode,
    rle_encode,
    soft_aggregate,
)

grids = st.tuples(st.integers(1, 12), st.integers(1, 12)).flatmap(
    lambda hw: arrays(np.bool_, hw)
)


@pytest.mark.parametrize(
    "grid, counts",
    [
        ([[0, 0], [0, 0]], (4,)),
        ([[1, 1], [1, 1]], (0, 4)),
        ([[0, 1], [0, 0]], (2, 1, 1)),
    ],
)
def test_encode_decode_examples(grid, counts):
    grid = np.array(grid, dtype=bool)
    m = rle_encode(grid)
    assert m.counts == counts
    assert m.shape == (2, 2)
    assert np.array_equal(rle_decode(RleMask(2, 2, counts)), grid)


def test_round_trip_random_grids():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        h, w = rng.integers(1, 65, size=2)
        grid = rng.random((h, w)) < rng.random()
        m = rle_encode(grid)
        assert sum(m.counts) == h * w
        assert m.area == grid.sum()
        assert np.array_equal(rle_decode(m), grid)


@given(grids)
def test_round_trip_property(grid):
    m = rle_encode(grid)
    assert np.array_equal(m.bits, grid)
    assert canonical(m) == m
    assert RleMask.from_json(m.to_json()) == m


def test_decode_rejects_bad_sum():
    with pytest.raises(RleDecodeError) as err:
        rle_decode(RleMask(2, 2, (1, 2)))
    assert err.value.counts_sum == 3
    assert err.value.size == (2, 2)


def test_bits_are_read_only():
    m = rle_encode(np.eye(3, dtype=bool))
    with pytest.raises(ValueError):
        m.bits[0, 0] = False


def test_frame_iou_examples():
    a = np.zeros((4, 4), bool)
    a[:, :2] = True
    b = np.zeros((4, 4), bool)
    b[:2, :] = True
    assert frame_iou(rle_encode(a), rle_encode(b)) == pytest.approx(1 / 3, abs=0)
    assert frame_iou(rle_encode(a), rle_encode(a)) == 1.0
    assert frame_iou(rle_encode(a), rle_encode(~a)) == 0.0
    assert frame_iou(RleMask.empty(4, 4), RleMask.empty(4, 4)) == 0.0


def test_frame_iou_dimension_mismatch():
    with pytest.raises(ValueError):
        frame_iou(RleMask.empty(2, 2), RleMask.empty(2, 3))


@given(st.tuples(st.integers(1, 8), st.integers(1, 8)).flatmap(lambda hw: st.tuples(arrays(np.bool_, hw), arrays(np.bool_, hw))))
def test_frame_iou_matches_pixel_count(pair):
    a, b = pair
    union = np.logical_or(a, b).sum()
    want = np.logical_and(a, b).sum() / union if union else 0.0
    got = frame_iou(rle_encode(a), rle_encode(b))
    assert got == want
    assert got == frame_iou(rle_encode(b), rle_encode(a))
    assert 0.0 <= got <= 1.0


def test_soft_aggregate_single_half():
    out = soft_aggregate(np.full((1, 1, 1), 0.5))
    assert out[:, 0, 0] == pytest.approx([0.5, 0.5], abs=1e-12)


def test_soft_aggregate_two_instance_example():
    out = soft_aggregate(np.array([0.8, 0.2]).reshape(2, 1, 1))[:, 0, 0]
    assert np.round(out, 4).tolist() == [0.0429, 0.9008, 0.0563]
    assert out.sum() == pytest.approx(1.0, abs=1e-12)
    labels = argmax_labeling(out.reshape(3, 1, 1))
    assert [m.area for m in labels] == [1, 0]


def test_soft_aggregate_zero_prob_instance():
    out = soft_aggregate(np.array([0.0, 0.7]).reshape(2, 1, 1))[:, 0, 0]
    assert out[1] < 1e-4


@settings(max_examples=50)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_soft_aggregate_sums_to_one(o, seed):
    rng = np.random.default_rng(seed)
    maps = rng.random((o, 8, 8))
    maps[rng.random(maps.shape) < 0.1] = 0.0
    maps[rng.random(maps.shape) < 0.1] = 1.0
    out = soft_aggregate(maps)
    assert out.shape == (o + 1, 8, 8)
    assert np.all(out >= 0)
    assert np.abs(out.sum(axis=0) - 1).max() <= 1e-9


def test_soft_aggregate_monotone_in_own_probability():
    rng = np.random.default_rng(3)
    for _ in range(100):
        maps = rng.uniform(PROB_EPS, 1 - PROB_EPS, size=(3, 1, 1))
        raised = maps.copy()
        raised[1] = min(raised[1, 0, 0] + 0.05, 1 - PROB_EPS)
        assert soft_aggregate(raised)[2, 0, 0] >= soft_aggregate(maps)[2, 0, 0]


def test_argmax_labeling_examples():
    full = argmax_labeling(soft_aggregate(np.full((1, 3, 3), 0.9)))
    assert full[0].area == 9
    tie = argmax_labeling(soft_aggregate(np.full((1, 3, 3), 0.5)))
    assert tie[0].area == 0


def test_argmax_labeling_tie_between_instances_goes_to_lower_index():
    agg = np.zeros((3, 1, 1))
    agg[1] = agg[2] = 0.5
    a, b = argmax_labeling(agg)
    assert (a.area, b.area) == (1, 0)


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_argmax_labels_are_disjoint(o, seed):
    rng = np.random.default_rng(seed)
    masks = argmax_labeling(soft_aggregate(rng.random((o, 6, 6))))
    total = sum(m.bits.astype(int) for m in masks)
    assert total.max() <= 1


def test_boundary_band_examples():
    assert boundary_band(RleMask.empty(4, 4), 2).area == 0
    ring = boundary_band(rle_encode(np.ones((4, 4), bool)), 0)
    assert ring.area == 12
    assert not ring.bits[1:3, 1:3].any()
    dot = np.zeros((4, 4), bool)
    dot[0, 0] = True
    band = boundary_band(rle_encode(dot), 1)
    want = np.zeros((4, 4), bool)
    want[:2, :2] = True
    assert np.array_equal(band.bits, want)
    dot2 = np.zeros((5, 5), bool)
    dot2[2, 2] = True
    assert boundary_band(rle_encode(dot2), 1).area == 9


@given(grids, st.integers(0, 3))
def test_boundary_band_nested_and_contains_contour(grid, tol):
    m = rle_encode(grid)
    inner = boundary_band(m, tol).bits
    outer = boundary_band(m, tol + 1).bits
    assert not (inner & ~outer).any()
    assert np.array_equal(contour(grid), brute_contour(grid))
    assert not (contour(grid) & ~inner).any()


def test_boundary_tolerance_default_frame():
    assert boundary_tolerance(64, 64) == 1
    assert boundary_tolerance(480, 854) == 8


def test_boundary_f_identity_and_empty():
    a = np.zeros((8, 8), bool)
    a[2:6, 2:6] = True
    assert boundary_f(a, a, 1) == 1.0
    assert boundary_f(np.zeros_like(a), np.zeros_like(a), 1) == 1.0
    assert boundary_f(a, np.zeros_like(a), 1) == 0.0
    shifted = np.roll(a, 1, axis=1)
    assert boundary_f(shifted, a, 1) == 1.0
    assert boundary_f(shifted, a, 0) < 1.0
