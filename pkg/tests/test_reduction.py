import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_masks, result
from oracles import brute_nms
from seqvis.masks import RleMask, rle_encode
from seqvis.reduction import ReductionConfig, category_aware_reduce, drop_empty, reduce_sequences, sequence_nms


class Fixed:
    """Sequence stand-in with a hand-set IoU table (masks unused)."""

    def __init__(self, name, score, category_id=1, key_frame=0, slot=0):
        self.name, self.score, self.category_id = name, score, category_id
        self.key_frame, self.slot = key_frame, slot
        self.masks = (RleMask(1, 1, (0, 1)),)


def with_table(monkeypatch, table):
    def fake(a, b):
        return table.get((a.name, b.name), table.get((b.name, a.name), 0.0))
    monkeypatch.setattr("seqvis.reduction.sequence_iou", fake)


def test_three_sequence_trace(monkeypatch):
    s1, s2, s3 = Fixed("s1", 0.9), Fixed("s2", 0.8, slot=1), Fixed("s3", 0.7, slot=2)
    with_table(monkeypatch, {("s1", "s2"): 0.6, ("s1", "s3"): 0.2, ("s2", "s3"): 0.55})
    assert sequence_nms([s3, s2, s1], 0.5) == [s1, s3]


def test_threshold_is_inclusive(monkeypatch):
    a, b = Fixed("a", 0.9), Fixed("b", 0.8, slot=1)
    with_table(monkeypatch, {("a", "b"): 0.5})
    assert sequence_nms([a, b], 0.5) == [a]


def test_disjoint_kept_in_score_order():
    masks = [np.zeros((4, 4), bool) for _ in range(3)]
    for i, m in enumerate(masks):
        m[i, :] = True
    seqs = [result((rle_encode(m),), score=s, slot=i) for i, (m, s) in enumerate(zip(masks, (0.2, 0.9, 0.5)))]
    assert [s.score for s in sequence_nms(seqs)] == [0.9, 0.5, 0.2]
    assert sequence_nms(seqs[:1]) == seqs[:1]


def test_equal_scores_prefer_smaller_key():
    m = (rle_encode(np.ones((2, 2), bool)),)
    a = result(m, score=0.5, key_frame=1, slot=0)
    b = result(m, score=0.5, key_frame=0, slot=3)
    assert sequence_nms([a, b]) == [b]


def test_drop_empty_examples():
    e = (RleMask.empty(2, 2),) * 2
    dot = rle_encode(np.eye(2, dtype=bool)[:1].repeat(2, axis=0))
    one = (RleMask.empty(2, 2), dot)
    seqs = [result(e, slot=0), result(one, slot=1), result(e, slot=2), result((dot, dot), slot=3), result(e, slot=4)]
    assert [s.slot for s in drop_empty(seqs)] == [1, 3]
    assert drop_empty([result(e)]) == []


def _random_set(rng, n, t=5, h=8, w=8):
    out = []
    for i in range(n):
        score = round(float(rng.random()), 1)  # coarse, so ties happen
        out.append(result(random_masks(rng, t, h, w, rng.uniform(0.1, 0.6)), score=score, key_frame=i // 4, slot=i % 4))
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 12), st.sampled_from([0.1, 0.3, 0.5, 0.7]), st.integers(0, 2**32 - 1))
def test_nms_matches_reference(n, theta, seed):
    seqs = _random_set(np.random.default_rng(seed), n)
    got = sequence_nms(seqs, theta)
    assert got == brute_nms(seqs, theta)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_nms_invariants(n, seed):
    rng = np.random.default_rng(seed)
    seqs = _random_set(rng, n)
    kept = sequence_nms(seqs, 0.4)
    assert all(k in seqs for k in kept)
    from seqvis.sequence import sequence_iou

    assert all(sequence_iou(a, b) < 0.4 for i, a in enumerate(kept) for b in kept[i + 1:])
    shuffled = list(seqs)
    rng.shuffle(shuffled)
    assert sequence_nms(shuffled, 0.4) == kept
    assert len(sequence_nms(seqs, 0.2)) <= len(kept) <= len(sequence_nms(seqs, 0.8))


def test_category_aware_examples(monkeypatch):
    a, b = Fixed("a", 0.9), Fixed("b", 0.6, slot=1)
    with_table(monkeypatch, {("a", "b"): 0.55})
    assert category_aware_reduce([a, b], 0.5) == [a]
    c, d = Fixed("c", 0.9, category_id=1), Fixed("d", 0.6, category_id=2, slot=1)
    with_table(monkeypatch, {("c", "d"): 0.9})
    assert category_aware_reduce([d, c], 0.5) == [c, d]
    e, f = Fixed("e", 0.9), Fixed("f", 0.6, slot=1)
    with_table(monkeypatch, {("e", "f"): 0.3})
    assert category_aware_reduce([e, f], 0.5) == [e, f]


def test_reduce_sequences_pipeline():
    rng = np.random.default_rng(5)
    seqs = _random_set(rng, 10) + [result((RleMask.empty(8, 8),) * 5, score=1.0, key_frame=9)]
    kept = reduce_sequences(seqs, ReductionConfig(0.5))
    assert all(s.total_area for s in kept)
    assert reduce_sequences(seqs, ReductionConfig(0.5, max_output=2)) == kept[:2]
    assert reduce_sequences(seqs, ReductionConfig(0.5, category_aware=True)) == kept
    with pytest.raises(ValueError):
        ReductionConfig(0.0)
