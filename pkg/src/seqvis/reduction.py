"""Greedy sequence-level NMS and category-aware reduction.

Works on any sequence objects exposing ``score``, ``category_id``,
``key_frame``, ``slot`` and ``masks`` (``SequenceProposal`` and
``SequenceResult`` both do).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Optional, Sequence, TypeVar

from .sequence import sequence_iou

T = TypeVar("T")


@dataclass(frozen=True)
class ReductionConfig:
    iou_threshold: float = 0.5
    category_aware: bool = False
    max_output: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.iou_threshold <= 1:
            raise ValueError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if self.max_output is not None and self.max_output < 0:
            raise ValueError("max_output must be non-negative")


def _rank_key(s) -> tuple:
    return (-s.score, s.key_frame, s.slot)


def drop_empty(sequences: Sequence[T]) -> list[T]:
    """Remove sequences with no foreground pixel in any frame; keeps order."""
    return [s for s in sequences if any(m.area for m in s.masks)]


def sequence_nms(sequences: Sequence[T], theta: float = 0.5) -> list[T]:
    """Keep the best remaining sequence, drop everything overlapping it by >= theta, repeat.

    Equal scores are broken by the smaller ``(key_frame, slot)``.
    The result is ordered by selection, i.e. by descending score.
    """
    order = sorted(range(len(sequences)), key=lambda i: _rank_key(sequences[i]))
    suppressed = [False] * len(sequences)
    kept = []
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        kept.append(sequences[i])
        for j in order[pos + 1:]:
            if not suppressed[j] and sequence_iou(sequences[i], sequences[j]) >= theta:
                suppressed[j] = True
    return kept


def category_aware_reduce(sequences: Sequence[T], theta: float = 0.5) -> list[T]:
    """Run :func:`sequence_nms` separately inside each assigned category."""
    groups = defaultdict(list)
    for s in sequences:
        groups[s.category_id].append(s)
    out = []
    for cat in sorted(groups):
        out.extend(sequence_nms(groups[cat], theta))
    out.sort(key=_rank_key)
    return out


def reduce_sequences(sequences: Sequence[T], config: ReductionConfig = ReductionConfig()) -> list[T]:
    """Full reduction stage: drop empties, NMS, optional category-aware pass, cap."""
    kept = sequence_nms(drop_empty(sequences), config.iou_threshold)
    if config.category_aware:
        kept = category_aware_reduce(kept, config.iou_threshold)
    if config.max_output is not None:
        kept = kept[: config.max_output]
    return kept
