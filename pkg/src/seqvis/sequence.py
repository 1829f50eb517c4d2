"""Instance-sequence data model, sequence score and spatio-temporal IoU."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .masks import RleMask, intersection_area

DETECTED = "detected"
FORWARD = "propagated-forward"
BACKWARD = "propagated-backward"
PROVENANCES = (DETECTED, FORWARD, BACKWARD)


class HasMasks(Protocol):
    masks: tuple[RleMask, ...]


@dataclass(frozen=True, eq=False)
class SequenceProposal:
    """One instance's mask track over every frame, proposed from one key frame.

    ``frame_scores`` is a ``(T, C)`` array of per-frame class scores.
    """

    key_frame: int
    slot: int
    masks: tuple[RleMask, ...]
    frame_scores: np.ndarray
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        scores = np.asarray(self.frame_scores, dtype=np.float64)
        if scores.ndim != 2 or scores.shape[0] != len(self.masks):
            raise ValueError(
                f"frame_scores must have shape (T, C) with T={len(self.masks)}, got {scores.shape}"
            )
        if scores.shape[1] < 1:
            raise ValueError("at least one class is required")
        if np.any(scores < 0) or np.any(scores > 1):
            raise ValueError("class scores must lie in [0, 1]")
        if self.masks and len({m.shape for m in self.masks}) != 1:
            raise ValueError("all masks of a sequence must share one frame size")
        if self.provenance and len(self.provenance) != len(self.masks):
            raise ValueError("provenance must have one entry per frame")
        scores.setflags(write=False)
        object.__setattr__(self, "frame_scores", scores)

    @property
    def num_frames(self) -> int:
        return len(self.masks)

    @cached_property
    def _scored(self) -> tuple[float, int]:
        return sequence_score(self)

    @property
    def score(self) -> float:
        return self._scored[0]

    @property
    def category_id(self) -> int:
        """Class index of the highest mean score."""
        return self._scored[1]

    @cached_property
    def total_area(self) -> int:
        return sum(m.area for m in self.masks)


@dataclass(frozen=True)
class SequenceResult:
    """A scored sequence as written to / read from a results file."""

    video_id: str
    key_frame: int
    slot: int
    category_id: int
    score: float
    masks: tuple[RleMask, ...]

    @cached_property
    def total_area(self) -> int:
        return sum(m.area for m in self.masks)

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "key_frame": self.key_frame,
            "slot": self.slot,
            "category_id": self.category_id,
            "score": self.score,
            "segmentations": [m.to_json() if m.area else None for m in self.masks],
        }


@dataclass(frozen=True)
class Annotation:
    """Ground-truth track of one instance; absent frames hold empty masks."""

    id: int
    video_id: str
    category_id: int
    masks: tuple[RleMask, ...] = field(repr=False)
    tags: tuple[str, ...] = ()

    @cached_property
    def total_area(self) -> int:
        return sum(m.area for m in self.masks)


def sequence_score(s: SequenceProposal) -> tuple[float, int]:
    """Mean class scores over all frames, then the best class.

    Returns ``(score, class_index)``; ties resolve to the lowest index.
    """
    scores = np.asarray(s.frame_scores, dtype=np.float64)
    if scores.shape[0] < 1:
        raise ValueError("a sequence needs at least one frame")
    mean = scores.sum(axis=0) / scores.shape[0]
    best = int(np.argmax(mean))
    return float(mean[best]), best


def sequence_overlap(a: HasMasks, b: HasMasks) -> tuple[int, int]:
    """Summed intersection and union areas over all frames."""
    if len(a.masks) != len(b.masks):
        raise ValueError(f"sequence length mismatch: {len(a.masks)} vs {len(b.masks)}")
    inter = 0
    union = 0
    for ma, mb in zip(a.masks, b.masks):
        i = intersection_area(ma, mb)
        inter += i
        union += ma.area + mb.area - i
    return inter, union


def sequence_iou(a: HasMasks, b: HasMasks) -> float:
    """Summed per-frame intersections over summed per-frame unions.

    This is one ratio over the whole video, not a mean of per-frame IoUs.
    """
    inter, union = sequence_overlap(a, b)
    if union == 0:
        return 0.0
    return inter / union


def to_result(s: SequenceProposal, video_id: str, category_ids: Sequence[int] | None = None) -> SequenceResult:
    """Score a proposal; ``category_ids`` maps class index to dataset category id."""
    score, cls = sequence_score(s)
    cat = category_ids[cls] if category_ids is not None else cls
    return SequenceResult(video_id, s.key_frame, s.slot, int(cat), score, s.masks)


class ResultsError(ValueError):
    pass


def results_to_json(results: Iterable[SequenceResult]) -> list[dict]:
    return [r.to_json() for r in results]


def dump_results(results: Iterable[SequenceResult], path: str | Path) -> None:
    text = json.dumps(results_to_json(results), separators=(",", ":"))
    Path(path).write_text(text + "\n")


def results_from_json(obj: list, shape: tuple[int, int] | None = None) -> list[SequenceResult]:
    """Parse a results list. Null frames become empty masks of ``shape``.

    When ``shape`` is not given it is taken from the first non-null mask.
    """
    if not isinstance(obj, list):
        raise ResultsError("results must be a JSON list")
    if shape is None:
        for i, rec in enumerate(obj):
            for seg in rec.get("segmentations") or []:
                if seg is not None:
                    shape = (int(seg["size"][0]), int(seg["size"][1]))
                    break
            if shape is not None:
                break
    out = []
    for i, rec in enumerate(obj):
        try:
            segs = rec["segmentations"]
            masks = []
            for seg in segs:
                if seg is None:
                    if shape is None:
                        raise ResultsError("cannot infer frame size: every segmentation is null")
                    masks.append(RleMask.empty(*shape))
                else:
                    masks.append(RleMask.from_json(seg))
            out.append(
                SequenceResult(
                    video_id=str(rec["video_id"]),
                    key_frame=int(rec.get("key_frame", 0)),
                    slot=int(rec.get("slot", i)),
                    category_id=int(rec["category_id"]),
                    score=float(rec["score"]),
                    masks=tuple(masks),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ResultsError):
                raise
            raise ResultsError(f"results[{i}]: {exc}") from exc
    return out


def load_results(path: str | Path, shape: tuple[int, int] | None = None) -> list[SequenceResult]:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ResultsError(f"{path}: invalid JSON ({exc})") from exc
    return results_from_json(obj, shape)
