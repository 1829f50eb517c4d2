"""Key-frame selection and memory-based bidirectional propagation.

Each key frame seeds one run: detect instances there, then propagate them
forward to the last frame and backward to the first, reading from a memory
pool of already segmented frames. Runs are independent; their proposals are
gathered in ``(key frame, slot)`` order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
from scipy import ndimage, signal

from .detection import Detection, Detector
from .masks import RleMask, argmax_labeling, frame_iou, soft_aggregate
from .sequence import BACKWARD, DETECTED, FORWARD, Annotation, SequenceProposal

FLOOR_PROB = 1e-3
_CROSS = ndimage.generate_binary_structure(2, 1)


class ContractError(RuntimeError):
    """A detector or propagator broke its interface contract."""


def select_key_frames(num_frames: int, k: int) -> list[int]:
    """Evenly spaced key frames ``max(T // K, 1) * k``, clamped to ``T - 1`` and deduplicated."""
    if num_frames < 1 or k < 1:
        raise ValueError("num_frames and k must both be >= 1")
    step = max(num_frames // k, 1)
    out = []
    for i in range(k):
        t = min(step * i, num_frames - 1)
        if not out or out[-1] != t:
            out.append(t)
    return out


@dataclass(frozen=True)
class MemoryEntry:
    frame_index: int
    pixels: np.ndarray
    masks: tuple[RleMask, ...]


@dataclass
class MemoryPool:
    """Frames segmented so far in one propagation direction.

    The key entry is always kept. Propagated frames are appended every
    ``stride``-th step; ``capacity`` (if set) evicts the oldest non-key entry.
    """

    key_entry: MemoryEntry
    stride: int = 5
    capacity: Optional[int] = None
    entries: list[MemoryEntry] = field(default_factory=list)
    _steps: int = 0

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if not self.entries:
            self.entries = [self.key_entry]

    @property
    def num_instances(self) -> int:
        return len(self.key_entry.masks)

    def observe(self, frame_index: int, pixels: np.ndarray, masks: Sequence[RleMask]) -> bool:
        """Record one propagated frame; returns whether it was stored."""
        self._steps += 1
        if self._steps % self.stride:
            return False
        if any(e.frame_index == frame_index for e in self.entries):
            return False
        self.entries.append(MemoryEntry(frame_index, pixels, tuple(masks)))
        if self.capacity is not None:
            while len(self.entries) > max(self.capacity, 1):
                victim = next(i for i, e in enumerate(self.entries) if e is not self.key_entry)
                del self.entries[victim]
        return True


class Propagator(Protocol):
    def propagate(self, memory: MemoryPool, query: np.ndarray, frame_index: int) -> np.ndarray:
        """Return ``(O, H, W)`` instance probabilities for the query frame."""
        ...


class OraclePropagator:
    """Emits ground-truth masks for instances identified at the key frame.

    Each key-frame mask is matched to the ground-truth instance of maximal
    IoU; matches below ``match_threshold`` stay unmatched and are reported
    absent everywhere.
    """

    def __init__(self, annotations: Sequence[Annotation], match_threshold: float = 0.5, floor: float = FLOOR_PROB):
        self.annotations = list(annotations)
        self.match_threshold = match_threshold
        self.floor = floor

    def match(self, key_entry: MemoryEntry) -> list[Optional[Annotation]]:
        t = key_entry.frame_index
        out = []
        for m in key_entry.masks:
            best, best_iou = None, 0.0
            for ann in self.annotations:
                iou = frame_iou(m, ann.masks[t])
                if iou > best_iou:
                    best, best_iou = ann, iou
            out.append(best if best is not None and best_iou >= self.match_threshold else None)
        return out

    def propagate(self, memory: MemoryPool, query: np.ndarray, frame_index: int) -> np.ndarray:
        h, w = query.shape[:2]
        probs = np.full((memory.num_instances, h, w), self.floor)
        for o, ann in enumerate(self.match(memory.key_entry)):
            if ann is not None:
                probs[o][ann.masks[frame_index].bits] = 1.0 - self.floor
        return probs


@dataclass
class _Candidate:
    count: int
    fraction: float
    speed: float
    entry: MemoryEntry
    shift: tuple[int, int]


def _shift(arr: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate the first two axes by (dy, dx), filling with zeros."""
    out = np.zeros_like(arr)
    h, w = arr.shape[:2]
    src_r = slice(max(0, -dy), min(h, h - dy))
    dst_r = slice(max(0, dy), min(h, h + dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_c = slice(max(0, dx), min(w, w + dx))
    out[dst_r, dst_c] = arr[src_r, src_c]
    return out


class TranslationPropagator:
    """Tracks each instance by integer translation of a remembered mask.

    For every memory entry holding the instance, all shifts within
    ``search_radius`` are scored by how many footprint pixels keep their
    colour (squared RGB difference at most ``color_tolerance``). Among the
    shifts scoring at least ``1 - near_best`` of the best count, the one
    implying the slowest motion wins. If at least ``min_agreement`` of the
    footprint agrees, the agreeing pixels are emitted, completed to the
    4-connected same-colour regions they touch (so shapes seen partially at
    the key frame grow back). Otherwise the instance is reported absent.

    Emitted probabilities drop with the implied speed, and completed pixels
    get less than footprint pixels, so overlapping claims resolve in favour
    of the more plausible track after soft aggregation.
    """

    def __init__(
        self,
        search_radius: int = 16,
        min_agreement: float = 0.25,
        floor: float = FLOOR_PROB,
        color_tolerance: float = 0.0,
        min_pixels: int = 1,
        near_best: float = 0.2,
        complete_regions: bool = True,
    ):
        self.search_radius = search_radius
        self.min_agreement = min_agreement
        self.floor = floor
        self.color_tolerance = color_tolerance
        self.min_pixels = min_pixels
        self.near_best = near_best
        self.complete_regions = complete_regions

    def _agree(self, pixels: np.ndarray, color: np.ndarray) -> np.ndarray:
        diff = pixels.astype(np.int64) - color.astype(np.int64)
        return (diff * diff).sum(axis=-1) <= self.color_tolerance

    def _counts(self, entry: MemoryEntry, bits: np.ndarray, query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Agreeing-pixel count for every shift, and the footprint colours."""
        rad = self.search_radius
        rows = np.flatnonzero(bits.any(axis=1))
        cols = np.flatnonzero(bits.any(axis=0))
        r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
        src = entry.pixels[r0:r1, c0:c1]
        foot = bits[r0:r1, c0:c1]
        colors = np.unique(src[foot].reshape(-1, 3), axis=0)
        counts = np.zeros((2 * rad + 1, 2 * rad + 1), dtype=np.int64)
        for color in colors:
            kernel = (foot & np.all(src == color, axis=-1)).astype(np.int64)
            agree = np.pad(self._agree(query, color).astype(np.int64), rad)
            window = agree[r0:r1 + 2 * rad, c0:c1 + 2 * rad]
            counts += signal.correlate2d(window, kernel, mode="valid")
        return counts, colors

    def _select(self, memory: MemoryPool, slot: int, query: np.ndarray, frame_index: int):
        rad = self.search_radius
        scored = []
        for entry in memory.entries:
            mask = entry.masks[slot]
            if mask.area == 0:
                continue
            counts, colors = self._counts(entry, mask.bits, query)
            scored.append((entry, mask, counts, colors))
        if not scored:
            return None
        best = max(int(c.max()) for _, _, c, _ in scored)
        if best <= 0:
            return None
        floor_count = (1.0 - self.near_best) * best
        choice = None
        for entry, mask, counts, colors in scored:
            gap = max(1, abs(frame_index - entry.frame_index))
            for i, j in zip(*np.nonzero(counts >= floor_count)):
                dy, dx = int(i) - rad, int(j) - rad
                speed = max(abs(dy), abs(dx)) / gap
                key = (speed, gap, abs(dy) + abs(dx), dy, dx)
                if choice is None or key < choice[0]:
                    choice = (key, _Candidate(int(counts[i, j]), counts[i, j] / mask.area, speed, entry, (dy, dx)), mask, colors)
        return choice[1:]

    def propagate(self, memory: MemoryPool, query: np.ndarray, frame_index: int) -> np.ndarray:
        h, w = query.shape[:2]
        probs = np.full((memory.num_instances, h, w), self.floor)
        for o in range(memory.num_instances):
            picked = self._select(memory, o, query, frame_index)
            if picked is None:
                continue
            cand, mask, colors = picked
            if cand.count < self.min_pixels or cand.fraction < self.min_agreement:
                continue
            sy, sx = cand.shift
            moved = _shift(mask.bits, sy, sx)
            moved_px = _shift(cand.entry.pixels, sy, sx)
            diff = query.astype(np.int64) - moved_px.astype(np.int64)
            core = moved & ((diff * diff).sum(axis=-1) <= self.color_tolerance)
            confidence = 1.0 - min(cand.speed / max(self.search_radius, 1), 1.0)
            p_core = 0.6 + (0.4 - self.floor) * confidence
            if self.complete_regions:
                same = np.zeros((h, w), dtype=bool)
                for color in colors:
                    same |= self._agree(query, color)
                labels, _ = ndimage.label(same, structure=_CROSS)
                touched = np.unique(labels[core & same])
                grown = np.isin(labels, touched[touched > 0]) & ~core
                probs[o][grown] = 0.55 + 0.1 * confidence
            probs[o][core] = p_core
        return probs


ClassifierHook = Callable[[np.ndarray, RleMask, int], np.ndarray]


def _to_masks(probs: np.ndarray, expected: int, shape: tuple[int, int]) -> tuple[RleMask, ...]:
    probs = np.asarray(probs)
    if probs.shape != (expected,) + shape:
        raise ContractError(f"propagator returned shape {probs.shape}, expected {(expected,) + shape}")
    return argmax_labeling(soft_aggregate(probs))


def propagate_from_key_frame(
    frames: np.ndarray,
    key_frame: int,
    detector: Detector,
    propagator: Propagator,
    max_instances: int = 10,
    stride: int = 5,
    classifier: Optional[ClassifierHook] = None,
) -> list[SequenceProposal]:
    """One run: detect at ``key_frame`` and propagate forward, then backward.

    Key-frame masks are the raw detections (they may overlap); every
    propagated frame goes through soft aggregation and argmax, so those
    masks are disjoint across slots.
    """
    t_len = frames.shape[0]
    shape = frames.shape[1:3]
    detections: list[Detection] = list(detector.detect(frames[key_frame], key_frame))
    if len(detections) > max_instances:
        raise ContractError(f"detector returned {len(detections)} instances, limit is {max_instances}")
    if not detections:
        return []
    n = len(detections)
    per_frame: list[Optional[tuple[RleMask, ...]]] = [None] * t_len
    provenance = [""] * t_len
    key_masks = tuple(d.mask for d in detections)
    per_frame[key_frame] = key_masks
    provenance[key_frame] = DETECTED
    key_entry = MemoryEntry(key_frame, frames[key_frame], key_masks)

    for direction, indices in ((FORWARD, range(key_frame + 1, t_len)), (BACKWARD, range(key_frame - 1, -1, -1))):
        memory = MemoryPool(key_entry, stride=stride)
        for i in indices:
            masks = _to_masks(propagator.propagate(memory, frames[i], i), n, shape)
            per_frame[i] = masks
            provenance[i] = direction
            memory.observe(i, frames[i], masks)

    proposals = []
    for o, det in enumerate(detections):
        masks = tuple(per_frame[t][o] for t in range(t_len))
        scores = np.tile(np.asarray(det.scores, dtype=np.float64), (t_len, 1))
        if classifier is not None:
            for t in range(t_len):
                if t != key_frame:
                    scores[t] = classifier(frames[t], masks[t], t)
        proposals.append(SequenceProposal(key_frame, o, masks, scores, tuple(provenance)))
    return proposals


def memory_k_propagation(
    frames: np.ndarray,
    detector: Detector,
    propagator: Propagator,
    k: int = 4,
    stride: int = 5,
    max_instances: int = 10,
    classifier: Optional[ClassifierHook] = None,
) -> list[SequenceProposal]:
    """Gather proposals from every key frame; at most ``k * max_instances`` of them."""
    out = []
    for t in select_key_frames(frames.shape[0], k):
        out.extend(propagate_from_key_frame(frames, t, detector, propagator, max_instances, stride, classifier))
    return out
