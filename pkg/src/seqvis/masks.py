"""Binary and soft mask primitives.

Masks are stored as uncompressed run-length encodings in column-major
pixel order, starting with the (possibly empty) run of zeros::

    {"size": [H, W], "counts": [zeros, ones, zeros, ...]}

This is the same layout as the uncompressed RLE used by COCO-style tools.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

#: Probability clamp applied before soft aggregation; the odds ratio is
#: singular at 1.
PROB_EPS = 1e-5

_CROSS = ndimage.generate_binary_structure(2, 1)


class RleDecodeError(ValueError):
    """Raised for run-length encodings that do not describe a valid mask."""

    def __init__(self, message: str, size: tuple[int, int] | None = None, counts_sum: int | None = None):
        super().__init__(message)
        self.size = size
        self.counts_sum = counts_sum


@dataclass(frozen=True)
class RleMask:
    """Run-length encoded binary mask of one instance in one frame."""

    height: int
    width: int
    counts: tuple[int, ...]

    def validate(self) -> None:
        if self.height < 1 or self.width < 1:
            raise RleDecodeError(f"invalid mask size {self.height}x{self.width}", (self.height, self.width))
        if any(c < 0 for c in self.counts):
            raise RleDecodeError("negative run length", (self.height, self.width))
        total = sum(self.counts)
        if total != self.height * self.width:
            raise RleDecodeError(
                f"run lengths sum to {total}, expected {self.height * self.width} for size "
                f"{self.height}x{self.width}",
                (self.height, self.width),
                total,
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @cached_property
    def area(self) -> int:
        return int(sum(self.counts[1::2]))

    @cached_property
    def bits(self) -> np.ndarray:
        """Read-only decoded ``(H, W)`` boolean array."""
        arr = rle_decode(self)
        arr.setflags(write=False)
        return arr

    def to_json(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_json(cls, obj: dict) -> "RleMask":
        h, w = obj["size"]
        mask = cls(int(h), int(w), tuple(int(c) for c in obj["counts"]))
        mask.validate()
        return mask

    @classmethod
    def empty(cls, height: int, width: int) -> "RleMask":
        return cls(height, width, (height * width,))


def rle_encode(bitmap: np.ndarray) -> RleMask:
    """Encode an ``(H, W)`` binary grid."""
    bitmap = np.asarray(bitmap)
    if bitmap.ndim != 2 or bitmap.shape[0] < 1 or bitmap.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D grid, got shape {bitmap.shape}")
    h, w = bitmap.shape
    flat = bitmap.astype(bool).ravel(order="F")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return RleMask(h, w, tuple(runs))


def rle_decode(mask: RleMask) -> np.ndarray:
    """Decode to a fresh, writable ``(H, W)`` boolean array."""
    mask.validate()
    values = np.arange(len(mask.counts)) % 2 == 1
    flat = np.repeat(values, mask.counts)
    return flat.reshape((mask.height, mask.width), order="F")


def canonical(mask: RleMask) -> RleMask:
    """Return the canonical encoding (merges zero-length interior runs)."""
    return rle_encode(rle_decode(mask))


def _check_same_shape(a: RleMask, b: RleMask) -> None:
    if a.shape != b.shape:
        raise ValueError(f"mask dimension mismatch: {a.shape} vs {b.shape}")


def intersection_area(a: RleMask, b: RleMask) -> int:
    _check_same_shape(a, b)
    if a.area == 0 or b.area == 0:
        return 0
    return int(np.count_nonzero(a.bits & b.bits))


def frame_iou(a: RleMask, b: RleMask) -> float:
    """Mask IoU; two empty masks give 0."""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union == 0:
        return 0.0
    return inter / union


def clamp_probs(maps: np.ndarray, eps: float = PROB_EPS) -> np.ndarray:
    return np.clip(np.asarray(maps, dtype=np.float64), eps, 1.0 - eps)


def soft_aggregate(maps: np.ndarray, eps: float = PROB_EPS) -> np.ndarray:
    """Combine ``O`` per-instance probability maps with an implicit background.

    Parameters
    ----------
    maps : ndarray, shape (O, H, W)
        Per-instance foreground probabilities in [0, 1].

    Returns
    -------
    ndarray, shape (O + 1, H, W)
        Index 0 is background. Values at each pixel sum to one.
    """
    probs = clamp_probs(maps, eps)
    if probs.ndim != 3:
        raise ValueError(f"expected (O, H, W) probability maps, got shape {probs.shape}")
    background = np.prod(1.0 - probs, axis=0, keepdims=True)
    stacked = np.concatenate([background, probs], axis=0)
    odds = stacked / (1.0 - stacked)
    return odds / odds.sum(axis=0, keepdims=True)


def argmax_labeling(aggregated: np.ndarray) -> tuple[RleMask, ...]:
    """Assign each pixel to its most probable label; ties go to the lower index.

    Returns one mask per instance (background excluded); masks are disjoint.
    """
    labels = np.argmax(aggregated, axis=0)
    return tuple(rle_encode(labels == o) for o in range(1, aggregated.shape[0]))


def contour(bits: np.ndarray) -> np.ndarray:
    """Mask pixels 4-adjacent to a non-mask pixel or to the frame edge."""
    bits = np.asarray(bits, dtype=bool)
    interior = ndimage.binary_erosion(bits, structure=_CROSS, border_value=0)
    return bits & ~interior


def dilate_chebyshev(bits: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return np.asarray(bits, dtype=bool).copy()
    size = 2 * radius + 1
    return ndimage.binary_dilation(bits, structure=np.ones((size, size), dtype=bool))


def boundary_band(mask: RleMask, tolerance: int) -> RleMask:
    """Pixels within Chebyshev distance ``tolerance`` of the mask contour."""
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    if mask.area == 0:
        return RleMask.empty(mask.height, mask.width)
    return rle_encode(dilate_chebyshev(contour(mask.bits), tolerance))


def boundary_tolerance(height: int, width: int, fraction: float = 0.008) -> int:
    """Band radius used by the boundary F-measure: ``ceil(fraction * diagonal)``."""
    return int(math.ceil(fraction * math.hypot(height, width)))


def boundary_f(pred: np.ndarray, gt: np.ndarray, tolerance: int) -> float:
    """Boundary F-measure of two binary masks. Both empty gives 1."""
    pred_c = contour(pred)
    gt_c = contour(gt)
    n_pred = int(pred_c.sum())
    n_gt = int(gt_c.sum())
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    precision = np.count_nonzero(pred_c & dilate_chebyshev(gt_c, tolerance)) / n_pred
    recall = np.count_nonzero(gt_c & dilate_chebyshev(pred_c, tolerance)) / n_gt
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)

