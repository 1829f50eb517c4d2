"""Frame-level detectors: a ground-truth oracle and a colour connected-components detector.

A detector is any object with ``detect(frame, frame_index) -> list[Detection]``
returning at most ``max_instances`` detections, each with a maximum class
score of at least ``score_threshold``.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np
from scipy import ndimage

from .masks import RleMask, dilate_chebyshev, rle_encode
from .sequence import Annotation

MIN_COMPONENT_AREA = 4


@dataclass(frozen=True, eq=False)
class Detection:
    mask: RleMask
    scores: np.ndarray  # (C,) class scores in [0, 1]

    @property
    def max_score(self) -> float:
        return float(np.max(self.scores))


class Detector(Protocol):
    def detect(self, frame: np.ndarray, frame_index: int) -> list[Detection]: ...


@dataclass(frozen=True)
class DetectionConfig:
    max_instances: int = 10
    score_threshold: float = 0.2
    # >0 dilates, <0 erodes GT masks by that Chebyshev radius
    morph_radius: int = 0
    score_noise: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_instances < 1:
            raise ValueError("max_instances must be >= 1")
        if not 0 <= self.score_threshold <= 1:
            raise ValueError("score_threshold must lie in [0, 1]")
        if self.score_noise < 0:
            raise ValueError("score_noise must be >= 0")


def select_top(detections: Sequence[Detection], config: DetectionConfig) -> list[Detection]:
    """Sort by max score (stable), drop those under the threshold, keep the best ``O``."""
    ranked = sorted(detections, key=lambda d: -d.max_score)
    ranked = [d for d in ranked if d.max_score >= config.score_threshold]
    return ranked[: config.max_instances]


def stable_id(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


class OracleDetector:
    """Returns the ground-truth instances visible in a frame, optionally perturbed.

    ``category_ids`` fixes the order of the class-score vector.
    """

    def __init__(self, annotations: Sequence[Annotation], category_ids: Sequence[int], config: DetectionConfig = DetectionConfig()):
        self.annotations = list(annotations)
        self.category_ids = list(category_ids)
        self.config = config
        self._index = {c: i for i, c in enumerate(self.category_ids)}

    def _rng(self, ann: Annotation, frame_index: int) -> np.random.Generator:
        return np.random.default_rng([self.config.rng_seed, stable_id(ann.video_id), ann.id, frame_index])

    def detect(self, frame: np.ndarray, frame_index: int) -> list[Detection]:
        cfg = self.config
        n_cls = len(self.category_ids)
        found = []
        for ann in self.annotations:
            gt = ann.masks[frame_index]
            if gt.area == 0:
                continue
            rng = self._rng(ann, frame_index)
            mask = gt
            if cfg.morph_radius > 0:
                mask = rle_encode(dilate_chebyshev(gt.bits, cfg.morph_radius))
            elif cfg.morph_radius < 0:
                size = 2 * -cfg.morph_radius + 1
                bits = ndimage.binary_erosion(gt.bits, structure=np.ones((size, size), dtype=bool))
                mask = rle_encode(bits)
                if mask.area == 0:
                    continue
            scores = np.zeros(n_cls)
            scores[self._index[ann.category_id]] = 1.0
            if cfg.score_noise > 0:
                scores = np.clip(scores + rng.uniform(-cfg.score_noise, cfg.score_noise, n_cls), 0.0, 1.0)
            found.append(Detection(mask, scores))
        return select_top(found, cfg)


class UnknownColorError(ValueError):
    def __init__(self, row: int, col: int, color: tuple[int, int, int]):
        super().__init__(f"pixel (row={row}, col={col}) has colour {color} that is not in the palette")
        self.row = row
        self.col = col
        self.color = color


class ComponentDetector:
    """Connected components (4-connectivity) of each palette colour.

    Same-coloured shapes that touch merge into one component.
    """

    def __init__(
        self,
        palette: Mapping[int, Sequence[int]],
        category_ids: Sequence[int],
        config: DetectionConfig = DetectionConfig(),
        background: Sequence[int] = (0, 0, 0),
        min_area: int = MIN_COMPONENT_AREA,
    ):
        self.palette = {int(k): tuple(int(x) for x in v) for k, v in palette.items()}
        self.category_ids = list(category_ids)
        self.config = config
        self.background = tuple(int(x) for x in background)
        self.min_area = min_area

    @staticmethod
    def _code(rgb) -> int:
        r, g, b = (int(x) for x in rgb)
        return (r << 16) | (g << 8) | b

    def detect(self, frame: np.ndarray, frame_index: int = 0) -> list[Detection]:
        frame = np.asarray(frame)
        codes = (frame[..., 0].astype(np.int64) << 16) | (frame[..., 1].astype(np.int64) << 8) | frame[..., 2]
        known = {self._code(self.background)}
        known.update(self._code(rgb) for rgb in self.palette.values())
        bad = ~np.isin(codes, list(known))
        if bad.any():
            r, c = (int(x) for x in np.argwhere(bad)[0])
            raise UnknownColorError(r, c, tuple(int(x) for x in frame[r, c]))

        cross = ndimage.generate_binary_structure(2, 1)
        found = []
        for idx, cat in enumerate(self.category_ids):
            rgb = self.palette.get(cat)
            if rgb is None or rgb == self.background:
                continue
            labels, n = ndimage.label(codes == self._code(rgb), structure=cross)
            for lab in range(1, n + 1):
                comp = labels == lab
                if comp.sum() < self.min_area:
                    continue
                scores = np.zeros(len(self.category_ids))
                scores[idx] = 1.0
                found.append(Detection(rle_encode(comp), scores))
        return select_top(found, self.config)
