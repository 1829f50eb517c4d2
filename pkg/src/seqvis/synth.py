"""Synthetic moving-shapes videos with per-frame ground truth, plus dataset I/O.

A dataset on disk is one JSON file plus one raw frame file per video. The
frame file holds ``T`` frames of ``H x W`` pixels as row-major RGB8 bytes
(``T * H * W * 3`` bytes, no header).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .masks import RleDecodeError, RleMask, rle_encode
from .sequence import Annotation

SHAPES = ("circle", "rectangle", "triangle")
DEFAULT_PALETTE = {
    "circle": (220, 40, 40),
    "rectangle": (40, 200, 40),
    "triangle": (40, 90, 230),
}
BACKGROUND = (0, 0, 0)

LATE_ENTRY = "late_entry"
OCCLUDER = "occluder"

FORMAT_NAME = "seqvis-dataset"
FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


class DatasetError(ValueError):
    """Invalid dataset on disk. ``path`` locates the offending JSON field or file."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


@dataclass(frozen=True)
class ScenarioConfig:
    video_count: int = 20
    frames_per_video: int = 24
    width: int = 64
    height: int = 64
    shapes: tuple[str, ...] = SHAPES
    instances_per_video: tuple[int, int] = (2, 4)
    # half-extent of a shape in pixels; templates are (2r+1) wide
    size_range: tuple[int, int] = (4, 8)
    motion_models: tuple[str, ...] = ("linear", "sinusoidal")
    velocity_range: tuple[float, float] = (-1.5, 1.5)
    amplitude_range: tuple[float, float] = (2.0, 6.0)
    period_range: tuple[float, float] = (8.0, 24.0)
    occluder_probability: float = 0.5
    late_entry_probability: float = 0.0
    rng_seed: int = 0
    max_attempts: int = 200

    def validate(self) -> None:
        if min(self.video_count, self.frames_per_video, self.width, self.height) < 1:
            raise ConfigError("video_count, frames_per_video, width and height must be positive")
        lo, hi = self.instances_per_video
        if lo < 1 or hi < lo:
            raise ConfigError(f"invalid instances_per_video range {self.instances_per_video}")
        slo, shi = self.size_range
        if slo < 1 or shi < slo:
            raise ConfigError(f"invalid size_range {self.size_range}")
        if 2 * shi + 1 > min(self.width, self.height):
            raise ConfigError(
                f"shapes up to {2 * shi + 1}px do not fit a {self.height}x{self.width} frame"
            )
        for name in self.shapes:
            if name not in DEFAULT_PALETTE:
                raise ConfigError(f"unknown shape {name!r}; choose from {SHAPES}")
        for name in self.motion_models:
            if name not in ("linear", "sinusoidal"):
                raise ConfigError(f"unknown motion model {name!r}")
        for p in (self.occluder_probability, self.late_entry_probability):
            if not 0 <= p <= 1:
                raise ConfigError("probabilities must lie in [0, 1]")


@dataclass
class Video:
    id: str
    frames: np.ndarray  # (T, H, W, 3) uint8

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])


@dataclass
class VideoDataset:
    height: int
    width: int
    categories: list[dict]
    palette: dict[int, tuple[int, int, int]]
    videos: list[Video]
    annotations: list[Annotation]
    background: tuple[int, int, int] = BACKGROUND

    @property
    def category_ids(self) -> list[int]:
        return [int(c["id"]) for c in self.categories]

    def video(self, video_id: str) -> Video:
        for v in self.videos:
            if v.id == video_id:
                return v
        raise KeyError(video_id)

    def annotations_for(self, video_id: str) -> list[Annotation]:
        return [a for a in self.annotations if a.video_id == video_id]

    def __eq__(self, other):
        if not isinstance(other, VideoDataset):
            return NotImplemented
        return (
            self.height == other.height
            and self.width == other.width
            and self.categories == other.categories
            and self.palette == other.palette
            and tuple(self.background) == tuple(other.background)
            and len(self.videos) == len(other.videos)
            and all(
                a.id == b.id and np.array_equal(a.frames, b.frames)
                for a, b in zip(self.videos, other.videos)
            )
            and self.annotations == other.annotations
        )


# ---------------------------------------------------------------- generation


def shape_template(shape: str, size: int, aspect: float = 1.0) -> np.ndarray:
    """Boolean template of side ``2*size+1`` centred on its middle pixel."""
    yy, xx = np.mgrid[-size:size + 1, -size:size + 1]
    if shape == "circle":
        return xx * xx + yy * yy <= size * size
    if shape == "rectangle":
        half_h = max(1, int(round(size * aspect)))
        return (np.abs(yy) <= half_h) & (np.abs(xx) <= size)
    if shape == "triangle":
        # apex at the top row, base on the bottom row
        row = yy + size
        return np.abs(xx) <= row / 2.0 + 0.5
    raise ConfigError(f"unknown shape {shape!r}")


def paste(template: np.ndarray, center: tuple[int, int], height: int, width: int) -> np.ndarray:
    """Place ``template`` centred at ``center`` on an empty frame, clipping at the edges."""
    out = np.zeros((height, width), dtype=bool)
    th, tw = template.shape
    top = center[0] - th // 2
    left = center[1] - tw // 2
    r0, c0 = max(top, 0), max(left, 0)
    r1, c1 = min(top + th, height), min(left + tw, width)
    if r0 < r1 and c0 < c1:
        out[r0:r1, c0:c1] = template[r0 - top:r1 - top, c0 - left:c1 - left]
    return out


@dataclass
class _Track:
    shape: str
    template: np.ndarray
    centers: list[tuple[int, int]]
    first_frame: int = 0
    tags: tuple[str, ...] = ()
    target: Optional[int] = None  # index of the instance an occluder crosses


def _trajectory(rng: np.random.Generator, cfg: ScenarioConfig, start: np.ndarray, t0: int) -> list[tuple[int, int]]:
    motion = cfg.motion_models[int(rng.integers(len(cfg.motion_models)))]
    vel = rng.uniform(*cfg.velocity_range, size=2)
    amp = rng.uniform(*cfg.amplitude_range, size=2) if motion == "sinusoidal" else np.zeros(2)
    period = rng.uniform(*cfg.period_range)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    centers = []
    for t in range(cfg.frames_per_video):
        dt = t - t0
        pos = start + vel * dt + amp * (np.sin(2 * np.pi * dt / period + phase) - np.sin(phase))
        centers.append((int(np.rint(pos[0])), int(np.rint(pos[1]))))
    return centers


def _draw_track(rng: np.random.Generator, cfg: ScenarioConfig, shape: Optional[str] = None) -> tuple[str, np.ndarray]:
    if shape is None:
        shape = cfg.shapes[int(rng.integers(len(cfg.shapes)))]
    size = int(rng.integers(cfg.size_range[0], cfg.size_range[1] + 1))
    aspect = float(rng.uniform(0.5, 1.0))
    return shape, shape_template(shape, size, aspect)


def _rasterize(tracks: list[_Track], cfg: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Full (unoccluded) and visible masks, each of shape (N, T, H, W)."""
    n, t_len, h, w = len(tracks), cfg.frames_per_video, cfg.height, cfg.width
    full = np.zeros((n, t_len, h, w), dtype=bool)
    for i, tr in enumerate(tracks):
        entered = False
        for t in range(tr.first_frame, t_len):
            m = paste(tr.template, tr.centers[t], h, w)
            if m.any():
                entered = True
                full[i, t] = m
            elif entered:
                # left the frame; stays gone
                break
    visible = full.copy()
    above = np.zeros((t_len, h, w), dtype=bool)
    for i in range(n - 1, -1, -1):
        visible[i] &= ~above
        above |= full[i]
    return full, visible


def _acceptable(tracks: list[_Track], full: np.ndarray, visible: np.ndarray, cfg: ScenarioConfig) -> bool:
    for i, tr in enumerate(tracks):
        area = int(tr.template.sum())
        if LATE_ENTRY in tr.tags:
            for t in range(tr.first_frame, cfg.frames_per_video):
                if visible[i, t].sum() != area:
                    return False
        else:
            # fully inside and unoccluded at frame 0
            if visible[i, 0].sum() != area:
                return False
        if OCCLUDER in tr.tags:
            tgt = tr.target
            if not np.any(visible[tgt].sum(axis=(1, 2)) < full[tgt].sum(axis=(1, 2))):
                return False
    return True


def _generate_video(cfg: ScenarioConfig, video_index: int) -> tuple[np.ndarray, list[_Track], np.ndarray]:
    rng = np.random.default_rng([cfg.rng_seed, video_index])
    t_len, h, w = cfg.frames_per_video, cfg.height, cfg.width
    half = t_len // 2
    late_hi = min(t_len - 1, half + max(1, t_len // 4))
    # structure is drawn once so rejection below only resamples geometry
    n = int(rng.integers(cfg.instances_per_video[0], cfg.instances_per_video[1] + 1))
    late_flags = [half + 1 <= late_hi and rng.random() < cfg.late_entry_probability for _ in range(n)]
    with_occluder = not all(late_flags) and rng.random() < cfg.occluder_probability
    for _ in range(cfg.max_attempts):
        base, late = [], []
        for is_late in late_flags:
            shape, tmpl = _draw_track(rng, cfg)
            r = tmpl.shape[0] // 2
            t0 = int(rng.integers(half + 1, late_hi + 1)) if is_late else 0
            start = np.array([rng.integers(r, h - r), rng.integers(r, w - r)], dtype=float)
            track = _Track(shape, tmpl, _trajectory(rng, cfg, start, t0), first_frame=t0)
            if is_late:
                track.tags = (LATE_ENTRY,)
                late.append(track)
            else:
                base.append(track)
        tracks = list(base)
        if with_occluder:
            tgt = int(rng.integers(len(base)))
            others = [s for s in cfg.shapes if s != base[tgt].shape] or list(cfg.shapes)
            shape, tmpl = _draw_track(rng, cfg, others[int(rng.integers(len(others)))])
            t_cross = int(rng.integers(max(1, t_len // 3), max(2, 2 * t_len // 3 + 1)))
            t_cross = min(t_cross, t_len - 1)
            meet = np.array(base[tgt].centers[t_cross], dtype=float)
            vel = rng.uniform(*cfg.velocity_range, size=2) * 2.0
            centers = [
                (int(np.rint(meet[0] + vel[0] * (t - t_cross))), int(np.rint(meet[1] + vel[1] * (t - t_cross))))
                for t in range(t_len)
            ]
            tracks.append(_Track(shape, tmpl, centers, tags=(OCCLUDER,), target=tgt))
        tracks.extend(late)
        full, visible = _rasterize(tracks, cfg)
        if _acceptable(tracks, full, visible, cfg):
            frames = np.empty((t_len, h, w, 3), dtype=np.uint8)
            frames[...] = np.array(BACKGROUND, dtype=np.uint8)
            for i, tr in enumerate(tracks):
                frames[visible[i]] = np.array(DEFAULT_PALETTE[tr.shape], dtype=np.uint8)
            return frames, tracks, visible
    raise ConfigError(
        f"could not place instances for video {video_index} after {cfg.max_attempts} attempts; "
        "enlarge the frame or shrink the shapes"
    )


def video_name(index: int) -> str:
    return f"video_{index:03d}"


def generate_dataset(config: ScenarioConfig = ScenarioConfig()) -> VideoDataset:
    """Deterministic in ``config.rng_seed``; each video draws from its own stream."""
    config.validate()
    categories = [{"id": i + 1, "name": s} for i, s in enumerate(config.shapes)]
    cat_of = {s: i + 1 for i, s in enumerate(config.shapes)}
    palette = {cat_of[s]: DEFAULT_PALETTE[s] for s in config.shapes}
    videos, annotations = [], []
    for vi in range(config.video_count):
        frames, tracks, visible = _generate_video(config, vi)
        vid = video_name(vi)
        videos.append(Video(vid, frames))
        for i, tr in enumerate(tracks):
            masks = tuple(rle_encode(visible[i, t]) for t in range(config.frames_per_video))
            annotations.append(Annotation(len(annotations) + 1, vid, cat_of[tr.shape], masks, tr.tags))
    return VideoDataset(config.height, config.width, categories, palette, videos, annotations)


# ---------------------------------------------------------------------- I/O

_RLE_SCHEMA = {
    "type": "object",
    "required": ["size", "counts"],
    "properties": {
        "size": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
        "counts": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
}

DATASET_SCHEMA = {
    "type": "object",
    "required": ["info", "header", "videos", "annotations"],
    "properties": {
        "info": {
            "type": "object",
            "required": ["format", "version"],
            "properties": {"format": {"const": FORMAT_NAME}, "version": {"const": FORMAT_VERSION}},
        },
        "header": {
            "type": "object",
            "required": ["height", "width", "categories", "palette"],
            "properties": {
                "height": {"type": "integer", "minimum": 1},
                "width": {"type": "integer", "minimum": 1},
                "categories": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["id", "name"],
                        "properties": {"id": {"type": "integer"}, "name": {"type": "string"}},
                    },
                },
                "palette": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "array",
                        "items": {"type": "integer", "minimum": 0, "maximum": 255},
                        "minItems": 3,
                        "maxItems": 3,
                    },
                },
                "background": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 0, "maximum": 255},
                    "minItems": 3,
                    "maxItems": 3,
                },
            },
        },
        "videos": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "length", "frame_file"],
                "properties": {
                    "id": {"type": "string"},
                    "length": {"type": "integer", "minimum": 1},
                    "frame_file": {"type": "string"},
                },
            },
        },
        "annotations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "video_id", "category_id", "segmentations"],
                "properties": {
                    "id": {"type": "integer"},
                    "video_id": {"type": "string"},
                    "category_id": {"type": "integer"},
                    "tags": {"type": "array", "items": {"type": "string"}},
                    "segmentations": {"type": "array", "items": {"anyOf": [{"type": "null"}, _RLE_SCHEMA]}},
                },
            },
        },
    },
}


def dataset_to_json(ds: VideoDataset, frame_dir: str = "frames") -> dict:
    return {
        "info": {"format": FORMAT_NAME, "version": FORMAT_VERSION},
        "header": {
            "height": ds.height,
            "width": ds.width,
            "categories": [{"id": int(c["id"]), "name": c["name"]} for c in ds.categories],
            "palette": {str(k): list(v) for k, v in sorted(ds.palette.items())},
            "background": list(ds.background),
        },
        "videos": [
            {"id": v.id, "length": v.num_frames, "frame_file": f"{frame_dir}/{v.id}.rgb"} for v in ds.videos
        ],
        "annotations": [
            {
                "id": a.id,
                "video_id": a.video_id,
                "category_id": a.category_id,
                "tags": list(a.tags),
                "segmentations": [m.to_json() if m.area else None for m in a.masks],
            }
            for a in ds.annotations
        ],
    }


def save_dataset(ds: VideoDataset, path: str | Path) -> Path:
    """Write ``path`` (JSON) and the raw frame files next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    obj = dataset_to_json(ds)
    for v, rec in zip(ds.videos, obj["videos"]):
        frame_path = path.parent / rec["frame_file"]
        frame_path.parent.mkdir(parents=True, exist_ok=True)
        frame_path.write_bytes(np.ascontiguousarray(v.frames, dtype=np.uint8).tobytes())
    path.write_text(json.dumps(obj, separators=(",", ":")) + "\n")
    return path


def load_dataset(path: str | Path) -> VideoDataset:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise DatasetError(str(path), "dataset file not found") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(str(path), f"invalid JSON ({exc})") from exc
    return dataset_from_json(obj, base_dir=path.parent)


def dataset_from_json(obj: dict, base_dir: str | Path = ".") -> VideoDataset:
    validator = jsonschema.Draft7Validator(DATASET_SCHEMA)
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise DatasetError(err.json_path, err.message)

    header = obj["header"]
    h, w = header["height"], header["width"]
    categories = [{"id": c["id"], "name": c["name"]} for c in header["categories"]]
    cat_ids = {c["id"] for c in categories}
    palette = {}
    for key, rgb in header["palette"].items():
        try:
            palette[int(key)] = tuple(rgb)
        except ValueError as exc:
            raise DatasetError(f"$.header.palette.{key}", "palette keys must be category ids") from exc

    base_dir = Path(base_dir)
    videos = []
    lengths = {}
    for i, rec in enumerate(obj["videos"]):
        t_len = rec["length"]
        frame_path = base_dir / rec["frame_file"]
        try:
            raw = frame_path.read_bytes()
        except FileNotFoundError as exc:
            raise DatasetError(str(frame_path), f"frame file for video {rec['id']!r} not found") from exc
        expected = t_len * h * w * 3
        if len(raw) != expected:
            raise DatasetError(str(frame_path), f"expected {expected} bytes, found {len(raw)}")
        frames = np.frombuffer(raw, dtype=np.uint8).reshape(t_len, h, w, 3).copy()
        videos.append(Video(rec["id"], frames))
        lengths[rec["id"]] = t_len

    annotations = []
    for i, rec in enumerate(obj["annotations"]):
        where = f"$.annotations[{i}]"
        label = f"annotation id={rec['id']}"
        if rec["video_id"] not in lengths:
            raise DatasetError(f"{where}.video_id", f"{label} references unknown video {rec['video_id']!r}")
        if rec["category_id"] not in cat_ids:
            raise DatasetError(f"{where}.category_id", f"{label} has unknown category {rec['category_id']}")
        segs = rec["segmentations"]
        if len(segs) != lengths[rec["video_id"]]:
            raise DatasetError(
                f"{where}.segmentations",
                f"{label} has {len(segs)} frames, video has {lengths[rec['video_id']]}",
            )
        masks = []
        for t, seg in enumerate(segs):
            if seg is None:
                masks.append(RleMask.empty(h, w))
                continue
            try:
                m = RleMask.from_json(seg)
            except RleDecodeError as exc:
                raise DatasetError(f"{where}.segmentations[{t}]", f"{label}, frame {t}: {exc}") from exc
            if m.shape != (h, w):
                raise DatasetError(
                    f"{where}.segmentations[{t}]", f"{label}, frame {t}: size {list(m.shape)} != {[h, w]}"
                )
            masks.append(m)
        annotations.append(
            Annotation(rec["id"], rec["video_id"], rec["category_id"], tuple(masks), tuple(rec.get("tags", ())))
        )
    background = tuple(header.get("background", BACKGROUND))
    return VideoDataset(h, w, categories, palette, videos, annotations, background)
