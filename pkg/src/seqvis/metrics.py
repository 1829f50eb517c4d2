"""Sequence AP/AR over categories and J&F with optimal matching.

AP/AR follow the detection-benchmark recipe at the sequence level: per
category and IoU threshold, predictions are taken in score order and each is
matched to the unmatched ground-truth track of highest sequence IoU in its
video. AP is the area under the precision envelope.

J&F matches at most ``max_predictions`` sequences per video to the ground
truth by maximum-weight assignment on ``(J + F) / 2``.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .masks import boundary_f, boundary_tolerance, frame_iou
from .sequence import Annotation, SequenceResult, sequence_iou

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
MAX_DETS = (1, 10, 100)
DAVIS_MAX_PREDICTIONS = 20


class EvalError(ValueError):
    pass


@dataclass
class EvalReport:
    ap: float = 0.0
    ap50: float = 0.0
    ap75: float = 0.0
    ar1: float = 0.0
    ar10: float = 0.0
    ar100: float = 0.0
    j_mean: float = 0.0
    f_mean: float = 0.0
    jf: float = 0.0
    per_video: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        if not isinstance(obj, dict):
            raise EvalError("report must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise EvalError(f"unknown report fields: {sorted(unknown)}")
        kwargs = {}
        for key in known:
            if key not in obj:
                continue
            val = obj[key]
            if key in ("per_video", "meta"):
                if not isinstance(val, dict):
                    raise EvalError(f"{key} must be an object")
            elif not isinstance(val, (int, float)) or isinstance(val, bool) or not 0 <= val <= 1:
                raise EvalError(f"{key} must be a number in [0, 1], got {val!r}")
            kwargs[key] = val
        return cls(**kwargs)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise EvalError(f"{path}: invalid JSON ({exc})") from exc


def _group(items, key):
    out = defaultdict(list)
    for x in items:
        out[key(x)].append(x)
    return out


def _by_score(preds: Sequence[SequenceResult]) -> list[SequenceResult]:
    return sorted(preds, key=lambda p: -p.score)


def envelope_ap(tp: Sequence[bool], num_gt: int) -> float:
    """Area under the interpolated precision-recall curve of a ranked list."""
    if num_gt == 0 or len(tp) == 0:
        return 0.0
    tp = np.asarray(tp, dtype=np.float64)
    hits = np.cumsum(tp)
    recall = hits / num_gt
    precision = hits / np.arange(1, len(tp) + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate(([0.0], recall)))
    return float(np.sum(steps * envelope))


def greedy_match(preds: Sequence[SequenceResult], gts: Sequence[Annotation], threshold: float, ious: Optional[dict] = None) -> list[bool]:
    """True-positive flags for ``preds`` (already in rank order) against ``gts``."""
    taken = [False] * len(gts)
    flags = []
    for p in preds:
        best, best_iou = -1, -1.0
        for g, gt in enumerate(gts):
            if taken[g]:
                continue
            iou = ious[(id(p), id(gt))] if ious is not None else sequence_iou(p, gt)
            if iou > best_iou:
                best, best_iou = g, iou
        if best >= 0 and best_iou >= threshold:
            taken[best] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def _check_videos(predictions, video_ids):
    for p in predictions:
        if p.video_id not in video_ids:
            raise EvalError(f"prediction references unknown video {p.video_id!r}")


def evaluate_ap_ar(
    predictions: Sequence[SequenceResult],
    ground_truth: Sequence[Annotation],
    video_ids: Optional[Iterable[str]] = None,
    thresholds: Sequence[float] = IOU_THRESHOLDS,
    max_dets: Sequence[int] = MAX_DETS,
) -> EvalReport:
    """AP and AR@N. As in COCO-style tools the N budget applies per (video, category)."""
    videos = set(video_ids) if video_ids is not None else {g.video_id for g in ground_truth}
    _check_videos(predictions, videos)
    ground_truth = [g for g in ground_truth if g.video_id in videos]
    gt_by = _group(ground_truth, lambda g: (g.video_id, g.category_id))
    ranked_by_video = {v: _by_score(ps) for v, ps in _group(predictions, lambda p: p.video_id).items()}
    ious = {}
    for p in predictions:
        for g in gt_by.get((p.video_id, p.category_id), ()):
            ious[(id(p), id(g))] = sequence_iou(p, g)
    categories = sorted({g.category_id for g in ground_truth})
    budget_ap = max(max_dets)

    def run(cat: int, thr: float, budget: int) -> tuple[list[float], list[bool], int]:
        scores, flags, n_gt = [], [], 0
        for v in sorted(videos):
            gts = gt_by.get((v, cat), [])
            n_gt += len(gts)
            preds = [p for p in ranked_by_video.get(v, []) if p.category_id == cat][:budget]
            scores.extend(p.score for p in preds)
            flags.extend(greedy_match(preds, gts, thr, ious))
        order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="mergesort")
        return [scores[i] for i in order], [flags[i] for i in order], n_gt

    ap = np.zeros((len(categories), len(thresholds)))
    recall = {n: np.zeros((len(categories), len(thresholds))) for n in max_dets}
    for ci, cat in enumerate(categories):
        for ti, thr in enumerate(thresholds):
            _, flags, n_gt = run(cat, thr, budget_ap)
            ap[ci, ti] = envelope_ap(flags, n_gt)
            for n in max_dets:
                hits = flags if n == budget_ap else run(cat, thr, n)[1]
                recall[n][ci, ti] = sum(hits) / n_gt
    report = EvalReport()
    if categories:
        report.ap = float(ap.mean())
        if 0.5 in thresholds:
            report.ap50 = float(ap[:, list(thresholds).index(0.5)].mean())
        if 0.75 in thresholds:
            report.ap75 = float(ap[:, list(thresholds).index(0.75)].mean())
        for n, attr in ((1, "ar1"), (10, "ar10"), (100, "ar100")):
            if n in recall:
                setattr(report, attr, float(recall[n].mean()))
    return report


def region_similarity(pred: SequenceResult, gt: Annotation) -> float:
    """Mean per-frame IoU; frames empty in both count as 1."""
    vals = [1.0 if (p.area == 0 and g.area == 0) else frame_iou(p, g) for p, g in zip(pred.masks, gt.masks)]
    return float(np.mean(vals))


def boundary_accuracy(pred: SequenceResult, gt: Annotation, tolerance: Optional[int] = None) -> float:
    """Mean per-frame boundary F-measure."""
    vals = []
    for p, g in zip(pred.masks, gt.masks):
        tol = boundary_tolerance(*g.shape) if tolerance is None else tolerance
        if p.area == 0 and g.area == 0:
            vals.append(1.0)
        elif p.area == 0 or g.area == 0:
            vals.append(0.0)
        else:
            vals.append(boundary_f(p.bits, g.bits, tol))
    return float(np.mean(vals))


def jf_matrix(preds: Sequence[SequenceResult], gts: Sequence[Annotation]) -> tuple[np.ndarray, np.ndarray]:
    j = np.zeros((len(preds), len(gts)))
    f = np.zeros((len(preds), len(gts)))
    for i, p in enumerate(preds):
        for g, gt in enumerate(gts):
            if len(p.masks) != len(gt.masks):
                raise EvalError(f"prediction for {p.video_id!r} has {len(p.masks)} frames, ground truth {len(gt.masks)}")
            j[i, g] = region_similarity(p, gt)
            f[i, g] = boundary_accuracy(p, gt)
    return j, f


def match_jf(j: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-GT (J, F) under the assignment maximising the summed ``(J + F) / 2``."""
    n_gt = j.shape[1]
    j_out = np.zeros(n_gt)
    f_out = np.zeros(n_gt)
    if j.shape[0] and n_gt:
        rows, cols = linear_sum_assignment((j + f) / 2, maximize=True)
        j_out[cols] = j[rows, cols]
        f_out[cols] = f[rows, cols]
    return j_out, f_out


def evaluate_jf(
    predictions: Sequence[SequenceResult],
    ground_truth: Sequence[Annotation],
    video_ids: Optional[Iterable[str]] = None,
    max_predictions: int = DAVIS_MAX_PREDICTIONS,
) -> EvalReport:
    videos = set(video_ids) if video_ids is not None else {g.video_id for g in ground_truth}
    _check_videos(predictions, videos)
    gt_by = _group(ground_truth, lambda g: g.video_id)
    pred_by = _group(predictions, lambda p: p.video_id)
    all_j, all_f = [], []
    per_video = {}
    for v in sorted(videos):
        gts = gt_by.get(v, [])
        preds = _by_score(pred_by.get(v, []))[:max_predictions]
        j, f = match_jf(*jf_matrix(preds, gts))
        all_j.extend(j)
        all_f.extend(f)
        if gts:
            per_video[v] = {
                "j": float(j.mean()),
                "f": float(f.mean()),
                "jf": float((j.mean() + f.mean()) / 2),
                "num_gt": len(gts),
                "num_predictions": len(pred_by.get(v, [])),
            }
    report = EvalReport(per_video=per_video)
    if all_j:
        report.j_mean = float(np.mean(all_j))
        report.f_mean = float(np.mean(all_f))
        report.jf = (report.j_mean + report.f_mean) / 2
    return report


def evaluate(
    predictions: Sequence[SequenceResult],
    ground_truth: Sequence[Annotation],
    video_ids: Optional[Iterable[str]] = None,
) -> EvalReport:
    """Both metric families in one report."""
    video_ids = list(video_ids) if video_ids is not None else None
    report = evaluate_ap_ar(predictions, ground_truth, video_ids)
    jf = evaluate_jf(predictions, ground_truth, video_ids)
    report.j_mean, report.f_mean, report.jf, report.per_video = jf.j_mean, jf.f_mean, jf.jf, jf.per_video
    return report


def instance_recall(predictions: Sequence[SequenceResult], gt: Annotation, threshold: float = 0.5) -> float:
    """1 if some prediction in the instance's video overlaps it by >= threshold, else 0."""
    for p in predictions:
        if p.video_id == gt.video_id and sequence_iou(p, gt) >= threshold:
            return 1.0
    return 0.0
