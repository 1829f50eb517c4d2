"""Scale-balanced soft IoU loss with an analytic gradient and a finite-difference check.

Predictions and targets are ``(O, H, W)`` arrays. Each instance contributes
the ratio ``sum(min(gt, pred)) / sum(max(gt, pred))`` with weight ``1/O``
regardless of its size.
"""

from __future__ import annotations

import numpy as np


def _check(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 3 or pred.shape[0] < 1:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} must share an (O, H, W) shape")
    return pred, gt


def instance_ratios(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-instance soft IoU; an instance empty in both contributes 1."""
    pred, gt = _check(pred, gt)
    num = np.minimum(gt, pred).sum(axis=(1, 2))
    den = np.maximum(gt, pred).sum(axis=(1, 2))
    ratios = np.ones_like(num)
    nz = den > 0
    ratios[nz] = num[nz] / den[nz]
    return ratios


def soft_iou_loss(pred: np.ndarray, gt: np.ndarray) -> float:
    return float(1.0 - instance_ratios(pred, gt).mean())


def soft_iou_loss_gradient(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """d loss / d pred, valid away from ties ``pred == gt``.

    Below the target only the min-sum moves, above it only the max-sum.
    """
    pred, gt = _check(pred, gt)
    n_inst = pred.shape[0]
    num = np.minimum(gt, pred).sum(axis=(1, 2))[:, None, None]
    den = np.maximum(gt, pred).sum(axis=(1, 2))[:, None, None]
    below = pred < gt
    safe_den = np.where(den > 0, den, 1.0)
    d_ratio = np.where(below, 1.0 / safe_den, -num / safe_den**2)
    d_ratio = np.where(den > 0, d_ratio, 0.0)
    return -d_ratio / n_inst


def finite_difference_gradient(pred: np.ndarray, gt: np.ndarray, instance: int, pixel: tuple[int, int], h: float = 1e-6) -> float:
    """Central difference of :func:`soft_iou_loss` w.r.t. one prediction value."""
    pred, gt = _check(pred, gt)
    r, c = pixel
    value = pred[instance, r, c]
    if not h < value < 1 - h:
        raise ValueError(f"prediction value {value} must lie in (h, 1 - h) for a central difference")
    plus = pred.copy()
    minus = pred.copy()
    plus[instance, r, c] = value + h
    minus[instance, r, c] = value - h
    return (soft_iou_loss(plus, gt) - soft_iou_loss(minus, gt)) / (2 * h)
