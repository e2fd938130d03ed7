"""Disparity evaluation metrics over validity-masked ground truth."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .tensor import Tensor


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _masked_error(pred, gt, mask):
    pred, gt, mask = _as_array(pred), _as_array(gt), _as_array(mask)
    if pred.shape != gt.shape or pred.shape != mask.shape:
        raise InvalidArgumentError(
            f"shape mismatch: pred {pred.shape}, gt {gt.shape}, mask {mask.shape}"
        )
    sel = mask > 0
    if not sel.any():
        raise InvalidArgumentError("validity mask selects no pixels")
    return np.abs(pred[sel] - gt[sel]), _as_array(gt)[sel]


def epe(pred, gt, mask) -> float:
    """Mean absolute disparity error (pixels) over valid pixels."""
    err, _ = _masked_error(pred, gt, mask)
    return float(err.mean())


def pixel_error_rate(pred, gt, mask, threshold: float) -> float:
    """Percentage of valid pixels whose error strictly exceeds ``threshold``."""
    if threshold <= 0:
        raise InvalidArgumentError("threshold must be positive")
    err, _ = _masked_error(pred, gt, mask)
    return float(100.0 * (err > threshold).mean())


def d1_all(pred, gt, mask) -> float:
    """Percentage of valid pixels with error > 3 px and > 5% of ground truth
    (the KITTI outlier convention)."""
    err, gt_vals = _masked_error(pred, gt, mask)
    outlier = (err > 3.0) & (err > 0.05 * np.abs(gt_vals))
    return float(100.0 * outlier.mean())
