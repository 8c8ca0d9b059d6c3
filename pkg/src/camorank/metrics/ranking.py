"""Camouflage-rank map quality: mean absolute rank error.

Rank maps carry per-pixel integers 0 (background), 1 (hardest), 2 (median),
3 (easiest). The metric is the plain mean of |gt - pred| over all pixels,
so confusing the easiest rank with the hardest is punished more than
confusing it with the median one.
"""

from __future__ import annotations

import numpy as np

__all__ = ["r_mae", "RANK_VALUES"]

RANK_VALUES = (0, 1, 2, 3)


def _check_rank_map(arr, name: str) -> np.ndarray:
    arr = np.asarray(arr)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise ValueError(f"{name}: rank map must hold integers")
    vals = np.unique(arr)
    if not np.all(np.isin(vals, RANK_VALUES)):
        raise ValueError(f"{name}: rank values outside {RANK_VALUES}: {vals}")
    return arr.astype(np.int64)


def r_mae(pred, gt) -> float:
    """Mean absolute difference between predicted and ground-truth rank maps."""
    pred = _check_rank_map(pred, "pred")
    gt = _check_rank_map(gt, "gt")
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    return float(np.abs(pred - gt).mean())
