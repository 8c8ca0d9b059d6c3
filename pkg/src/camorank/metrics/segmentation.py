"""Binary segmentation quality metrics: MAE, mean F-measure, mean E-measure,
S-measure.

Conventions pinned here (and relied on by the test oracles):

* predictions are probability maps in [0, 1], ground truths are binary grids;
* the mean-F / mean-E binarization ladder is the 255 uniform thresholds
  k/256 for k = 1..255, binarizing with ``pred >= t``;
* the E-measure enhanced-alignment sum is divided by the pixel count N (not
  N-1), so a perfect prediction scores exactly 1;
* every S-measure region block similarity is clamped at 0, which keeps the
  alpha-blend inside [0, 1] and makes alpha in {0, 1} recover the pure
  object-aware / region-aware terms.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "mae",
    "mean_f_measure",
    "mean_e_measure",
    "s_measure",
    "object_similarity",
    "region_similarity",
    "threshold_ladder",
]

_EPS = np.finfo(np.float64).eps


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    return pred, gt


def _check_binary(gt):
    vals = np.unique(gt)
    if not np.all(np.isin(vals, (0.0, 1.0))):
        raise ValueError("ground truth must be binary (values 0/1)")


def threshold_ladder(n: int = 255) -> np.ndarray:
    """Uniform binarization thresholds strictly inside (0, 1)."""
    return np.arange(1, n + 1, dtype=np.float64) / (n + 1)


def mae(pred, gt) -> float:
    """Mean absolute error between two probability maps."""
    pred, gt = _check_pair(pred, gt)
    return float(np.abs(pred - gt).mean())


def mean_f_measure(pred, gt, beta_sq: float = 0.3) -> float:
    """F-measure averaged over the binarization ladder.

    F_beta = (1 + beta^2) P R / (beta^2 P + R), with 0 at degenerate
    thresholds (no predicted or no recovered foreground).
    """
    pred, gt = _check_pair(pred, gt)
    _check_binary(gt)
    gt_fg = gt > 0.5
    n_fg = int(gt_fg.sum())
    scores = []
    for t in threshold_ladder():
        binarized = pred >= t
        tp = float(np.logical_and(binarized, gt_fg).sum())
        n_pred = float(binarized.sum())
        if n_pred == 0 or n_fg == 0 or tp == 0:
            scores.append(0.0)
            continue
        precision = tp / n_pred
        recall = tp / n_fg
        denom = beta_sq * precision + recall
        scores.append((1.0 + beta_sq) * precision * recall / denom)
    return float(np.mean(scores))


def _enhanced_alignment(binarized: np.ndarray, gt_fg: np.ndarray) -> float:
    """One-threshold enhanced-alignment score, normalized by the pixel count."""
    n = gt_fg.size
    if not gt_fg.any():
        enhanced = 1.0 - binarized.astype(np.float64)
    elif gt_fg.all():
        enhanced = binarized.astype(np.float64)
    else:
        d_fm = binarized.astype(np.float64) - binarized.mean()
        d_gt = gt_fg.astype(np.float64) - gt_fg.mean()
        align = 2.0 * d_gt * d_fm / (d_gt * d_gt + d_fm * d_fm + _EPS)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(enhanced.sum() / n)


def mean_e_measure(pred, gt) -> float:
    """Enhanced-alignment measure averaged over the binarization ladder."""
    pred, gt = _check_pair(pred, gt)
    _check_binary(gt)
    gt_fg = gt > 0.5
    scores = [_enhanced_alignment(pred >= t, gt_fg) for t in threshold_ladder()]
    return float(np.mean(scores))


def _object_score(values: np.ndarray) -> float:
    # 2*mean / (mean^2 + 1 + std); sample std, 0 for singleton regions
    if values.size == 0:
        return 0.0
    x = float(values.mean())
    sigma = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + _EPS)


def object_similarity(pred, gt) -> float:
    """Object-aware structural similarity (foreground/background blend)."""
    pred, gt = _check_pair(pred, gt)
    _check_binary(gt)
    fg = gt > 0.5
    u = float(fg.mean())
    o_fg = _object_score(pred[fg])
    o_bg = _object_score(1.0 - pred[~fg])
    return u * o_fg + (1.0 - u) * o_bg


def _block_ssim(p: np.ndarray, g: np.ndarray) -> float:
    n = p.size
    if n == 0:
        return 0.0
    x, y = float(p.mean()), float(g.mean())
    if n > 1:
        sx = float(((p - x) ** 2).sum() / (n - 1))
        sy = float(((g - y) ** 2).sum() / (n - 1))
        sxy = float(((p - x) * (g - y)).sum() / (n - 1))
    else:
        sx = sy = sxy = 0.0
    alpha = 4.0 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0.0:
        q = alpha / (beta + _EPS)
    elif beta == 0.0:
        q = 1.0
    else:
        q = 0.0
    return max(0.0, q)


def _gt_centroid(gt_fg: np.ndarray) -> tuple[int, int]:
    h, w = gt_fg.shape
    total = gt_fg.sum()
    if total == 0:
        return h // 2, w // 2
    rows, cols = np.nonzero(gt_fg)
    # split index: block [0:Y, 0:X] contains the rounded centroid pixel
    y = int(round(rows.mean())) + 1
    x = int(round(cols.mean())) + 1
    return min(y, h), min(x, w)


def region_similarity(pred, gt) -> float:
    """Region-aware structural similarity: area-weighted block SSIM around
    the foreground centroid, each block clamped at 0."""
    pred, gt = _check_pair(pred, gt)
    _check_binary(gt)
    gt_fg = gt > 0.5
    h, w = gt_fg.shape
    y, x = _gt_centroid(gt_fg)
    blocks = [
        (slice(0, y), slice(0, x)),
        (slice(0, y), slice(x, w)),
        (slice(y, h), slice(0, x)),
        (slice(y, h), slice(x, w)),
    ]
    score = 0.0
    for rs, cs in blocks:
        p, g = pred[rs, cs], gt_fg[rs, cs].astype(np.float64)
        score += (p.size / (h * w)) * _block_ssim(p, g)
    return score


def s_measure(pred, gt, alpha: float = 0.5) -> float:
    """Structural similarity S = alpha*S_object + (1-alpha)*S_region.

    Degenerate ground truths compare the prediction mean against all-background
    (score 1 - mean) or all-foreground (score mean).
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    pred, gt = _check_pair(pred, gt)
    _check_binary(gt)
    y = float(gt.mean())
    if y == 0.0:
        return 1.0 - float(pred.mean())
    if y == 1.0:
        return float(pred.mean())
    return alpha * object_similarity(pred, gt) + (1.0 - alpha) * region_similarity(pred, gt)
