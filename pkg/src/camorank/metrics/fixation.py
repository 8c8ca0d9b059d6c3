"""Fixation / discriminative-region prediction metrics.

Distribution metrics (SIM, CC, KLD, EMD) compare the two maps after
normalizing each to sum 1 (an all-zero map becomes uniform). Point metrics
(NSS, AUC_Judd, AUC_Borji, shuffled AUC) compare the prediction against
discrete fixation points given as (x, y) = (column, row) pairs.

All AUC variants use the Mann-Whitney form of the exhaustive-threshold ROC
(ties count 1/2), which makes them exact and deterministic:

* AUC_Judd: positives = prediction values at fixated pixels, negatives =
  values at every other pixel;
* AUC_Borji: negatives = values at all pixels (the limit of uniform random
  negative sampling);
* shuffled AUC: negatives = values at fixation points taken from *other*
  images, re-sampled ``n_shuffles`` times with a seeded generator.

EMD is the exact optimal-transport cost with Euclidean pixel-distance
ground metric, solved as a linear program. Grids larger than
``exact_limit`` (32) on a side are block-averaged down to at most
``coarse_size`` (16) cells per side first, with distances kept in original
pixel units.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix
from scipy.stats import rankdata

__all__ = [
    "sim",
    "cc",
    "kld",
    "emd",
    "nss",
    "auc_judd",
    "auc_borji",
    "shuffled_auc",
    "fixation_metrics",
    "as_distribution",
]

_EPS_LOG = 1e-12


def _check_map(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D map")
    if (a < 0).any():
        raise ValueError(f"{name}: density maps must be nonnegative")
    return a


def _check_same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def as_distribution(a) -> np.ndarray:
    """Normalize a nonnegative map to sum 1; an all-zero map becomes uniform."""
    a = _check_map(a, "map")
    s = a.sum()
    if s > 0:
        return a / s
    return np.full(a.shape, 1.0 / a.size)


def _check_points(points, shape) -> np.ndarray:
    pts = np.asarray(points)
    if pts.size == 0:
        raise ValueError("point-based metrics need at least one fixation point")
    pts = pts.reshape(-1, 2).astype(np.int64)
    h, w = shape
    if (pts[:, 0] < 0).any() or (pts[:, 0] >= w).any() \
            or (pts[:, 1] < 0).any() or (pts[:, 1] >= h).any():
        raise ValueError(f"fixation points outside the {w}x{h} map")
    return pts


def sim(pred, gt) -> float:
    """Histogram intersection of the two normalized maps, in [0, 1]."""
    p, q = as_distribution(pred), as_distribution(gt)
    _check_same_shape(p, q)
    return float(np.minimum(p, q).sum())


def cc(pred, gt) -> float:
    """Pearson linear correlation between the two normalized maps."""
    p, q = as_distribution(pred), as_distribution(gt)
    _check_same_shape(p, q)
    if p.std() == 0 or q.std() == 0:
        return 0.0
    return float(np.corrcoef(p.ravel(), q.ravel())[0, 1])


def kld(pred, gt) -> float:
    """KL divergence of the prediction from the ground-truth distribution,
    sum gt * log((gt + eps) / (pred + eps))."""
    p, q = as_distribution(pred), as_distribution(gt)
    _check_same_shape(p, q)
    return float((q * np.log((q + _EPS_LOG) / (p + _EPS_LOG))).sum())


def _block_reduce_sum(a: np.ndarray, factor: int) -> np.ndarray:
    h, w = a.shape
    ph = (-h) % factor
    pw = (-w) % factor
    if ph or pw:
        a = np.pad(a, ((0, ph), (0, pw)))
    h2, w2 = a.shape
    return a.reshape(h2 // factor, factor, w2 // factor, factor).sum(axis=(1, 3))


def _transport_cost(a_mass, a_xy, b_mass, b_xy) -> float:
    """Exact optimal-transport cost between two weighted point sets."""
    na, nb = len(a_mass), len(b_mass)
    diff = a_xy[:, None, :] - b_xy[None, :, :]
    cost = np.sqrt((diff ** 2).sum(axis=2)).ravel()
    rows, cols, vals = [], [], []
    for i in range(na):
        rows.extend([i] * nb)
        cols.extend(range(i * nb, (i + 1) * nb))
        vals.extend([1.0] * nb)
    for j in range(nb):
        rows.extend([na + j] * na)
        cols.extend(range(j, na * nb, nb))
        vals.extend([1.0] * na)
    a_eq = coo_matrix((vals, (rows, cols)), shape=(na + nb, na * nb))
    b_eq = np.concatenate([a_mass, b_mass])
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def emd(pred, gt, exact_limit: int = 32, coarse_size: int = 16) -> float:
    """Earth mover's distance between the two normalized maps, in pixels."""
    p, q = as_distribution(pred), as_distribution(gt)
    _check_same_shape(p, q)
    factor = 1
    if max(p.shape) > exact_limit:
        factor = math.ceil(max(p.shape) / coarse_size)
        p = _block_reduce_sum(p, factor)
        q = _block_reduce_sum(q, factor)
    ar, ac = np.nonzero(p)
    br, bc = np.nonzero(q)
    # cell centers in original pixel units
    a_xy = np.stack([ar, ac], axis=1).astype(np.float64) * factor
    b_xy = np.stack([br, bc], axis=1).astype(np.float64) * factor
    return _transport_cost(p[ar, ac], a_xy, q[br, bc], b_xy)


def nss(pred, gt_points) -> float:
    """Mean z-scored prediction value at the fixation points."""
    pred = _check_map(pred, "pred")
    pts = _check_points(gt_points, pred.shape)
    std = pred.std()
    if std == 0:
        return 0.0
    z = (pred - pred.mean()) / std
    return float(z[pts[:, 1], pts[:, 0]].mean())


def _mann_whitney_auc(pos: np.ndarray, neg: np.ndarray) -> float:
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("AUC needs both positive and negative samples")
    ranks = rankdata(np.concatenate([pos, neg]))
    r_pos = ranks[: len(pos)].sum()
    return float((r_pos - len(pos) * (len(pos) + 1) / 2.0) / (len(pos) * len(neg)))


def auc_judd(pred, gt_points) -> float:
    """ROC AUC of fixated pixels against all non-fixated pixels."""
    pred = _check_map(pred, "pred")
    pts = _check_points(gt_points, pred.shape)
    fix_mask = np.zeros(pred.shape, dtype=bool)
    fix_mask[pts[:, 1], pts[:, 0]] = True
    pos = pred[fix_mask]
    neg = pred[~fix_mask]
    return _mann_whitney_auc(pos, neg)


def auc_borji(pred, gt_points) -> float:
    """ROC AUC of fixated pixels against the whole map (uniform negatives)."""
    pred = _check_map(pred, "pred")
    pts = _check_points(gt_points, pred.shape)
    pos = pred[pts[:, 1], pts[:, 0]]
    return _mann_whitney_auc(pos, pred.ravel())


def shuffled_auc(pred, gt_points, shuffle_points, n_shuffles: int = 100,
                 seed: int = 0) -> float:
    """ROC AUC with negatives drawn from other images' fixation points.

    Each round samples min(n_pos, pool size) pool points without
    replacement; rounds are averaged. Deterministic given ``seed``.
    """
    pred = _check_map(pred, "pred")
    pts = _check_points(gt_points, pred.shape)
    pool = _check_points(shuffle_points, pred.shape)
    pos = pred[pts[:, 1], pts[:, 0]]
    n_neg = min(len(pos), len(pool))
    rng = np.random.default_rng(seed)
    scores = []
    for _ in range(n_shuffles):
        idx = rng.choice(len(pool), size=n_neg, replace=False)
        neg = pred[pool[idx, 1], pool[idx, 0]]
        scores.append(_mann_whitney_auc(pos, neg))
    return float(np.mean(scores))


def fixation_metrics(pred, gt_density, gt_points, shuffle_points=None,
                     n_shuffles: int = 100, seed: int = 0) -> dict:
    """All eight fixation metrics as a dict.

    ``sAUC`` is None when no cross-image shuffle pool is supplied.
    """
    pred = _check_map(pred, "pred")
    gt_density = _check_map(gt_density, "gt_density")
    _check_same_shape(pred, gt_density)
    out = {
        "SIM": sim(pred, gt_density),
        "CC": cc(pred, gt_density),
        "EMD": emd(pred, gt_density),
        "KLD": kld(pred, gt_density),
        "NSS": nss(pred, gt_points),
        "AUC_J": auc_judd(pred, gt_points),
        "AUC_B": auc_borji(pred, gt_points),
    }
    if shuffle_points is not None and len(np.asarray(shuffle_points)) > 0:
        out["sAUC"] = shuffled_auc(pred, gt_points, shuffle_points,
                                   n_shuffles=n_shuffles, seed=seed)
    else:
        out["sAUC"] = None
    return out
