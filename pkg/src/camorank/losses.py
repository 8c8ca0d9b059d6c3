"""Training objectives.

Two branches are trained jointly. The fixation/segmentation branch minimizes
``L_fc = L_f + lambda * L_c`` where ``L_f`` is pixel BCE on the fixation map
and ``L_c`` is the pixel-position-aware segmentation loss (edge-weighted BCE
plus edge-weighted IoU). The ranking branch minimizes
``L = L_rpn + L_rank + L_mask``: proposal classification + box regression,
similarity-prior-weighted rank classification + box regression, and mask BCE
restricted to ROIs whose target rank is not background.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

__all__ = [
    "fixation_loss",
    "structure_loss",
    "joint_loss",
    "SimilarityPrior",
    "weighted_rank_loss",
    "rpn_loss",
    "rank_head_loss",
    "mask_loss",
    "ranking_total_loss",
    "LossReport",
]

_CLAMP_EPS = 1e-7


def _as_b1hw(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 2:
        return x[None, None]
    if x.dim() == 3:
        return x[:, None]
    if x.dim() == 4:
        return x
    raise ValueError(f"expected a (h,w)/(B,h,w)/(B,1,h,w) map, got {tuple(x.shape)}")


def _pixel_bce(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    pred = pred.clamp(_CLAMP_EPS, 1.0 - _CLAMP_EPS)
    return -(gt * pred.log() + (1.0 - gt) * (1.0 - pred).log())


def fixation_loss(f_pred: torch.Tensor, f_gt: torch.Tensor) -> torch.Tensor:
    """Mean pixelwise binary cross-entropy between probability maps."""
    if f_pred.shape != f_gt.shape:
        raise ValueError(f"shape mismatch: {tuple(f_pred.shape)} vs {tuple(f_gt.shape)}")
    return _pixel_bce(f_pred, f_gt).mean()


def _auto_window(h: int, w: int) -> int:
    # 31 at the 352 reference resolution, scaled to the map, odd, >= 3
    k = int(round(31.0 * min(h, w) / 352.0))
    if k % 2 == 0:
        k += 1
    return max(k, 3)


def structure_loss(s_pred: torch.Tensor, s_gt: torch.Tensor,
                   window: int | None = None) -> torch.Tensor:
    """Pixel-position-aware segmentation loss.

    Pixels near label edges get weight 1 + 5*|local_mean(gt) - gt|; the loss
    is the weight-normalized BCE plus the weighted IoU complement.
    """
    pred = _as_b1hw(s_pred)
    gt = _as_b1hw(s_gt).to(pred.dtype)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    h, w = pred.shape[-2:]
    k = window if window is not None else _auto_window(h, w)
    # count_include_pad=False keeps the local mean of a constant map equal
    # to the constant, so a constant gt has unit weights (no edges)
    local = F.avg_pool2d(gt, k, stride=1, padding=k // 2, count_include_pad=False)
    weight = 1.0 + 5.0 * (local - gt).abs()
    bce = _pixel_bce(pred, gt)
    wbce = (weight * bce).sum(dim=(2, 3)) / weight.sum(dim=(2, 3))
    inter = (pred * gt * weight).sum(dim=(2, 3))
    union = ((pred + gt) * weight).sum(dim=(2, 3))
    wiou = 1.0 - (inter + 1.0) / (union - inter + 1.0)
    return (wbce + wiou).mean()


def joint_loss(l_f, l_c, lam: float = 1.0):
    """Fixation-plus-segmentation objective, linear blend with weight lam."""
    return l_f + lam * l_c


@dataclass(frozen=True)
class SimilarityPrior:
    """4x4 penalty matrix; entry (m, n) weights the loss of predicting rank n
    as rank m. Entries must be positive and non-decreasing in |m - n|."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"similarity prior must be 4x4, got {m.shape}")
        if (m <= 0).any():
            raise ValueError("similarity prior entries must be positive")
        for n in range(4):
            for a in range(4):
                for b in range(4):
                    if abs(a - n) > abs(b - n) and m[a, n] < m[b, n]:
                        raise ValueError(
                            "similarity prior must be monotone in rank distance"
                        )
        object.__setattr__(self, "matrix", m)

    @classmethod
    def default(cls) -> "SimilarityPrior":
        dist = np.abs(np.arange(4)[:, None] - np.arange(4)[None, :])
        return cls(matrix=0.2 + 0.1 * dist)

    @classmethod
    def uniform(cls) -> "SimilarityPrior":
        return cls(matrix=np.ones((4, 4)))

    def as_tensor(self, device=None, dtype=torch.float32) -> torch.Tensor:
        return torch.as_tensor(self.matrix, device=device, dtype=dtype)


def weighted_rank_loss(rank_logits: torch.Tensor, gt_ranks: torch.Tensor,
                       prior: SimilarityPrior | None = None) -> torch.Tensor:
    """Per-ROI cross-entropy scaled by the similarity-prior penalty of the
    (predicted argmax, ground truth) rank pair, then averaged."""
    if prior is None:
        prior = SimilarityPrior.default()
    if rank_logits.dim() != 2 or rank_logits.shape[1] != 4:
        raise ValueError(f"rank logits must be (R, 4), got {tuple(rank_logits.shape)}")
    gt_ranks = gt_ranks.long()
    if ((gt_ranks < 0) | (gt_ranks > 3)).any():
        raise ValueError("ground-truth ranks must lie in {0, 1, 2, 3}")
    ce = F.cross_entropy(rank_logits, gt_ranks, reduction="none")
    predicted = rank_logits.argmax(dim=1)
    weights = prior.as_tensor(rank_logits.device, rank_logits.dtype)[predicted, gt_ranks]
    return (ce * weights.detach()).mean()


def rpn_loss(objectness_logits: torch.Tensor, labels: torch.Tensor,
             deltas: torch.Tensor, target_deltas: torch.Tensor,
             positive: torch.Tensor) -> torch.Tensor:
    """Proposal objectness BCE plus smooth-L1 box regression on positives."""
    cls = F.binary_cross_entropy_with_logits(objectness_logits, labels.float())
    if positive.any():
        reg = F.smooth_l1_loss(deltas[positive], target_deltas[positive])
    else:
        reg = objectness_logits.sum() * 0.0
    return cls + reg


def rank_head_loss(rank_logits: torch.Tensor, gt_ranks: torch.Tensor,
                   deltas: torch.Tensor, target_deltas: torch.Tensor,
                   positive: torch.Tensor,
                   prior: SimilarityPrior | None = None) -> torch.Tensor:
    """Weighted rank classification plus smooth-L1 box regression on
    positives (the prior weights the classification term only)."""
    cls = weighted_rank_loss(rank_logits, gt_ranks, prior)
    if positive.any():
        reg = F.smooth_l1_loss(deltas[positive], target_deltas[positive])
    else:
        reg = rank_logits.sum() * 0.0
    return cls + reg


def mask_loss(mask_probs: torch.Tensor, mask_targets: torch.Tensor) -> torch.Tensor:
    """Per-pixel BCE over the positive ROIs; 0 when no ROI has a foreground
    rank (the empty supervision set)."""
    if mask_probs.numel() == 0:
        return torch.zeros((), dtype=mask_probs.dtype, device=mask_probs.device)
    if mask_probs.shape != mask_targets.shape:
        raise ValueError(
            f"mask shape mismatch: {tuple(mask_probs.shape)} vs {tuple(mask_targets.shape)}"
        )
    return _pixel_bce(mask_probs, mask_targets.to(mask_probs.dtype)).mean()


def ranking_total_loss(rpn_targets: dict, rank_targets: dict, mask_targets: dict,
                       prior: SimilarityPrior | None = None) -> dict:
    """Compose the ranking multi-task loss from matched training targets.

    Each argument is a dict of tensors as produced by the model's target
    builder; returns tensors keyed L_rpn / L_rank / L_mask / total.
    """
    l_rpn = rpn_loss(**rpn_targets)
    l_rank = rank_head_loss(**rank_targets, prior=prior)
    l_mask = mask_loss(**mask_targets)
    return {"L_rpn": l_rpn, "L_rank": l_rank, "L_mask": l_mask,
            "total": l_rpn + l_rank + l_mask}


@dataclass
class LossReport:
    """One training iteration's loss components, with the additive identities
    L_fc = L_f + lambda*L_c and L_total = L_rpn + L_rank + L_mask computed
    (not re-derived) so they hold bit-for-bit in the log."""

    L_f: float
    L_c: float
    L_fc: float
    L_rpn: float
    L_rank: float
    L_mask: float
    L_total: float
    lam: float

    @classmethod
    def build(cls, l_f: float, l_c: float, lam: float,
              l_rpn: float, l_rank: float, l_mask: float) -> "LossReport":
        return cls(
            L_f=l_f,
            L_c=l_c,
            L_fc=l_f + lam * l_c,
            L_rpn=l_rpn,
            L_rank=l_rank,
            L_mask=l_mask,
            L_total=l_rpn + l_rank + l_mask,
            lam=lam,
        )

    @property
    def objective(self) -> float:
        """The scalar actually optimized: L_fc + L_total."""
        return self.L_fc + self.L_total

    def validate(self):
        for name in ("L_f", "L_c", "L_fc", "L_rpn", "L_rank", "L_mask", "L_total"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise FloatingPointError(f"non-finite loss component {name}={v}")
            if name != "L_fc" and v < 0:
                raise FloatingPointError(f"negative loss component {name}={v}")

    def to_json_line(self, iteration: int) -> str:
        record = {
            "iter": iteration,
            "L_f": self.L_f,
            "L_c": self.L_c,
            "L_fc": self.L_fc,
            "L_rpn": self.L_rpn,
            "L_rank": self.L_rank,
            "L_mask": self.L_mask,
            "L_total": self.L_total,
            "lambda": self.lam,
            "total": self.objective,
        }
        return json.dumps(record)

    @classmethod
    def from_json_line(cls, line: str) -> "LossReport":
        d = json.loads(line)
        return cls(L_f=d["L_f"], L_c=d["L_c"], L_fc=d["L_fc"], L_rpn=d["L_rpn"],
                   L_rank=d["L_rank"], L_mask=d["L_mask"], L_total=d["L_total"],
                   lam=d["lambda"])
