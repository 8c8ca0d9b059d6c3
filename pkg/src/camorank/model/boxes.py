"""Box geometry: anchors, IoU, NMS, delta encoding and proposal matching.

Boxes are (x1, y1, x2, y2) in continuous input-image pixels (area =
(x2-x1)*(y2-y1), no +1). Anchors are centered on pixel centers
((i+0.5)*stride); the anchor side is scale*stride and the aspect ratio r
is height/width, keeping the area at side^2.
"""

from __future__ import annotations

import math

import torch

__all__ = [
    "iou_matrix",
    "nms",
    "encode_deltas",
    "decode_deltas",
    "clip_boxes",
    "generate_level_anchors",
    "generate_anchors",
    "match_proposals",
    "MatchResult",
]

# caps exp() in delta decoding, mirroring common detection codebases
_MAX_LOG_SCALE = math.log(1000.0 / 16.0)


def _as_boxes(b) -> torch.Tensor:
    b = torch.as_tensor(b, dtype=torch.float32)
    if b.numel() == 0:
        return b.reshape(0, 4)
    if b.dim() == 1:
        b = b[None]
    if b.shape[-1] != 4:
        raise ValueError(f"boxes must be (N, 4), got {tuple(b.shape)}")
    return b


def iou_matrix(a, b) -> torch.Tensor:
    """Pairwise intersection-over-union, (N, M)."""
    a, b = _as_boxes(a), _as_boxes(b)
    area_a = (a[:, 2] - a[:, 0]).clamp(min=0) * (a[:, 3] - a[:, 1]).clamp(min=0)
    area_b = (b[:, 2] - b[:, 0]).clamp(min=0) * (b[:, 3] - b[:, 1]).clamp(min=0)
    lt = torch.maximum(a[:, None, :2], b[None, :, :2])
    rb = torch.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = (rb - lt).clamp(min=0)
    inter = wh[..., 0] * wh[..., 1]
    union = area_a[:, None] + area_b[None, :] - inter
    return torch.where(union > 0, inter / union, torch.zeros_like(inter))


def nms(boxes, scores, iou_threshold: float) -> torch.Tensor:
    """Greedy non-maximum suppression; keeps indices, highest score first.

    A box is suppressed when its IoU with an already kept box exceeds the
    threshold, so survivors have pairwise IoU <= threshold.
    """
    boxes = _as_boxes(boxes)
    scores = torch.as_tensor(scores, dtype=torch.float32)
    order = torch.argsort(scores, descending=True)
    keep = []
    suppressed = torch.zeros(len(boxes), dtype=torch.bool)
    ious = iou_matrix(boxes, boxes)
    for idx in order.tolist():
        if suppressed[idx]:
            continue
        keep.append(idx)
        suppressed |= ious[idx] > iou_threshold
    return torch.as_tensor(keep, dtype=torch.int64)


def _to_cxcywh(boxes: torch.Tensor):
    w = boxes[:, 2] - boxes[:, 0]
    h = boxes[:, 3] - boxes[:, 1]
    cx = boxes[:, 0] + 0.5 * w
    cy = boxes[:, 1] + 0.5 * h
    return cx, cy, w, h


def encode_deltas(anchors, targets) -> torch.Tensor:
    """Regression targets (dx, dy, dw, dh) mapping anchors onto targets."""
    anchors, targets = _as_boxes(anchors), _as_boxes(targets)
    ax, ay, aw, ah = _to_cxcywh(anchors)
    tx, ty, tw, th = _to_cxcywh(targets)
    return torch.stack([
        (tx - ax) / aw,
        (ty - ay) / ah,
        torch.log(tw / aw),
        torch.log(th / ah),
    ], dim=1)


def decode_deltas(anchors, deltas) -> torch.Tensor:
    """Apply (dx, dy, dw, dh) to anchors; zero deltas return the anchors."""
    anchors = _as_boxes(anchors)
    deltas = torch.as_tensor(deltas, dtype=torch.float32).reshape(-1, 4)
    ax, ay, aw, ah = _to_cxcywh(anchors)
    cx = deltas[:, 0] * aw + ax
    cy = deltas[:, 1] * ah + ay
    w = torch.exp(deltas[:, 2].clamp(max=_MAX_LOG_SCALE)) * aw
    h = torch.exp(deltas[:, 3].clamp(max=_MAX_LOG_SCALE)) * ah
    return torch.stack([cx - 0.5 * w, cy - 0.5 * h,
                        cx + 0.5 * w, cy + 0.5 * h], dim=1)


def clip_boxes(boxes, image_size) -> torch.Tensor:
    h, w = image_size
    boxes = _as_boxes(boxes).clone()
    boxes[:, 0::2] = boxes[:, 0::2].clamp(0, float(w))
    boxes[:, 1::2] = boxes[:, 1::2].clamp(0, float(h))
    return boxes


def generate_level_anchors(feat_h: int, feat_w: int, stride: int,
                           scales=(4, 8, 16), ratios=(0.5, 1.0, 2.0)) -> torch.Tensor:
    """Anchors for one pyramid level, row-major over (y, x) then anchor index."""
    shapes = []
    for scale in scales:
        side = float(scale * stride)
        for ratio in ratios:
            shapes.append((side / math.sqrt(ratio), side * math.sqrt(ratio)))
    shapes = torch.tensor(shapes)  # (A, 2) as (w, h)
    ys = (torch.arange(feat_h, dtype=torch.float32) + 0.5) * stride
    xs = (torch.arange(feat_w, dtype=torch.float32) + 0.5) * stride
    cy, cx = torch.meshgrid(ys, xs, indexing="ij")
    centers = torch.stack([cx, cy], dim=-1).reshape(-1, 1, 2)  # (HW, 1, 2)
    half = 0.5 * shapes.reshape(1, -1, 2)                      # (1, A, 2)
    boxes = torch.cat([centers - half, centers + half], dim=-1)
    return boxes.reshape(-1, 4)


def generate_anchors(feature_shapes, strides, scales=(4, 8, 16),
                     ratios=(0.5, 1.0, 2.0)) -> torch.Tensor:
    """All-level anchors, concatenated in pyramid order."""
    per_level = [generate_level_anchors(h, w, s, scales, ratios)
                 for (h, w), s in zip(feature_shapes, strides)]
    return torch.cat(per_level, dim=0)


class MatchResult:
    """IoU-threshold labels of proposals against ground-truth boxes.

    rpn_positive uses the strict IoU > iou_pos rule; det_positive uses
    IoU >= iou_det. matched_idx is the argmax ground-truth index (valid
    wherever max_iou > 0).
    """

    def __init__(self, max_iou, matched_idx, rpn_positive, det_positive):
        self.max_iou = max_iou
        self.matched_idx = matched_idx
        self.rpn_positive = rpn_positive
        self.det_positive = det_positive


def match_proposals(proposals, gt_boxes, iou_pos: float = 0.7,
                    iou_det: float = 0.5) -> MatchResult:
    proposals = _as_boxes(proposals)
    gt_boxes = _as_boxes(gt_boxes)
    n = len(proposals)
    if len(gt_boxes) == 0:
        zeros = torch.zeros(n)
        return MatchResult(zeros, torch.full((n,), -1, dtype=torch.int64),
                           torch.zeros(n, dtype=torch.bool),
                           torch.zeros(n, dtype=torch.bool))
    ious = iou_matrix(proposals, gt_boxes)
    max_iou, matched_idx = ious.max(dim=1)
    return MatchResult(max_iou, matched_idx,
                       max_iou > iou_pos, max_iou >= iou_det)
