"""The triple-task network: fixation map, camouflage segmentation map and
instance-level camouflage ranks from one shared backbone.

Forward path: a staged extractor feeds (a) the fixation decoder, (b) the
camouflage decoder through the reverse-attention gate (1 - F), and (c) a
feature pyramid whose proposal head and ROI heads detect instances, refine
their boxes, classify their camouflage rank (0 = background) and predict a
per-instance mask.

Checkpoints are a single zip archive holding ``meta.json`` (schema string +
architecture config) and ``weights.npz`` (named parameter tensors).
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from camorank.model import boxes as box_ops
from camorank.model.backbone import STAGE_STRIDES, StagedExtractor
from camorank.model.decoders import MapDecoder, reverse_attention
from camorank.model.ranking import (
    BoxRankHead,
    FeaturePyramid,
    MaskHead,
    RpnHead,
    roi_pool,
)

__all__ = ["ModelConfig", "InstanceProposal", "CamoRankNet",
           "save_checkpoint", "load_checkpoint", "CHECKPOINT_SCHEMA"]

CHECKPOINT_SCHEMA = "camorank-checkpoint/1"


@dataclass
class ModelConfig:
    input_size: int = 352
    backbone_widths: tuple = (16, 32, 64, 96)
    backbone_blocks: tuple = (1, 1, 1, 1)
    decoder_channels: int = 32
    aspp_dilations: tuple = (3, 6, 12, 18)
    fpn_channels: int = 32
    anchor_scales: tuple = (4, 8, 16)
    aspect_ratios: tuple = (0.5, 1.0, 2.0)
    roi_pool_size: int = 7
    mask_pool_size: int = 14
    head_dim: int = 128
    iou_pos: float = 0.7
    iou_det: float = 0.5
    nms_iou: float = 0.7
    score_threshold: float = 0.05
    pre_nms_top_n: int = 512
    post_nms_top_n: int = 64
    rois_per_image: int = 64
    positive_fraction: float = 0.25

    def __post_init__(self):
        for name in ("backbone_widths", "backbone_blocks", "aspp_dilations",
                     "anchor_scales", "aspect_ratios"):
            setattr(self, name, tuple(getattr(self, name)))
        if self.input_size % 32:
            raise ValueError("input_size must be divisible by 32")
        if not (0.0 < self.iou_det <= self.iou_pos < 1.0):
            raise ValueError("need 0 < iou_det <= iou_pos < 1")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v
                for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class InstanceProposal:
    """One candidate instance: box in input pixels, RPN objectness, rank
    logits over {0,1,2,3}, refinement deltas and a mask over the box."""

    box: tuple
    objectness: float
    rank_logits: np.ndarray
    box_deltas: np.ndarray
    mask: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return int(np.argmax(self.rank_logits))

    @property
    def score(self) -> float:
        logits = self.rank_logits - self.rank_logits.max()
        probs = np.exp(logits) / np.exp(logits).sum()
        return float(probs[self.rank])


def _sample_balanced(positive: torch.Tensor, total: int, pos_fraction: float):
    """Index sample with at most total entries at a 1:(1/f - 1) pos:neg mix."""
    pos_idx = positive.nonzero().flatten()
    neg_idx = (~positive).nonzero().flatten()
    n_pos = min(len(pos_idx), max(1, int(round(total * pos_fraction))))
    n_neg = min(len(neg_idx), total - n_pos)
    if len(pos_idx) > n_pos:
        pos_idx = pos_idx[torch.randperm(len(pos_idx))[:n_pos]]
    if len(neg_idx) > n_neg:
        neg_idx = neg_idx[torch.randperm(len(neg_idx))[:n_neg]]
    return torch.cat([pos_idx, neg_idx])


class CamoRankNet(nn.Module):
    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = config or ModelConfig()
        cfg = self.config
        widths = cfg.backbone_widths
        self.backbone = StagedExtractor(widths, cfg.backbone_blocks)
        self.fixation_decoder = MapDecoder(widths, cfg.decoder_channels,
                                           cfg.aspp_dilations)
        self.camouflage_decoder = MapDecoder(widths, cfg.decoder_channels,
                                             cfg.aspp_dilations)
        self.fpn = FeaturePyramid(widths, cfg.fpn_channels)
        num_anchors = len(cfg.anchor_scales) * len(cfg.aspect_ratios)
        self.rpn = RpnHead(cfg.fpn_channels, num_anchors)
        self.box_rank_head = BoxRankHead(cfg.fpn_channels, cfg.roi_pool_size,
                                         cfg.head_dim)
        self.mask_head = MaskHead(cfg.fpn_channels)

    # ------------------------------------------------------------------
    # dense branch
    # ------------------------------------------------------------------

    def forward(self, images: torch.Tensor) -> dict:
        """Joint dense forward: fixation and segmentation probability maps at
        input resolution, plus the shared stage features."""
        feats = self.backbone(images)
        size = images.shape[-2:]
        f_map = self.fixation_decoder(feats, size)
        guided = reverse_attention(feats, f_map)
        s_map = self.camouflage_decoder(guided, size)
        return {"fixation": f_map, "segmentation": s_map, "features": feats}

    # ------------------------------------------------------------------
    # proposal machinery
    # ------------------------------------------------------------------

    def _anchors(self, pyramid) -> torch.Tensor:
        shapes = [p.shape[-2:] for p in pyramid]
        return box_ops.generate_anchors(shapes, STAGE_STRIDES,
                                        self.config.anchor_scales,
                                        self.config.aspect_ratios)

    def _proposals_from_rpn(self, anchors, objectness, deltas, image_size,
                            top_n: int):
        """Per-image decoded, clipped, NMS-filtered proposals (no gradients)."""
        cfg = self.config
        proposals, scores = [], []
        with torch.no_grad():
            for b in range(objectness.shape[0]):
                score = torch.sigmoid(objectness[b])
                n_pre = min(cfg.pre_nms_top_n, len(score))
                top = torch.topk(score, n_pre).indices
                raw = box_ops.decode_deltas(anchors[top], deltas[b][top])
                clipped = box_ops.clip_boxes(raw, image_size)
                wide = (clipped[:, 2] - clipped[:, 0] > 1.0) & \
                       (clipped[:, 3] - clipped[:, 1] > 1.0)
                clipped, kept_scores = clipped[wide], score[top][wide]
                keep = box_ops.nms(clipped, kept_scores, cfg.nms_iou)[:top_n]
                proposals.append(clipped[keep])
                scores.append(kept_scores[keep])
        return proposals, scores

    # ------------------------------------------------------------------
    # training
    # ------------------------------------------------------------------

    def _rpn_losses_inputs(self, anchors, objectness, deltas, instances):
        cfg = self.config
        logits_all, labels_all = [], []
        deltas_all, tdeltas_all, pos_all = [], [], []
        for b, inst in enumerate(instances):
            gt = inst["boxes"]
            match = box_ops.match_proposals(anchors, gt, cfg.iou_pos, cfg.iou_det)
            positive = match.rpn_positive.clone()
            if len(gt):
                # the best anchor per ground-truth box is always positive,
                # otherwise small objects may never produce a learning signal
                best = box_ops.iou_matrix(anchors, gt).argmax(dim=0)
                positive[best] = True
            sample = _sample_balanced(positive, cfg.rois_per_image,
                                      cfg.positive_fraction)
            pos = positive[sample]
            target = torch.zeros((len(sample), 4))
            if pos.any() and len(gt):
                matched = match.matched_idx[sample][pos].clamp(min=0)
                target[pos] = box_ops.encode_deltas(anchors[sample][pos],
                                                    gt[matched])
            logits_all.append(objectness[b][sample])
            labels_all.append(pos.float())
            deltas_all.append(deltas[b][sample])
            tdeltas_all.append(target)
            pos_all.append(pos)
        return {
            "objectness_logits": torch.cat(logits_all),
            "labels": torch.cat(labels_all),
            "deltas": torch.cat(deltas_all),
            "target_deltas": torch.cat(tdeltas_all),
            "positive": torch.cat(pos_all),
        }

    def _roi_losses_inputs(self, pyramid, proposals, instances, image_size):
        cfg = self.config
        rois, rank_targets, delta_targets, positives = [], [], [], []
        mask_rois, mask_targets_list = [], []
        for b, inst in enumerate(instances):
            gt, ranks = inst["boxes"], inst["ranks"]
            props = torch.cat([proposals[b], gt]) if len(gt) else proposals[b]
            if not len(props):
                continue
            match = box_ops.match_proposals(props, gt, cfg.iou_pos, cfg.iou_det)
            sample = _sample_balanced(match.det_positive, cfg.rois_per_image,
                                      cfg.positive_fraction)
            props = props[sample]
            pos = match.det_positive[sample]
            matched = match.matched_idx[sample].clamp(min=0)
            labels = torch.where(pos, ranks[matched],
                                 torch.zeros_like(matched))
            target = torch.zeros((len(sample), 4))
            if pos.any() and len(gt):
                target[pos] = box_ops.encode_deltas(props[pos], gt[matched[pos]])
            batch_col = torch.full((len(props), 1), float(b))
            rois.append(torch.cat([batch_col, props], dim=1))
            rank_targets.append(labels)
            delta_targets.append(target)
            positives.append(pos)
            for roi, m_idx, is_pos in zip(props, matched, pos):
                if not is_pos:
                    continue
                gt_mask = inst["masks"][m_idx][None, None].float()
                row = torch.cat([torch.zeros(1), roi])[None]
                crop = roi_pool(gt_mask, row, cfg.mask_pool_size, stride=1)
                mask_targets_list.append((crop[0, 0] >= 0.5).float())
                mask_rois.append(torch.cat([batch_col[0], roi])[None])
        if not rois:
            empty = torch.zeros(0)
            return ({"rank_logits": torch.zeros((0, 4)), "gt_ranks": empty.long(),
                     "deltas": torch.zeros((0, 4)), "target_deltas": torch.zeros((0, 4)),
                     "positive": empty.bool()},
                    {"mask_probs": torch.zeros((0, 1, cfg.mask_pool_size,
                                                cfg.mask_pool_size)),
                     "mask_targets": torch.zeros((0, 1, cfg.mask_pool_size,
                                                  cfg.mask_pool_size))})
        rois = torch.cat(rois)
        pooled = roi_pool(pyramid[0], rois, cfg.roi_pool_size, STAGE_STRIDES[0])
        rank_logits, roi_deltas = self.box_rank_head(pooled)
        rank_inputs = {
            "rank_logits": rank_logits,
            "gt_ranks": torch.cat(rank_targets),
            "deltas": roi_deltas,
            "target_deltas": torch.cat(delta_targets),
            "positive": torch.cat(positives),
        }
        if mask_rois:
            mask_rois = torch.cat(mask_rois)
            mask_pooled = roi_pool(pyramid[0], mask_rois, cfg.mask_pool_size,
                                   STAGE_STRIDES[0])
            mask_probs = self.mask_head(mask_pooled)
            mask_targets = torch.stack(mask_targets_list)[:, None]
        else:
            mask_probs = torch.zeros((0, 1, cfg.mask_pool_size, cfg.mask_pool_size))
            mask_targets = torch.zeros_like(mask_probs)
        return rank_inputs, {"mask_probs": mask_probs, "mask_targets": mask_targets}

    def training_losses(self, images, fix_gt, seg_gt, instances, prior=None,
                        lam: float = 1.0) -> dict:
        """All loss components for one batch as scalar tensors.

        ``instances`` is a per-image list of dicts with float ``boxes``
        (G, 4), long ``ranks`` (G,) and float ``masks`` (G, H, W).
        """
        from camorank import losses as L

        out = self.forward(images)
        l_f = L.fixation_loss(out["fixation"], fix_gt)
        l_c = L.structure_loss(out["segmentation"], seg_gt)
        pyramid = self.fpn(out["features"])
        anchors = self._anchors(pyramid)
        objectness, deltas = self.rpn(pyramid)
        rpn_inputs = self._rpn_losses_inputs(anchors, objectness, deltas, instances)
        proposals, _ = self._proposals_from_rpn(anchors, objectness, deltas,
                                                images.shape[-2:],
                                                self.config.post_nms_top_n)
        rank_inputs, mask_inputs = self._roi_losses_inputs(
            pyramid, proposals, instances, images.shape[-2:])
        ranking = L.ranking_total_loss(rpn_inputs, rank_inputs, mask_inputs, prior)
        return {
            "L_f": l_f,
            "L_c": l_c,
            "L_fc": L.joint_loss(l_f, l_c, lam),
            "L_rpn": ranking["L_rpn"],
            "L_rank": ranking["L_rank"],
            "L_mask": ranking["L_mask"],
            "ranking_total": ranking["total"],
        }

    # ------------------------------------------------------------------
    # inference
    # ------------------------------------------------------------------

    @torch.no_grad()
    def detect_instances(self, images: torch.Tensor) -> list:
        """Per-image lists of non-background InstanceProposal, NMS-filtered
        per rank class, each with a mask over its refined box."""
        cfg = self.config
        feats = self.backbone(images)
        pyramid = self.fpn(feats)
        anchors = self._anchors(pyramid)
        objectness, deltas = self.rpn(pyramid)
        proposals, scores = self._proposals_from_rpn(
            anchors, objectness, deltas, images.shape[-2:], cfg.post_nms_top_n)
        results = []
        for b in range(images.shape[0]):
            props, obj = proposals[b], scores[b]
            if not len(props):
                results.append([])
                continue
            batch_col = torch.full((len(props), 1), float(b))
            rois = torch.cat([batch_col, props], dim=1)
            pooled = roi_pool(pyramid[0], rois, cfg.roi_pool_size, STAGE_STRIDES[0])
            rank_logits, roi_deltas = self.box_rank_head(pooled)
            refined = box_ops.clip_boxes(
                box_ops.decode_deltas(props, roi_deltas), images.shape[-2:])
            probs = torch.softmax(rank_logits, dim=1)
            rank = probs.argmax(dim=1)
            score = probs.gather(1, rank[:, None]).flatten()
            keep = (rank > 0) & (score > cfg.score_threshold)
            picked = []
            for r in (1, 2, 3):
                of_rank = (keep & (rank == r)).nonzero().flatten()
                if not len(of_rank):
                    continue
                kept = box_ops.nms(refined[of_rank], score[of_rank], cfg.nms_iou)
                picked.extend(of_rank[kept].tolist())
            out = []
            for idx in picked:
                box = refined[idx]
                row = torch.cat([torch.full((1,), float(b)), box])[None]
                mask = self.mask_head(
                    roi_pool(pyramid[0], row, cfg.mask_pool_size, STAGE_STRIDES[0]))
                out.append(InstanceProposal(
                    box=tuple(float(v) for v in box),
                    objectness=float(obj[idx]),
                    rank_logits=rank_logits[idx].numpy().copy(),
                    box_deltas=roi_deltas[idx].numpy().copy(),
                    mask=mask[0, 0].numpy().copy(),
                ))
            results.append(out)
        return results


# ----------------------------------------------------------------------
# checkpoints
# ----------------------------------------------------------------------

# fixed archive-entry date keeps checkpoint bytes a pure function of the
# weights (zip entries otherwise embed the wall clock)
_ARCHIVE_DATE = (2020, 1, 1, 0, 0, 0)


def _write_entry(zf: zipfile.ZipFile, name: str, payload: bytes):
    info = zipfile.ZipInfo(name, date_time=_ARCHIVE_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def save_checkpoint(model: CamoRankNet, path: str, extra: dict | None = None):
    meta = {
        "schema": CHECKPOINT_SCHEMA,
        "config": model.config.to_dict(),
        "extra": extra or {},
    }
    with zipfile.ZipFile(path, "w") as zf:
        _write_entry(zf, "meta.json",
                     json.dumps(meta, indent=2, sort_keys=True).encode())
        for name, tensor in sorted(model.state_dict().items()):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, tensor.detach().cpu().numpy())
            _write_entry(zf, f"weights/{name}.npy", buf.getvalue())


def load_checkpoint(path: str) -> tuple[CamoRankNet, dict]:
    state = {}
    with zipfile.ZipFile(path, "r") as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("schema") != CHECKPOINT_SCHEMA:
            raise ValueError(f"unsupported checkpoint schema {meta.get('schema')!r}")
        for entry in zf.namelist():
            if entry.startswith("weights/") and entry.endswith(".npy"):
                name = entry[len("weights/"):-len(".npy")]
                arr = np.lib.format.read_array(io.BytesIO(zf.read(entry)))
                state[name] = torch.from_numpy(arr)
    model = CamoRankNet(ModelConfig.from_dict(meta["config"]))
    model.load_state_dict(state)
    model.eval()
    return model, meta
