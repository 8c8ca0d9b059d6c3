"""Instance ranking branch: feature pyramid, proposal head and ROI heads."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from camorank.model.blocks import ConvBlock

__all__ = ["FeaturePyramid", "RpnHead", "roi_pool", "BoxRankHead", "MaskHead"]


class FeaturePyramid(nn.Module):
    """Lateral 1x1 projections fused top-down with upsample-add, then a 3x3
    output conv per level. Produces P1..P4 at strides 4/8/16/32."""

    def __init__(self, in_channels, channels: int = 32):
        super().__init__()
        self.lateral = nn.ModuleList(
            [nn.Conv2d(c, channels, 1) for c in in_channels])
        self.output = nn.ModuleList(
            [ConvBlock(channels, channels) for _ in in_channels])

    def forward(self, features):
        laterals = [lat(s) for lat, s in zip(self.lateral, features)]
        for i in (2, 1, 0):
            laterals[i] = laterals[i] + F.interpolate(
                laterals[i + 1], size=laterals[i].shape[-2:],
                mode="bilinear", align_corners=False)
        return tuple(out(x) for out, x in zip(self.output, laterals))


class RpnHead(nn.Module):
    """Shared 3x3 conv plus 1x1 objectness / box-delta heads, applied to
    every pyramid level. Flattening order matches anchor order: row-major
    over (y, x), then anchor index."""

    def __init__(self, channels: int, num_anchors: int):
        super().__init__()
        self.num_anchors = num_anchors
        self.conv = ConvBlock(channels, channels)
        self.objectness = nn.Conv2d(channels, num_anchors, 1)
        self.deltas = nn.Conv2d(channels, num_anchors * 4, 1)

    def forward(self, pyramid):
        obj_all, delta_all = [], []
        for level in pyramid:
            t = self.conv(level)
            b, _, h, w = t.shape
            obj = self.objectness(t).permute(0, 2, 3, 1).reshape(b, -1)
            delta = (self.deltas(t)
                     .reshape(b, self.num_anchors, 4, h, w)
                     .permute(0, 3, 4, 1, 2)
                     .reshape(b, -1, 4))
            obj_all.append(obj)
            delta_all.append(delta)
        return torch.cat(obj_all, dim=1), torch.cat(delta_all, dim=1)


def roi_pool(features: torch.Tensor, boxes: torch.Tensor, out_size: int,
             stride: int) -> torch.Tensor:
    """Bilinear ROI pooling: one grid_sample point per output bin.

    ``features`` is a single (B, C, h, w) level; ``boxes`` is (R, 5) rows of
    (batch_index, x1, y1, x2, y2) in input-image pixels. Each bin samples
    the feature map at the bin center, converted to feature coordinates by
    dividing by the level stride (align_corners=False convention).
    """
    if boxes.numel() == 0:
        c = features.shape[1]
        return features.new_zeros((0, c, out_size, out_size))
    b, c, h, w = features.shape
    pooled = []
    steps = (torch.arange(out_size, dtype=features.dtype,
                          device=features.device) + 0.5) / out_size
    for row in boxes:
        idx = int(row[0].item())
        x1, y1, x2, y2 = row[1], row[2], row[3], row[4]
        xs = (x1 + steps * (x2 - x1)) / stride
        ys = (y1 + steps * (y2 - y1)) / stride
        # normalized grid_sample coordinates, align_corners=False
        gx = 2.0 * xs / w - 1.0
        gy = 2.0 * ys / h - 1.0
        grid = torch.stack(torch.meshgrid(gy, gx, indexing="ij"), dim=-1)
        grid = grid[..., [1, 0]][None]  # (1, out, out, 2) as (x, y)
        pooled.append(F.grid_sample(features[idx:idx + 1], grid,
                                    mode="bilinear", align_corners=False))
    return torch.cat(pooled, dim=0)


class BoxRankHead(nn.Module):
    """Two fc layers over pooled ROI features, then rank logits (4 classes,
    background index 0) and box-refinement deltas."""

    def __init__(self, channels: int, pool_size: int = 7, fc_dim: int = 128):
        super().__init__()
        self.fc1 = nn.Linear(channels * pool_size * pool_size, fc_dim)
        self.fc2 = nn.Linear(fc_dim, fc_dim)
        self.rank = nn.Linear(fc_dim, 4)
        self.box = nn.Linear(fc_dim, 4)

    def forward(self, pooled):
        t = pooled.flatten(1)
        t = F.relu(self.fc1(t))
        t = F.relu(self.fc2(t))
        return self.rank(t), self.box(t)


class MaskHead(nn.Module):
    """Small conv stack over pooled ROI features ending in a 1-channel
    sigmoid mask over the box."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = ConvBlock(channels, channels)
        self.conv2 = ConvBlock(channels, channels)
        self.head = nn.Conv2d(channels, 1, 1)

    def forward(self, pooled):
        if pooled.numel() == 0:
            return pooled.new_zeros((0, 1) + pooled.shape[-2:])
        return torch.sigmoid(self.head(self.conv2(self.conv1(pooled))))
