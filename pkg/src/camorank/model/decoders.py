"""Dense map decoders and the reverse-attention coupling.

The fixation decoder and the camouflage decoder share one structure: each
backbone stage is projected to a common width by a 3x3 conv, passed through
dual residual attention and a dense atrous pyramid, then merged top-down
(deepest stage upsampled and concatenated into the next-finer stage, a 3x3
conv fusing each pair, finest stage last) before a 1-channel head and a
sigmoid produce a full-resolution probability map.

The camouflage decoder does not see the raw backbone features: they are
first gated by ``1 - F`` (the reverse of the predicted fixation map), so the
segmentation branch attends beyond the already-localized discriminative
region. With F == 0 the gating is the identity and the branch reduces to
plain decoding.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from camorank.model.blocks import ConvBlock, DenseASPP, DualResidualAttention

__all__ = ["MapDecoder", "reverse_attention"]


def reverse_attention(features, f_map, mode: str = "bilinear"):
    """Gate each stage feature by (1 - F) resampled to the stage resolution.

    ``f_map`` must be a probability map (values in [0, 1]) at input
    resolution, shaped (B, 1, H, W). Default resampling is bilinear with
    align_corners off; "nearest" is available for exact block semantics.
    """
    if f_map.dim() != 4 or f_map.shape[1] != 1:
        raise ValueError(f"expected a (B,1,H,W) map, got {tuple(f_map.shape)}")
    with torch.no_grad():
        if bool(f_map.min() < 0.0) or bool(f_map.max() > 1.0):
            raise ValueError("fixation map values must lie in [0, 1]")
    reverse = 1.0 - f_map
    guided = []
    for s in features:
        if mode == "nearest":
            r = F.interpolate(reverse, size=s.shape[-2:], mode="nearest")
        else:
            r = F.interpolate(reverse, size=s.shape[-2:], mode="bilinear",
                              align_corners=False)
        guided.append(s * r)
    return tuple(guided)


class MapDecoder(nn.Module):
    def __init__(self, in_channels, channels: int = 32, dilations=(3, 6, 12, 18)):
        super().__init__()
        if len(in_channels) != 4:
            raise ValueError("decoder expects 4 stage widths")
        self.project = nn.ModuleList(
            [ConvBlock(c, channels) for c in in_channels])
        self.attend = nn.ModuleList(
            [DualResidualAttention(channels) for _ in in_channels])
        self.context = nn.ModuleList(
            [DenseASPP(channels, dilations) for _ in in_channels])
        self.merge = nn.ModuleList(
            [ConvBlock(2 * channels, channels) for _ in range(3)])
        self.head = nn.Conv2d(channels, 1, 3, padding=1)

    def forward(self, features, out_size):
        """features: 4 stage maps (fine to coarse) -> (B, 1, *out_size) in [0, 1]."""
        xs = [ctx(att(proj(s))) for proj, att, ctx, s in
              zip(self.project, self.attend, self.context, features)]
        m = xs[3]
        for i in (2, 1, 0):
            up = F.interpolate(m, size=xs[i].shape[-2:], mode="bilinear",
                               align_corners=False)
            m = self.merge[i](torch.cat([xs[i], up], dim=1))
        logits = self.head(m)
        logits = F.interpolate(logits, size=out_size, mode="bilinear",
                               align_corners=False)
        return torch.sigmoid(logits)
