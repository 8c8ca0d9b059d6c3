"""Four-stage convolutional feature extractor with strides 4/8/16/32."""

from __future__ import annotations

import torch.nn as nn

from camorank.model.blocks import ConvBlock

__all__ = ["StagedExtractor", "STAGE_STRIDES"]

STAGE_STRIDES = (4, 8, 16, 32)


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv1 = ConvBlock(channels, channels)
        self.conv2 = ConvBlock(channels, channels, act=False)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.act(x + self.conv2(self.conv1(x)))


def _stage(c_in, c_out, blocks):
    layers = [ConvBlock(c_in, c_out, stride=2)]
    layers += [ResidualBlock(c_out) for _ in range(blocks)]
    return nn.Sequential(*layers)


class StagedExtractor(nn.Module):
    """Staged extractor producing four feature maps at strides 4/8/16/32.

    Depth and widths are configurable; the deepest preset approximates a
    50-layer backbone's stage layout while the default stays desk-sized.
    """

    def __init__(self, widths=(16, 32, 64, 96), blocks_per_stage=(1, 1, 1, 1)):
        super().__init__()
        if len(widths) != 4 or len(blocks_per_stage) != 4:
            raise ValueError("need widths and block counts for exactly 4 stages")
        self.widths = tuple(widths)
        self.stem = nn.Sequential(
            ConvBlock(3, widths[0], stride=2),
            ConvBlock(widths[0], widths[0], stride=2),
        )
        self.stage1 = nn.Sequential(*[ResidualBlock(widths[0])
                                      for _ in range(blocks_per_stage[0])])
        self.stage2 = _stage(widths[0], widths[1], blocks_per_stage[1])
        self.stage3 = _stage(widths[1], widths[2], blocks_per_stage[2])
        self.stage4 = _stage(widths[2], widths[3], blocks_per_stage[3])

    def forward(self, images):
        """images: (B, 3, H, W) with H and W divisible by 32 -> (s1, s2, s3, s4)."""
        h, w = images.shape[-2:]
        if h % 32 or w % 32:
            raise ValueError(f"input size {h}x{w} must be divisible by 32")
        s1 = self.stage1(self.stem(images))
        s2 = self.stage2(s1)
        s3 = self.stage3(s2)
        s4 = self.stage4(s3)
        return s1, s2, s3, s4
