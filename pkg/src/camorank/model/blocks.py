"""Shared building blocks: conv units, dual residual attention, dense ASPP."""

from __future__ import annotations

import math

import torch
import torch.nn as nn

__all__ = ["ConvBlock", "PositionAttention", "ChannelAttention",
           "DualResidualAttention", "DenseASPP"]


def _gn_groups(channels: int) -> int:
    # at least 2 channels per group so 1x1 spatial maps stay normalizable
    groups = math.gcd(8, channels)
    while groups > 1 and channels // groups < 2:
        groups //= 2
    return groups


class ConvBlock(nn.Module):
    """3x3 (by default) conv + GroupNorm + ReLU."""

    def __init__(self, c_in, c_out, kernel=3, stride=1, dilation=1, act=True):
        super().__init__()
        padding = dilation * (kernel - 1) // 2
        self.conv = nn.Conv2d(c_in, c_out, kernel, stride=stride,
                              padding=padding, dilation=dilation, bias=False)
        self.norm = nn.GroupNorm(_gn_groups(c_out), c_out)
        self.act = nn.ReLU(inplace=True) if act else nn.Identity()

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class PositionAttention(nn.Module):
    """Spatial self-attention branch: every location is re-expressed as an
    affinity-weighted sum over all locations. Returns only the scaled branch
    output (the residual is added by the enclosing module)."""

    def __init__(self, channels, reduction=8):
        super().__init__()
        inner = max(1, channels // reduction)
        self.query = nn.Conv2d(channels, inner, 1)
        self.key = nn.Conv2d(channels, inner, 1)
        self.value = nn.Conv2d(channels, channels, 1)
        # nonzero init keeps gradients flowing into the value projection
        self.scale = nn.Parameter(torch.tensor(0.1))

    def forward(self, x):
        b, c, h, w = x.shape
        q = self.query(x).flatten(2).transpose(1, 2)        # B,N,Ci
        k = self.key(x).flatten(2)                          # B,Ci,N
        attn = torch.softmax(torch.bmm(q, k), dim=-1)       # B,N,N
        v = self.value(x).flatten(2)                        # B,C,N
        out = torch.bmm(v, attn.transpose(1, 2))
        return self.scale * out.view(b, c, h, w)


class ChannelAttention(nn.Module):
    """Channel self-attention branch on the channel Gram matrix, with the
    max-minus-energy softmax of the cited dual-attention design."""

    def __init__(self, channels):
        super().__init__()
        self.scale = nn.Parameter(torch.tensor(0.1))

    def forward(self, x):
        b, c, h, w = x.shape
        flat = x.flatten(2)                                 # B,C,N
        energy = torch.bmm(flat, flat.transpose(1, 2))      # B,C,C
        energy = energy.max(dim=-1, keepdim=True).values.expand_as(energy) - energy
        attn = torch.softmax(energy, dim=-1)
        out = torch.bmm(attn, flat)
        return self.scale * out.view(b, c, h, w)


class DualResidualAttention(nn.Module):
    """Position branch + channel branch + identity residual.

    Zeroing all module parameters makes it an exact identity.
    """

    def __init__(self, channels, reduction=8):
        super().__init__()
        self.position = PositionAttention(channels, reduction)
        self.channel = ChannelAttention(channels)

    def forward(self, x):
        return self.position(x) + self.channel(x) + x


class DenseASPP(nn.Module):
    """Densely connected atrous pyramid: each dilated 3x3 conv consumes the
    input concatenated with every previous branch output; a 1x1 conv fuses
    everything back to the input width."""

    def __init__(self, channels, dilations=(3, 6, 12, 18)):
        super().__init__()
        self.branches = nn.ModuleList()
        for i, d in enumerate(dilations):
            self.branches.append(ConvBlock((i + 1) * channels, channels, dilation=d))
        self.fuse = ConvBlock((len(dilations) + 1) * channels, channels, kernel=1)

    def forward(self, x):
        feats = [x]
        for branch in self.branches:
            feats.append(branch(torch.cat(feats, dim=1)))
        return self.fuse(torch.cat(feats, dim=1))
