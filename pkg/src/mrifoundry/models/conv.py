"""Residual convolutional encoder with the same channel/stride schedule as
the windowed-attention family (plain stand-in for a self-configuring UNet
encoder)."""

from __future__ import annotations

import torch
import torch.nn as nn

from .base import EncoderConfig, FeaturePyramid, check_encoder_input


def norm_layer(ch: int) -> nn.GroupNorm:
    # group norm stays defined on 1-voxel maps, unlike instance norm
    groups = next(g for g in (8, 4, 2, 1) if ch % g == 0)
    return nn.GroupNorm(groups, ch)


def conv_block(in_ch: int, out_ch: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv3d(in_ch, out_ch, 3, stride=stride, padding=1),
        norm_layer(out_ch),
        nn.GELU(),
    )


class ResBlock(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv3d(ch, ch, 3, padding=1),
            norm_layer(ch),
            nn.GELU(),
            nn.Conv3d(ch, ch, 3, padding=1),
            norm_layer(ch),
        )
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(x + self.body(x))


class ConvEncoder3D(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        if cfg.arch != "conv":
            raise ValueError(f"ConvEncoder3D built with arch={cfg.arch!r}")
        self.cfg = cfg
        stages = []
        prev = cfg.in_channels
        for k in range(5):
            ch = cfg.stage_channels(k)
            stages.append(nn.Sequential(conv_block(prev, ch, stride=2), ResBlock(ch)))
            prev = ch
        self.stages = nn.ModuleList(stages)

    def forward(self, x: torch.Tensor) -> FeaturePyramid:
        check_encoder_input(self.cfg, x)
        levels = []
        for stage in self.stages:
            x = stage(x)
            levels.append(x)
        return FeaturePyramid(levels=tuple(levels))
