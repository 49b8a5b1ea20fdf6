"""Encoder configuration and the five-level feature pyramid contract."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from ..errors import ConfigError, ShapeError

ARCHS = ("swin", "conv")


@dataclass
class EncoderConfig:
    """Family spec for the volume encoder.

    Channels follow C, 2C, 4C, 8C, 16C at spatial strides 2, 4, 8, 16, 32;
    the stride-32 level is the bottleneck with ``16 * feature_size``
    channels.
    """

    arch: str = "swin"
    feature_size: int = 48
    depths: tuple[int, int, int, int] = (2, 2, 2, 2)
    heads: tuple[int, int, int, int] = (3, 6, 12, 24)
    window: int = 7
    patch: int = 2
    in_channels: int = 1
    mlp_ratio: float = 4.0

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown encoder arch {self.arch!r}")
        if self.feature_size < 1:
            raise ConfigError("feature_size must be >= 1")
        if self.patch < 1:
            raise ConfigError("patch must be >= 1")
        if self.in_channels < 1:
            raise ConfigError("in_channels must be >= 1")
        self.depths = tuple(int(d) for d in self.depths)
        self.heads = tuple(int(h) for h in self.heads)
        if len(self.depths) != 4 or any(d < 1 for d in self.depths):
            raise ConfigError(f"depths must be 4 positive ints, got {self.depths}")
        if len(self.heads) != 4 or any(h < 1 for h in self.heads):
            raise ConfigError(f"heads must be 4 positive ints, got {self.heads}")
        if self.arch == "swin":
            for i, h in enumerate(self.heads):
                dim = self.feature_size * (2**i)
                if dim % h != 0:
                    raise ConfigError(
                        f"stage {i} channels {dim} not divisible by {h} heads"
                    )
        if self.feature_size % 2 != 0:
            raise ConfigError("feature_size must be even (decoders halve it)")
        if self.window < 1:
            raise ConfigError("window must be >= 1")

    @property
    def bottleneck_channels(self) -> int:
        return 16 * self.feature_size

    @property
    def total_stride(self) -> int:
        return self.patch * 16

    def stage_channels(self, level: int) -> int:
        return self.feature_size * (2**level)


@dataclass
class FeaturePyramid:
    """Five feature maps at strides patch*(1,2,4,8,16) relative to the input."""

    levels: tuple[torch.Tensor, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.levels = tuple(self.levels)
        if len(self.levels) != 5:
            raise ShapeError(f"pyramid needs exactly 5 levels, got {len(self.levels)}")

    @property
    def bottleneck(self) -> torch.Tensor:
        return self.levels[-1]

    def check_schedule(self, cfg: EncoderConfig, input_shape) -> None:
        """Assert the channel/stride schedule against the encoder input shape."""
        spatial = tuple(input_shape[-3:])
        for k, lvl in enumerate(self.levels):
            want_c = cfg.stage_channels(k)
            stride = cfg.patch * (2**k)
            want_sp = tuple(s // stride for s in spatial)
            have = (lvl.shape[1],) + tuple(lvl.shape[2:])
            if have != (want_c,) + want_sp:
                raise ShapeError(
                    f"level {k}: expected channels {want_c} at {want_sp}, got {have}"
                )


def check_encoder_input(cfg: EncoderConfig, x: torch.Tensor) -> None:
    if x.ndim != 5:
        raise ShapeError(f"encoder input must be [B, C, D, H, W], got {tuple(x.shape)}")
    if x.shape[1] != cfg.in_channels:
        raise ShapeError(f"expected {cfg.in_channels} input channels, got {x.shape[1]}")
    stride = cfg.total_stride
    for axis in range(3):
        if x.shape[2 + axis] % stride != 0:
            raise ShapeError(
                f"spatial axis {axis} has size {x.shape[2 + axis]}, "
                f"not divisible by the total stride {stride}"
            )
