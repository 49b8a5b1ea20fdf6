"""Task heads: reconstruction decoder, U-shaped segmentation decoder,
classification head, and the displacement-field head for registration."""

from __future__ import annotations

import torch
import torch.nn as nn

from ..errors import ConfigError
from .base import EncoderConfig, FeaturePyramid
from .conv import ConvEncoder3D, conv_block, norm_layer
from .swin import SwinEncoder3D


class ReconDecoder(nn.Module):
    """Five x2 transpose-conv upsampling blocks (16C -> ... -> C/2), then a
    1-cubed conv to one channel. No skip connections: reconstruction must
    pass through the bottleneck."""

    def __init__(self, feature_size: int):
        super().__init__()
        c = feature_size
        chans = [16 * c, 8 * c, 4 * c, 2 * c, c, c // 2]
        self.in_channels = chans[0]
        ups = []
        for cin, cout in zip(chans[:-1], chans[1:]):
            ups += [
                nn.ConvTranspose3d(cin, cout, 2, stride=2),
                norm_layer(cout),
                nn.GELU(),
            ]
        self.ups = nn.Sequential(*ups)
        self.out_conv = nn.Conv3d(chans[-1], 1, 1)

    def forward(self, bottleneck: torch.Tensor) -> torch.Tensor:
        if bottleneck.shape[1] != self.in_channels:
            raise ConfigError(
                f"decoder expects {self.in_channels} bottleneck channels, "
                f"got {bottleneck.shape[1]}"
            )
        return self.out_conv(self.ups(bottleneck))


class UDecoder(nn.Module):
    """U-shaped decoder over the full pyramid: upsample x2, concatenate the
    matching level, two conv blocks; a final skip-free upsample reaches full
    resolution before the 1-cubed output conv."""

    def __init__(self, feature_size: int, out_channels: int):
        super().__init__()
        c = feature_size
        self.feature_size = c
        self.ups = nn.ModuleList()
        self.blocks = nn.ModuleList()
        for k in (3, 2, 1, 0):
            ch = c * (2**k)
            self.ups.append(nn.ConvTranspose3d(2 * ch, ch, 2, stride=2))
            self.blocks.append(nn.Sequential(conv_block(2 * ch, ch), conv_block(ch, ch)))
        self.final_up = nn.ConvTranspose3d(c, c // 2, 2, stride=2)
        self.final_block = conv_block(c // 2, c // 2)
        self.out_conv = nn.Conv3d(c // 2, out_channels, 1)

    def forward(self, pyramid: FeaturePyramid) -> torch.Tensor:
        levels = pyramid.levels
        if levels[-1].shape[1] != 16 * self.feature_size:
            raise ConfigError(
                f"decoder built for feature size {self.feature_size}, "
                f"got bottleneck with {levels[-1].shape[1]} channels"
            )
        x = levels[4]
        for i, k in enumerate((3, 2, 1, 0)):
            x = self.ups[i](x)
            x = self.blocks[i](torch.cat([x, levels[k]], dim=1))
        x = self.final_block(self.final_up(x))
        return self.out_conv(x)


class SegDecoder(UDecoder):
    def __init__(self, feature_size: int, n_classes: int):
        if n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {n_classes}")
        super().__init__(feature_size, n_classes)
        self.n_classes = n_classes


class RegHead(UDecoder):
    """Displacement head: 3 output channels, zero-initialized output conv so
    the initial transform is the identity."""

    def __init__(self, feature_size: int):
        super().__init__(feature_size, 3)

    def zero_init_output(self):
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)


class ClsHead(nn.Module):
    """Global average pool over the bottleneck, then a two-layer classifier."""

    def __init__(self, feature_size: int, n_classes: int, hidden: int = 512):
        super().__init__()
        if n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {n_classes}")
        self.in_channels = 16 * feature_size
        self.fc1 = nn.Linear(self.in_channels, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, n_classes)

    def forward(self, bottleneck: torch.Tensor) -> torch.Tensor:
        if bottleneck.shape[1] != self.in_channels:
            raise ConfigError(
                f"classifier expects {self.in_channels} channels, got {bottleneck.shape[1]}"
            )
        pooled = bottleneck.mean(dim=(2, 3, 4))
        return self.fc2(self.act(self.fc1(pooled)))


class PretrainModel(nn.Module):
    """Autoencoder with a pooled bottleneck embedding for the alignment loss."""

    def __init__(self, encoder: nn.Module, decoder: ReconDecoder):
        super().__init__()
        self.encoder = encoder
        self.decoder = decoder

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        pyramid = self.encoder(x)
        bottleneck = pyramid.bottleneck
        recon = self.decoder(bottleneck)
        pooled = bottleneck.mean(dim=(2, 3, 4))
        return recon, pooled


class SegModel(nn.Module):
    def __init__(self, encoder: nn.Module, decoder: SegDecoder):
        super().__init__()
        self.encoder = encoder
        self.decoder = decoder

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.decoder(self.encoder(x))


class ClsModel(nn.Module):
    def __init__(self, encoder: nn.Module, head: ClsHead):
        super().__init__()
        self.encoder = encoder
        self.head = head

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.encoder(x).bottleneck)


class RegModel(nn.Module):
    """Predicts a dense displacement field from a (moving, fixed) pair."""

    def __init__(self, encoder: nn.Module, head: RegHead):
        super().__init__()
        if encoder.cfg.in_channels != 2:
            raise ConfigError(
                f"registration encoder needs in_channels=2, got {encoder.cfg.in_channels}"
            )
        self.encoder = encoder
        self.head = head

    def forward(self, moving: torch.Tensor, fixed: torch.Tensor) -> torch.Tensor:
        return self.head(self.encoder(torch.cat([moving, fixed], dim=1)))


def _default_init(m: nn.Module) -> None:
    if isinstance(m, nn.Linear):
        nn.init.trunc_normal_(m.weight, std=0.02)
        if m.bias is not None:
            nn.init.zeros_(m.bias)
    elif isinstance(m, (nn.Conv3d, nn.ConvTranspose3d)):
        nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
        if m.bias is not None:
            nn.init.zeros_(m.bias)
    elif isinstance(m, (nn.LayerNorm, nn.GroupNorm, nn.InstanceNorm3d)):
        if m.weight is not None:
            nn.init.ones_(m.weight)
        if m.bias is not None:
            nn.init.zeros_(m.bias)


def initialize_weights(module: nn.Module) -> nn.Module:
    module.apply(_default_init)
    for name, p in module.named_parameters():
        if name.endswith("rel_pos_table"):
            nn.init.trunc_normal_(p, std=0.02)
    return module


def build_encoder(cfg: EncoderConfig, seed: int = 0) -> nn.Module:
    """Construct and deterministically initialize an encoder."""
    torch.manual_seed(seed)
    enc = SwinEncoder3D(cfg) if cfg.arch == "swin" else ConvEncoder3D(cfg)
    return initialize_weights(enc)


def build_pretrain_model(cfg: EncoderConfig, seed: int = 0) -> PretrainModel:
    torch.manual_seed(seed)
    enc = SwinEncoder3D(cfg) if cfg.arch == "swin" else ConvEncoder3D(cfg)
    model = PretrainModel(enc, ReconDecoder(cfg.feature_size))
    return initialize_weights(model)


def build_seg_model(cfg: EncoderConfig, n_classes: int, seed: int = 0) -> SegModel:
    torch.manual_seed(seed)
    enc = SwinEncoder3D(cfg) if cfg.arch == "swin" else ConvEncoder3D(cfg)
    model = SegModel(enc, SegDecoder(cfg.feature_size, n_classes))
    return initialize_weights(model)


def build_cls_model(cfg: EncoderConfig, n_classes: int, hidden: int = 512, seed: int = 0) -> ClsModel:
    torch.manual_seed(seed)
    enc = SwinEncoder3D(cfg) if cfg.arch == "swin" else ConvEncoder3D(cfg)
    model = ClsModel(enc, ClsHead(cfg.feature_size, n_classes, hidden=hidden))
    return initialize_weights(model)


def build_reg_model(cfg: EncoderConfig, seed: int = 0) -> RegModel:
    torch.manual_seed(seed)
    enc = SwinEncoder3D(cfg) if cfg.arch == "swin" else ConvEncoder3D(cfg)
    model = RegModel(enc, RegHead(cfg.feature_size))
    initialize_weights(model)
    model.head.zero_init_output()
    return model
