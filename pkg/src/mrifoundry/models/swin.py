"""3D shifted-window attention encoder.

Patch embedding (stride-``patch`` conv) followed by four stages of
[windowed, shifted-windowed] self-attention blocks with patch-merging
between stages. Emits five feature maps at strides patch*(1,2,4,8,16)
with channels C..16C. Windows that do not divide a stage grid are
zero-padded and cropped back; grids smaller than the window clamp the
window (and drop the shift) on that axis.
"""

from __future__ import annotations

import itertools

import torch
import torch.nn as nn
import torch.nn.functional as F

from .base import EncoderConfig, FeaturePyramid, check_encoder_input

_MASK_FILL = -1e4


def get_window_size(grid, window: int, shift: int):
    """Clamp window/shift per axis for grids smaller than the window."""
    ws, ss = [], []
    for g in grid:
        if g <= window:
            ws.append(int(g))
            ss.append(0)
        else:
            ws.append(int(window))
            ss.append(int(shift))
    return tuple(ws), tuple(ss)


def window_partition(x: torch.Tensor, ws) -> torch.Tensor:
    """(B, D, H, W, C) -> (B * nWindows, prod(ws), C)."""
    b, d, h, w, c = x.shape
    x = x.view(b, d // ws[0], ws[0], h // ws[1], ws[1], w // ws[2], ws[2], c)
    x = x.permute(0, 1, 3, 5, 2, 4, 6, 7).contiguous()
    return x.view(-1, ws[0] * ws[1] * ws[2], c)


def window_reverse(windows: torch.Tensor, ws, dims) -> torch.Tensor:
    b, d, h, w = dims
    x = windows.view(b, d // ws[0], h // ws[1], w // ws[2], ws[0], ws[1], ws[2], -1)
    x = x.permute(0, 1, 4, 2, 5, 3, 6, 7).contiguous()
    return x.view(b, d, h, w, -1)


def _axis_segments(size: int, window: int, shift: int):
    if shift == 0:
        return [slice(0, size)]
    return [slice(0, size - window), slice(size - window, size - shift), slice(size - shift, size)]


def compute_shift_mask(dims, ws, shift, device, dtype) -> torch.Tensor:
    """Attention mask keeping rolled-across-boundary tokens apart.

    Returns (nWindows, N, N) additive mask with 0 for allowed pairs and a
    large negative value otherwise.
    """
    img = torch.zeros((1, *dims, 1), device=device)
    cnt = 0.0
    for sd in _axis_segments(dims[0], ws[0], shift[0]):
        for sh in _axis_segments(dims[1], ws[1], shift[1]):
            for sw in _axis_segments(dims[2], ws[2], shift[2]):
                img[:, sd, sh, sw, :] = cnt
                cnt += 1.0
    win = window_partition(img, ws).squeeze(-1)  # (nW, N)
    diff = win.unsqueeze(1) - win.unsqueeze(2)
    mask = torch.zeros_like(diff, dtype=dtype)
    mask.masked_fill_(diff != 0, _MASK_FILL)
    return mask


class WindowAttention3D(nn.Module):
    """Multi-head self-attention within 3D windows, with relative position bias."""

    def __init__(self, dim: int, num_heads: int, window: int):
        super().__init__()
        self.dim = dim
        self.num_heads = num_heads
        self.window = window
        self.scale = (dim // num_heads) ** -0.5
        span = 2 * window - 1
        self.rel_pos_table = nn.Parameter(torch.zeros(span**3, num_heads))
        self.qkv = nn.Linear(dim, dim * 3, bias=True)
        self.proj = nn.Linear(dim, dim)
        self._index_cache: dict[tuple, torch.Tensor] = {}

    def _rel_index(self, ws) -> torch.Tensor:
        key = tuple(ws)
        cached = self._index_cache.get(key)
        if cached is None:
            coords = torch.stack(
                torch.meshgrid(
                    torch.arange(ws[0]), torch.arange(ws[1]), torch.arange(ws[2]),
                    indexing="ij",
                )
            )
            flat = coords.flatten(1)
            rel = (flat[:, :, None] - flat[:, None, :]).permute(1, 2, 0).contiguous()
            span = 2 * self.window - 1
            rel += self.window - 1  # offsets in [0, span)
            index = (rel[..., 0] * span + rel[..., 1]) * span + rel[..., 2]
            cached = index.reshape(-1)
            self._index_cache[key] = cached
        return cached

    def forward(self, x: torch.Tensor, ws, mask: torch.Tensor | None) -> torch.Tensor:
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, c // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        bias = self.rel_pos_table[self._rel_index(ws)].reshape(n, n, -1)
        attn = attn + bias.permute(2, 0, 1).unsqueeze(0)
        if mask is not None:
            nw = mask.shape[0]
            attn = attn.view(b // nw, nw, self.num_heads, n, n) + mask.unsqueeze(0).unsqueeze(2)
            attn = attn.view(b, self.num_heads, n, n)
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class SwinBlock(nn.Module):
    def __init__(self, dim: int, num_heads: int, window: int, shifted: bool, mlp_ratio: float):
        super().__init__()
        self.window = window
        self.shift = window // 2 if shifted else 0
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention3D(dim, num_heads, window)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, d, h, w, c = x.shape
        ws, shift = get_window_size((d, h, w), self.window, self.shift)
        shortcut = x
        x = self.norm1(x)
        pad = [(-s) % ws[i] for i, s in enumerate((d, h, w))]
        if any(pad):
            x = F.pad(x, (0, 0, 0, pad[2], 0, pad[1], 0, pad[0]))
        dims_p = (d + pad[0], h + pad[1], w + pad[2])
        if any(shift):
            x = torch.roll(x, shifts=[-s for s in shift], dims=(1, 2, 3))
            mask = compute_shift_mask(dims_p, ws, shift, x.device, x.dtype)
        else:
            mask = None
        att = self.attn(window_partition(x, ws), ws, mask)
        x = window_reverse(att, ws, (b, *dims_p))
        if any(shift):
            x = torch.roll(x, shifts=list(shift), dims=(1, 2, 3))
        if any(pad):
            x = x[:, :d, :h, :w, :]
        x = shortcut + x
        return x + self.mlp(self.norm2(x))


class PatchMerging(nn.Module):
    """2x downsample by concatenating the 8 corner neighbours, then projecting."""

    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(8 * dim)
        self.reduction = nn.Linear(8 * dim, 2 * dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, d, h, w, c = x.shape
        pad = [s % 2 for s in (d, h, w)]
        if any(pad):
            x = F.pad(x, (0, 0, 0, pad[2], 0, pad[1], 0, pad[0]))
        corners = [
            x[:, i::2, j::2, k::2, :] for i, j, k in itertools.product((0, 1), repeat=3)
        ]
        return self.reduction(self.norm(torch.cat(corners, dim=-1)))


class SwinEncoder3D(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        if cfg.arch != "swin":
            raise ValueError(f"SwinEncoder3D built with arch={cfg.arch!r}")
        self.cfg = cfg
        c = cfg.feature_size
        self.patch_embed = nn.Conv3d(cfg.in_channels, c, cfg.patch, stride=cfg.patch)
        self.stages = nn.ModuleList()
        for i in range(4):
            dim = c * (2**i)
            blocks = nn.ModuleList(
                SwinBlock(dim, cfg.heads[i], cfg.window, shifted=(b % 2 == 1),
                          mlp_ratio=cfg.mlp_ratio)
                for b in range(cfg.depths[i])
            )
            self.stages.append(nn.ModuleDict({"blocks": blocks, "merge": PatchMerging(dim)}))

    def forward(self, x: torch.Tensor) -> FeaturePyramid:
        check_encoder_input(self.cfg, x)
        x = self.patch_embed(x)
        levels = [x]
        y = x.permute(0, 2, 3, 4, 1)
        for stage in self.stages:
            for blk in stage["blocks"]:
                y = blk(y)
            y = stage["merge"](y)
            levels.append(y.permute(0, 4, 1, 2, 3))
        return FeaturePyramid(levels=tuple(levels))
