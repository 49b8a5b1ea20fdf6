"""Spatial transform: resample a volume under a dense displacement field."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from ..errors import ShapeError

MODES = {"trilinear": "bilinear", "nearest": "nearest"}


def warp(moving: torch.Tensor, field: torch.Tensor, mode: str = "trilinear") -> torch.Tensor:
    """Sample ``moving`` at p + u(p).

    ``moving`` is [B, C, D, H, W]; ``field`` is [B, 3, D, H, W] with channel
    k holding the displacement along data axis k in voxel units.
    Out-of-range samples clamp to the edge. ``nearest`` is for label
    volumes; ``trilinear`` is differentiable w.r.t. both inputs.
    """
    if mode not in MODES:
        raise ShapeError(f"unknown interpolation mode {mode!r}")
    if moving.ndim != 5 or field.ndim != 5:
        raise ShapeError("warp expects 5D tensors [B, C, D, H, W]")
    if field.shape[1] != 3:
        raise ShapeError(f"displacement field needs 3 channels, got {field.shape[1]}")
    if moving.shape[0] != field.shape[0] or moving.shape[2:] != field.shape[2:]:
        raise ShapeError(
            f"moving {tuple(moving.shape)} and field {tuple(field.shape)} do not match"
        )
    spatial = moving.shape[2:]
    dtype = field.dtype if field.is_floating_point() else torch.float32
    base = torch.meshgrid(
        *(torch.arange(s, device=moving.device, dtype=dtype) for s in spatial),
        indexing="ij",
    )
    coords = []
    for axis in range(3):
        pos = base[axis].unsqueeze(0) + field[:, axis]
        denom = max(spatial[axis] - 1, 1)
        coords.append(2.0 * pos / denom - 1.0)
    # grid_sample wants the last dimension ordered (x=W, y=H, z=D)
    grid = torch.stack([coords[2], coords[1], coords[0]], dim=-1)
    return F.grid_sample(
        moving.to(dtype) if not moving.is_floating_point() else moving,
        grid,
        mode=MODES[mode],
        padding_mode="border",
        align_corners=True,
    )


def smoothness_penalty(field: torch.Tensor) -> torch.Tensor:
    """Mean squared forward-difference gradient of the field (all 3 axes)."""
    if field.ndim != 5 or field.shape[1] != 3:
        raise ShapeError(f"expected [B, 3, D, H, W] field, got {tuple(field.shape)}")
    dz = field[:, :, 1:, :, :] - field[:, :, :-1, :, :]
    dy = field[:, :, :, 1:, :] - field[:, :, :, :-1, :]
    dx = field[:, :, :, :, 1:] - field[:, :, :, :, :-1]
    return (dz.square().mean() + dy.square().mean() + dx.square().mean()) / 3.0
