"""Named-parameter bookkeeping: strict encoder transfer and counting."""

from __future__ import annotations

from typing import Mapping

import torch
import torch.nn as nn

from ..errors import TransferError

ENCODER_PREFIX = "encoder."


def transfer_encoder_weights(
    src: Mapping[str, torch.Tensor], dst: Mapping[str, torch.Tensor]
) -> dict[str, torch.Tensor]:
    """Copy every ``encoder.*`` tensor from ``src`` into ``dst``.

    Strict: every encoder-namespace key of ``dst`` must exist in ``src``
    with an identical shape, otherwise nothing is transferred and the
    offending keys are reported. Non-encoder entries pass through
    untouched.
    """
    missing = []
    mismatched = []
    for name, tensor in dst.items():
        if not name.startswith(ENCODER_PREFIX):
            continue
        if name not in src:
            missing.append(name)
        elif tuple(src[name].shape) != tuple(tensor.shape):
            mismatched.append(f"{name}: {tuple(src[name].shape)} vs {tuple(tensor.shape)}")
    if missing or mismatched:
        raise TransferError(
            "encoder transfer failed; "
            f"missing keys: {missing or 'none'}; shape mismatches: {mismatched or 'none'}"
        )
    out = {}
    for name, tensor in dst.items():
        out[name] = src[name].detach().clone() if name.startswith(ENCODER_PREFIX) else tensor
    return out


def load_encoder_from(model: nn.Module, src: Mapping[str, torch.Tensor]) -> nn.Module:
    """Apply a strict encoder transfer onto a live model."""
    model.load_state_dict(transfer_encoder_weights(src, model.state_dict()))
    return model


def count_params(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def param_shapes(module: nn.Module) -> dict[str, tuple[int, ...]]:
    return {name: tuple(p.shape) for name, p in module.named_parameters()}
