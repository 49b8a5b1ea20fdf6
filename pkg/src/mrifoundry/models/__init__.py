from .base import EncoderConfig, FeaturePyramid, check_encoder_input
from .conv import ConvEncoder3D
from .heads import (
    ClsHead,
    ClsModel,
    PretrainModel,
    ReconDecoder,
    RegHead,
    RegModel,
    SegDecoder,
    SegModel,
    build_cls_model,
    build_encoder,
    build_pretrain_model,
    build_reg_model,
    build_seg_model,
    initialize_weights,
)
from .params import count_params, load_encoder_from, param_shapes, transfer_encoder_weights
from .swin import SwinEncoder3D, compute_shift_mask, get_window_size, window_partition, window_reverse
from .warp import smoothness_penalty, warp

__all__ = [
    "EncoderConfig",
    "FeaturePyramid",
    "check_encoder_input",
    "ConvEncoder3D",
    "SwinEncoder3D",
    "ClsHead",
    "ClsModel",
    "PretrainModel",
    "ReconDecoder",
    "RegHead",
    "RegModel",
    "SegDecoder",
    "SegModel",
    "build_cls_model",
    "build_encoder",
    "build_pretrain_model",
    "build_reg_model",
    "build_seg_model",
    "initialize_weights",
    "count_params",
    "load_encoder_from",
    "param_shapes",
    "transfer_encoder_weights",
    "compute_shift_mask",
    "get_window_size",
    "window_partition",
    "window_reverse",
    "smoothness_penalty",
    "warp",
]
