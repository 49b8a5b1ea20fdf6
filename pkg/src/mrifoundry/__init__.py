"""mrifoundry: a desk-scale lab for 3D MRI foundation-model training.

Volume I/O and standardization, text-constrained autoencoder pre-training,
and the three downstream adapters (segmentation, classification,
registration), all verifiable on synthetic phantoms.
"""

from . import errors
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .finetune import FinetuneConfig, finetune_cls, finetune_reg, finetune_seg
from .manifest import DatasetManifest, ManifestRecord, load_manifest, save_manifest, validate_manifest
from .metrics import accuracy, confusion, dice, roc_auc
from .models import EncoderConfig, FeaturePyramid, build_encoder, count_params, transfer_encoder_weights, warp
from .nifti import read_nifti, read_nifti4d, read_nifti_any, write_nifti, write_nifti4d
from .phantom import PhantomSpec, gen_phantom, gen_reg_pair
from .preprocess import (
    PreprocessConfig,
    normalize_unit,
    preprocess_pipeline,
    quantize_u16,
    random_roi_crop,
    reorient,
    resample_iso,
    resize_to,
    select_3d_from_4d,
)
from .pretrain import PretrainConfig, VolumeSource, l1_loss, log_ratio_loss, lr_schedule, pretrain_loop, total_loss, train_step
from .text import ImagingMeta, TextEmbedding, build_description, pairwise_dist
from .volume import SeriesStack, Volume, Volume4D, stack_to_volume

__version__ = "0.1.0"

__all__ = [
    "errors",
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "FinetuneConfig", "finetune_cls", "finetune_reg", "finetune_seg",
    "DatasetManifest", "ManifestRecord", "load_manifest", "save_manifest", "validate_manifest",
    "accuracy", "confusion", "dice", "roc_auc",
    "EncoderConfig", "FeaturePyramid", "build_encoder", "count_params",
    "transfer_encoder_weights", "warp",
    "read_nifti", "read_nifti4d", "read_nifti_any", "write_nifti", "write_nifti4d",
    "PhantomSpec", "gen_phantom", "gen_reg_pair",
    "PreprocessConfig", "normalize_unit", "preprocess_pipeline", "quantize_u16",
    "random_roi_crop", "reorient", "resample_iso", "resize_to", "select_3d_from_4d",
    "PretrainConfig", "VolumeSource", "l1_loss", "log_ratio_loss", "lr_schedule",
    "pretrain_loop", "total_loss", "train_step",
    "ImagingMeta", "TextEmbedding", "build_description", "pairwise_dist",
    "SeriesStack", "Volume", "Volume4D", "stack_to_volume",
    "__version__",
]
