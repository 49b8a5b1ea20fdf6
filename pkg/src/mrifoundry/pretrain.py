"""Dual-objective pre-training: L1 reconstruction plus alignment of visual
embedding distance ratios to text embedding distance ratios.

The alignment term compares log distance-ratios over every
(anchor, pair) triplet in the batch, so it is invariant to any common
positive rescaling or isometry applied within either embedding space.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, load_checkpoint, restore_training, save_checkpoint, snapshot_training
from .errors import BatchSizeError, ConfigError, DivergenceError, ScheduleError, ShapeError
from .models import EncoderConfig, build_pretrain_model
from .preprocess import normalize_unit, random_roi_crop
from .volume import Volume

log = logging.getLogger(__name__)


@dataclass
class PretrainConfig:
    steps: int = 200_000
    warmup: int = 1_000
    batch: int = 8
    roi: int = 96
    base_lr: float | None = None  # defaults per encoder arch when unset
    loss_weight: float = 0.01
    dist_eps: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    checkpoint_every: int = 20_000
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not 0 <= self.warmup < self.steps:
            raise ConfigError(f"warmup must satisfy 0 <= warmup < steps, got {self.warmup}")
        if self.loss_weight < 0:
            raise ConfigError("loss weight must be >= 0")
        if self.batch < 1 or (self.loss_weight > 0 and self.batch < 3):
            raise ConfigError(
                f"batch={self.batch} too small (alignment loss needs triplets)"
            )
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")

    def resolve_base_lr(self, arch: str) -> float:
        if self.base_lr is not None:
            return self.base_lr
        return 1e-6 if arch == "swin" else 1e-4


def config_fingerprint(cfg: PretrainConfig, enc_cfg: EncoderConfig) -> str:
    blob = json.dumps({"pretrain": asdict(cfg), "encoder": asdict(enc_cfg)}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def l1_loss(recon: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if recon.shape != target.shape:
        raise ShapeError(f"shape mismatch: {tuple(recon.shape)} vs {tuple(target.shape)}")
    return (recon - target).abs().mean()


_TRIPLET_CACHE: dict[int, tuple[torch.Tensor, torch.Tensor, torch.Tensor]] = {}


def _triplet_indices(b: int) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Every anchor crossed with every unordered pair of distinct others."""
    cached = _TRIPLET_CACHE.get(b)
    if cached is None:
        anchors, lefts, rights = [], [], []
        for a in range(b):
            others = [k for k in range(b) if k != a]
            for x in range(len(others)):
                for y in range(x + 1, len(others)):
                    anchors.append(a)
                    lefts.append(others[x])
                    rights.append(others[y])
        cached = (
            torch.tensor(anchors, dtype=torch.long),
            torch.tensor(lefts, dtype=torch.long),
            torch.tensor(rights, dtype=torch.long),
        )
        _TRIPLET_CACHE[b] = cached
    return cached


def _log_dist(x: torch.Tensor, a: torch.Tensor, b: torch.Tensor, eps: float) -> torch.Tensor:
    sq = (x[a] - x[b]).square().sum(dim=-1)
    # clamp keeps the sqrt gradient finite on duplicate samples
    return (sq.clamp_min(1e-30).sqrt() + eps).log()


def log_ratio_loss(f_vis: torch.Tensor, y_txt: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Mean squared difference of log distance-ratios between the two spaces.

    ``f_vis`` is [B, d] and ``y_txt`` [B, e]; only intra-space distances are
    compared so the dimensions may differ. Needs B >= 3.
    """
    if f_vis.ndim != 2 or y_txt.ndim != 2:
        raise ShapeError("embeddings must be [B, dim] matrices")
    if f_vis.shape[0] != y_txt.shape[0]:
        raise ShapeError(f"batch mismatch: {f_vis.shape[0]} vs {y_txt.shape[0]}")
    b = f_vis.shape[0]
    if b < 3:
        raise BatchSizeError(f"log-ratio loss needs a batch of >= 3, got {b}")
    anchors, lefts, rights = _triplet_indices(b)
    vis = _log_dist(f_vis, anchors, lefts, eps) - _log_dist(f_vis, anchors, rights, eps)
    txt = _log_dist(y_txt, anchors, lefts, eps) - _log_dist(y_txt, anchors, rights, eps)
    return (vis - txt).square().mean()


def total_loss(
    recon: torch.Tensor,
    target: torch.Tensor,
    f_vis: torch.Tensor,
    y_txt: torch.Tensor,
    weight: float = 0.01,
    eps: float = 1e-6,
) -> dict[str, torch.Tensor]:
    """total = l1 + weight * log_ratio; with weight 0 the text embeddings
    are never touched."""
    l1 = l1_loss(recon, target)
    if weight > 0:
        ratio = log_ratio_loss(f_vis, y_txt, eps)
        total = l1 + weight * ratio
    else:
        ratio = torch.zeros((), dtype=l1.dtype)
        total = l1
    return {"total": total, "l1": l1, "log_ratio": ratio}


def lr_schedule(step: int, steps: int, warmup: int, base_lr: float) -> float:
    """Linear warmup from zero, then cosine decay to zero at ``steps``."""
    if not 0 <= step <= steps:
        raise ScheduleError(f"step {step} outside [0, {steps}]")
    if step < warmup:
        return base_lr * step / warmup
    span = steps - warmup
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * (step - warmup) / span))


class VolumeSource:
    """Deterministic (crop, text-embedding) batch stream.

    Sample order is a pure function of (seed, step): positions walk cyclic
    reshuffled epochs, crops draw from per-(seed, step, slot) generators,
    so single- and multi-worker prefetch deliver identical batches and
    resuming mid-run is exact.
    """

    def __init__(self, volumes: list[Volume], embeddings: np.ndarray):
        if len(volumes) == 0:
            raise ConfigError("empty data source")
        embeddings = np.asarray(embeddings, dtype=np.float32)
        if embeddings.ndim != 2 or embeddings.shape[0] != len(volumes):
            raise ShapeError(
                f"need one embedding per volume: {embeddings.shape} vs {len(volumes)}"
            )
        self.volumes = [normalize_unit(v) for v in volumes]
        self.embeddings = embeddings
        self._perms: dict[tuple[int, int], np.ndarray] = {}

    def _index(self, seed: int, position: int) -> int:
        n = len(self.volumes)
        epoch, within = divmod(position, n)
        key = (seed, epoch)
        perm = self._perms.get(key)
        if perm is None:
            perm = np.random.default_rng([seed, 101, epoch]).permutation(n)
            self._perms[key] = perm
        return int(perm[within])

    def batch(self, seed: int, step: int, batch_size: int, roi: int):
        crops = []
        embeds = []
        for slot in range(batch_size):
            idx = self._index(seed, step * batch_size + slot)
            rng = np.random.default_rng([seed, 202, step, slot])
            crops.append(np.asarray(random_roi_crop(self.volumes[idx], roi, rng).data))
            embeds.append(self.embeddings[idx])
        x = torch.from_numpy(np.stack(crops)).unsqueeze(1)
        y = torch.from_numpy(np.stack(embeds))
        return x, y


@dataclass
class TrainState:
    model: torch.nn.Module
    optimizer: torch.optim.Optimizer
    cfg: PretrainConfig
    base_lr: float
    step: int = 0
    config_hash: str = ""


def init_train_state(cfg: PretrainConfig, enc_cfg: EncoderConfig) -> TrainState:
    model = build_pretrain_model(enc_cfg, seed=cfg.seed)
    base_lr = cfg.resolve_base_lr(enc_cfg.arch)
    optimizer = torch.optim.AdamW(
        model.parameters(),
        lr=base_lr,
        betas=(cfg.beta1, cfg.beta2),
        weight_decay=cfg.weight_decay,
    )
    return TrainState(
        model=model,
        optimizer=optimizer,
        cfg=cfg,
        base_lr=base_lr,
        step=0,
        config_hash=config_fingerprint(cfg, enc_cfg),
    )


def train_step(state: TrainState, x: torch.Tensor, y: torch.Tensor) -> dict[str, float]:
    """One forward/backward/AdamW update; the crop is its own target."""
    cfg = state.cfg
    lr = lr_schedule(state.step, cfg.steps, cfg.warmup, state.base_lr)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    recon, pooled = state.model(x)
    losses = total_loss(recon, x, pooled, y, cfg.loss_weight, cfg.dist_eps)
    total = losses["total"]
    if not bool(torch.isfinite(total)):
        raise DivergenceError(
            f"non-finite loss at step {state.step}: "
            f"l1={float(losses['l1'])}, log_ratio={float(losses['log_ratio'])}"
        )
    state.optimizer.zero_grad(set_to_none=True)
    total.backward()
    state.optimizer.step()
    state.step += 1
    return {
        "step": state.step,
        "l1": float(losses["l1"].detach()),
        "log_ratio": float(losses["log_ratio"].detach()),
        "total": float(total.detach()),
        "lr": lr,
    }


def pretrain_loop(
    cfg: PretrainConfig,
    enc_cfg: EncoderConfig,
    source: VolumeSource,
    out_dir,
    resume_from=None,
) -> dict:
    """Run the full schedule, checkpointing every ``checkpoint_every`` steps
    and at the final step. Emits one metrics record per step."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = init_train_state(cfg, enc_cfg)

    if resume_from is not None:
        ckpt = resume_from if isinstance(resume_from, Checkpoint) else load_checkpoint(
            resume_from, expected_config_hash=state.config_hash
        )
        if ckpt.config_hash != state.config_hash:
            from .errors import CompatibilityError

            raise CompatibilityError(
                f"checkpoint {ckpt.config_hash} does not match run {state.config_hash}"
            )
        restore_training(state.model, state.optimizer, ckpt)
        state.step = ckpt.step

    metrics_path = out_dir / "metrics.jsonl"
    checkpoints: list[Path] = []
    mode = "a" if state.step > 0 else "w"
    with open(metrics_path, mode, encoding="utf-8") as metrics_fh:
        for step in range(state.step, cfg.steps):
            x, y = source.batch(cfg.seed, step, cfg.batch, cfg.roi)
            try:
                record = train_step(state, x, y)
            except DivergenceError:
                log.exception("aborting at step %d; last checkpoint retained", step)
                raise
            metrics_fh.write(json.dumps(record) + "\n")
            if state.step % cfg.checkpoint_every == 0 or state.step == cfg.steps:
                path = out_dir / f"checkpoint_{state.step:08d}.ckpt"
                save_checkpoint(
                    snapshot_training(
                        state.model, state.optimizer, state.step, state.config_hash, cfg.seed
                    ),
                    path,
                )
                checkpoints.append(path)
    return {
        "checkpoints": [str(p) for p in checkpoints],
        "metrics_path": str(metrics_path),
        "final_step": state.step,
        "config_hash": state.config_hash,
    }
