"""Task adapters: segmentation, classification and registration fine-tuning
from a pre-trained encoder (or from scratch)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError, EvalError
from .metrics import accuracy, confusion, dice, roc_auc
from .models import (
    EncoderConfig,
    build_cls_model,
    build_reg_model,
    build_seg_model,
    load_encoder_from,
    smoothness_penalty,
    warp,
)
from .pretrain import lr_schedule

log = logging.getLogger(__name__)

TASKS = ("seg", "cls", "reg")


@dataclass
class FinetuneConfig:
    task: str
    epochs: int
    lr: float
    batch: int = 2
    seed: int = 0
    init: str = "scratch"  # "scratch" or a checkpoint path
    # segmentation (SGD + poly decay, UNet-style defaults)
    momentum: float = 0.9
    poly_power: float = 0.9
    # classification (Adam + cosine with linear warmup)
    warmup_epochs: int = 5
    hidden: int = 512
    freeze_encoder: bool = False
    # registration
    similarity: str = "ncc"
    smooth_weight: float = 1.0
    ncc_window: int = 9

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.task == "cls" and not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError("need 0 <= warmup_epochs < epochs")
        if self.similarity not in ("mse", "ncc"):
            raise ConfigError(f"unknown similarity {self.similarity!r}")


@dataclass
class SegSample:
    image: np.ndarray  # float32 (D, H, W)
    labels: np.ndarray  # int (D, H, W)


@dataclass
class ClsSample:
    image: np.ndarray
    label: int


@dataclass
class RegPair:
    moving: np.ndarray
    fixed: np.ndarray
    moving_labels: np.ndarray
    fixed_labels: np.ndarray
    true_field: np.ndarray | None = None


@dataclass
class FinetuneReport:
    task: str
    init: str
    seed: int
    metrics: dict = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "task": self.task,
            "init": self.init,
            "seed": self.seed,
            "metrics": self.metrics,
            "history": self.history,
        }


def _to_batch(images: list[np.ndarray]) -> torch.Tensor:
    return torch.from_numpy(np.stack(images).astype(np.float32)).unsqueeze(1)


def _snapshot(model) -> dict[str, torch.Tensor]:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def soft_dice_loss(logits: torch.Tensor, target: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """1 - mean soft Dice over foreground classes."""
    n_classes = logits.shape[1]
    probs = torch.softmax(logits, dim=1)
    one_hot = F.one_hot(target, n_classes).permute(0, 4, 1, 2, 3).to(probs.dtype)
    dims = (0, 2, 3, 4)
    inter = (probs * one_hot).sum(dim=dims)
    denom = probs.sum(dim=dims) + one_hot.sum(dim=dims)
    per_class = (2.0 * inter + eps) / (denom + eps)
    return 1.0 - per_class[1:].mean()


def _eval_seg(model, samples: list[SegSample], n_classes: int) -> dict:
    model.eval()
    per_class = {k: [] for k in range(n_classes)}
    with torch.no_grad():
        for s in samples:
            logits = model(_to_batch([s.image]))
            pred = logits.argmax(dim=1)[0].numpy()
            for k in range(n_classes):
                per_class[k].append(dice(pred, s.labels, k))
    model.train()
    means = {k: float(np.mean(v)) for k, v in per_class.items()}
    fg = [means[k] for k in range(1, n_classes)]
    return {"per_class_dice": means, "foreground_dice": float(np.mean(fg))}


def finetune_seg(
    cfg: FinetuneConfig,
    enc_cfg: EncoderConfig,
    data: dict[str, list[SegSample]],
    n_classes: int,
    init_tensors=None,
):
    """SGD with a polynomial learning-rate decay, cross-entropy plus soft
    Dice (equal weights), best-validation model selection."""
    torch.manual_seed(cfg.seed)
    model = build_seg_model(enc_cfg, n_classes, seed=cfg.seed)
    if init_tensors is not None:
        load_encoder_from(model, init_tensors)
    nesterov = cfg.momentum > 0
    opt = torch.optim.SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum, nesterov=nesterov)

    train = data.get("train", [])
    val = data.get("val", [])
    report = FinetuneReport(task="seg", init=cfg.init, seed=cfg.seed)
    best_dice, best_state = -1.0, None
    for epoch in range(cfg.epochs):
        lr_e = cfg.lr * (1.0 - epoch / cfg.epochs) ** cfg.poly_power
        for group in opt.param_groups:
            group["lr"] = lr_e
        order = np.random.default_rng([cfg.seed, 303, epoch]).permutation(len(train))
        epoch_loss = []
        for start in range(0, len(order), cfg.batch):
            chunk = [train[i] for i in order[start : start + cfg.batch]]
            x = _to_batch([s.image for s in chunk])
            t = torch.from_numpy(np.stack([s.labels for s in chunk]).astype(np.int64))
            logits = model(x)
            loss = F.cross_entropy(logits, t) + soft_dice_loss(logits, t)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            epoch_loss.append(float(loss.detach()))
        entry = {"epoch": epoch, "lr": lr_e, "loss": float(np.mean(epoch_loss)) if epoch_loss else None}
        if val:
            entry.update(_eval_seg(model, val, n_classes))
            if entry["foreground_dice"] > best_dice:
                best_dice = entry["foreground_dice"]
                best_state = _snapshot(model)
        report.history.append(entry)
    if best_state is not None:
        model.load_state_dict(best_state)
    final = _eval_seg(model, val or train, n_classes)
    report.metrics = {"eval_split": "val" if val else "train", **final}
    return model, report


def finetune_cls(
    cfg: FinetuneConfig,
    enc_cfg: EncoderConfig,
    data: dict[str, list[ClsSample]],
    n_classes: int,
    init_tensors=None,
):
    """Adam with cosine decay and a linear epoch warmup; reports accuracy,
    the confusion matrix and (for binary tasks) ROC AUC on the test split."""
    torch.manual_seed(cfg.seed)
    model = build_cls_model(enc_cfg, n_classes, hidden=cfg.hidden, seed=cfg.seed)
    if init_tensors is not None:
        load_encoder_from(model, init_tensors)
    if cfg.freeze_encoder:
        for p in model.encoder.parameters():
            p.requires_grad_(False)
    trainable = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(trainable, lr=cfg.lr)

    train = data.get("train", [])
    val = data.get("val", [])
    test = data.get("test", [])
    report = FinetuneReport(task="cls", init=cfg.init, seed=cfg.seed)

    def eval_acc(samples):
        model.eval()
        preds, labels, scores = [], [], []
        with torch.no_grad():
            for s in samples:
                logits = model(_to_batch([s.image]))
                probs = torch.softmax(logits, dim=1)[0]
                preds.append(int(probs.argmax()))
                scores.append(float(probs[1]) if n_classes == 2 else float(probs.max()))
                labels.append(s.label)
        model.train()
        return preds, labels, scores

    best_acc, best_state = -1.0, None
    for epoch in range(cfg.epochs):
        lr_e = lr_schedule(epoch, cfg.epochs, cfg.warmup_epochs, cfg.lr)
        for group in opt.param_groups:
            group["lr"] = lr_e
        order = np.random.default_rng([cfg.seed, 404, epoch]).permutation(len(train))
        epoch_loss = []
        for start in range(0, len(order), cfg.batch):
            chunk = [train[i] for i in order[start : start + cfg.batch]]
            x = _to_batch([s.image for s in chunk])
            t = torch.tensor([s.label for s in chunk], dtype=torch.int64)
            loss = F.cross_entropy(model(x), t)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            epoch_loss.append(float(loss.detach()))
        entry = {"epoch": epoch, "lr": lr_e, "loss": float(np.mean(epoch_loss)) if epoch_loss else None}
        if val:
            preds, labels, _ = eval_acc(val)
            entry["val_accuracy"] = accuracy(preds, labels)
            if entry["val_accuracy"] > best_acc:
                best_acc = entry["val_accuracy"]
                best_state = _snapshot(model)
        report.history.append(entry)
    if best_state is not None:
        model.load_state_dict(best_state)

    eval_samples = test or val or train
    preds, labels, scores = eval_acc(eval_samples)
    metrics = {
        "eval_split": "test" if test else ("val" if val else "train"),
        "accuracy": accuracy(preds, labels),
        "confusion": confusion(preds, labels, n_classes).tolist(),
        "lr_at_warmup_end": lr_schedule(cfg.warmup_epochs, cfg.epochs, cfg.warmup_epochs, cfg.lr),
    }
    if n_classes == 2 and len(set(labels)) == 2:
        metrics["auc"] = roc_auc(scores, labels)
    report.metrics = metrics
    return model, report


def ncc_loss(a: torch.Tensor, b: torch.Tensor, window: int = 9, eps: float = 1e-5) -> torch.Tensor:
    """1 - mean local normalized cross-correlation over cubic windows."""
    kernel = torch.ones(1, 1, window, window, window, dtype=a.dtype)
    pad = window // 2
    n = float(window**3)

    def sums(t):
        return F.conv3d(t, kernel, padding=pad)

    sa, sb = sums(a), sums(b)
    saa, sbb, sab = sums(a * a), sums(b * b), sums(a * b)
    cross = sab - sa * sb / n
    var_a = saa - sa * sa / n
    var_b = sbb - sb * sb / n
    cc = cross * cross / (var_a * var_b + eps)
    return 1.0 - cc.mean()


def adapt_input_channels(src: dict, dst_state: dict) -> dict:
    """Replicate single-channel encoder input kernels across extra input
    channels (scaled to preserve the response to a duplicated input)."""
    out = dict(src)
    for name, want in dst_state.items():
        if not name.startswith("encoder.") or name not in src:
            continue
        have = src[name]
        if (
            tuple(have.shape) != tuple(want.shape)
            and have.ndim == want.ndim == 5
            and have.shape[0] == want.shape[0]
            and have.shape[2:] == want.shape[2:]
            and have.shape[1] == 1
        ):
            reps = want.shape[1]
            out[name] = have.repeat(1, reps, 1, 1, 1) / reps
            log.info("adapted %s from 1 to %d input channels", name, reps)
    return out


def _eval_reg(model, pairs: list[RegPair]) -> dict:
    model.eval()
    baseline, registered = [], []
    with torch.no_grad():
        for pair in pairs:
            if pair.moving_labels is None or pair.fixed_labels is None:
                raise EvalError("registration evaluation needs label volumes")
            moving = _to_batch([pair.moving])
            fixed = _to_batch([pair.fixed])
            field = model(moving, fixed)
            mlab = torch.from_numpy(pair.moving_labels.astype(np.float32))[None, None]
            warped = warp(mlab, field, mode="nearest")[0, 0].numpy().astype(np.int64)
            classes = [k for k in np.unique(pair.fixed_labels) if k != 0]
            baseline.append(
                float(np.mean([dice(pair.moving_labels, pair.fixed_labels, k) for k in classes]))
            )
            registered.append(
                float(np.mean([dice(warped, pair.fixed_labels, k) for k in classes]))
            )
    model.train()
    return {
        "baseline_dice": float(np.mean(baseline)),
        "registered_dice": float(np.mean(registered)),
        "improvement": float(np.mean(registered) - np.mean(baseline)),
    }


def finetune_reg(
    cfg: FinetuneConfig,
    enc_cfg: EncoderConfig,
    data: dict[str, list[RegPair]],
    init_tensors=None,
):
    """Adam, batch 1; similarity (NCC by default, MSE optional) plus a
    diffusion-style smoothness penalty on the displacement field.
    Evaluation is the Dice of nearest-warped moving labels against the
    fixed labels, compared to the unregistered baseline."""
    if enc_cfg.in_channels != 2:
        raise ConfigError("registration needs an encoder with in_channels=2")
    torch.manual_seed(cfg.seed)
    model = build_reg_model(enc_cfg, seed=cfg.seed)
    if init_tensors is not None:
        init_tensors = adapt_input_channels(init_tensors, model.state_dict())
        load_encoder_from(model, init_tensors)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    train = data.get("train", [])
    report = FinetuneReport(task="reg", init=cfg.init, seed=cfg.seed)
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, 505, epoch]).permutation(len(train))
        epoch_loss = []
        for i in order:
            pair = train[i]
            moving = _to_batch([pair.moving])
            fixed = _to_batch([pair.fixed])
            field = model(moving, fixed)
            warped = warp(moving, field)
            if cfg.similarity == "mse":
                sim = F.mse_loss(warped, fixed)
            else:
                sim = ncc_loss(warped, fixed, window=cfg.ncc_window)
            loss = sim + cfg.smooth_weight * smoothness_penalty(field)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            epoch_loss.append(float(loss.detach()))
        report.history.append(
            {"epoch": epoch, "loss": float(np.mean(epoch_loss)) if epoch_loss else None}
        )

    eval_pairs = data.get("val") or train
    metrics = _eval_reg(model, eval_pairs)
    metrics["eval_split"] = "val" if data.get("val") else "train"
    report.metrics = metrics
    return model, report
