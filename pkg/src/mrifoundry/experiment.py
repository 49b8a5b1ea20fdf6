"""Experiment harness: phantom generation through pre-training, the three
fine-tuning tasks, and evaluation, driven by one INI-style config file.

Stages are idempotent: each stage directory carries a marker with the
config hash and is skipped on re-runs while the hash is unchanged.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, model_tensors
from .errors import ConfigError, ManifestError, MriFoundryError
from .finetune import (
    ClsSample,
    FinetuneConfig,
    RegPair,
    SegSample,
    finetune_cls,
    finetune_reg,
    finetune_seg,
)
from .manifest import DatasetManifest, ManifestRecord, load_manifest, save_manifest
from .models import EncoderConfig
from .nifti import read_nifti, read_nifti4d, write_nifti, write_nifti4d
from .phantom import MODALITIES, PhantomSpec, gen_phantom, gen_reg_pair
from .preprocess import PreprocessConfig, preprocess_pipeline
from .pretrain import PretrainConfig, VolumeSource, pretrain_loop
from .text import build_description, get_provider
from .volume import Volume, Volume4D

log = logging.getLogger(__name__)

ALL_STAGES = (
    "generate",
    "preprocess",
    "pretrain",
    "finetune_seg",
    "finetune_cls",
    "finetune_reg",
    "eval",
)


@dataclass
class PhantomSection:
    size: tuple[int, int, int] = (32, 32, 32)
    n_objects: int = 2
    noise_sigma: float = 0.05
    pretrain_count: int = 16
    seg_train: int = 18
    seg_val: int = 6
    cls_train: int = 24
    cls_val: int = 8
    cls_test: int = 8
    reg_train_pairs: int = 8
    reg_val_pairs: int = 0
    reg_amplitude: float = 3.0


@dataclass
class TextSection:
    provider: str = "hashing"
    dim: int = 64
    embedding_file: str | None = None


@dataclass
class ExperimentConfig:
    out: Path
    seed: int = 0
    stages: tuple[str, ...] = ALL_STAGES
    phantoms: PhantomSection = field(default_factory=PhantomSection)
    preprocess: PreprocessConfig = field(default_factory=lambda: PreprocessConfig(target_grid=(32, 32, 32)))
    text: TextSection = field(default_factory=TextSection)
    encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(feature_size=12, window=4))
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    seg: FinetuneConfig = field(default_factory=lambda: FinetuneConfig(task="seg", epochs=20, lr=0.01))
    cls: FinetuneConfig = field(default_factory=lambda: FinetuneConfig(task="cls", epochs=10, lr=1e-3, batch=4))
    reg: FinetuneConfig = field(
        default_factory=lambda: FinetuneConfig(task="reg", epochs=50, lr=1e-3, similarity="mse", batch=1)
    )

    def __post_init__(self):
        self.out = Path(self.out)
        unknown = [s for s in self.stages if s not in ALL_STAGES]
        if unknown:
            raise ConfigError(f"unknown stage(s) {unknown}; valid: {ALL_STAGES}")

    def as_dict(self) -> dict:
        return {
            "out": str(self.out),
            "seed": self.seed,
            "stages": list(self.stages),
            "phantoms": asdict(self.phantoms),
            "preprocess": {
                "target_orientation": self.preprocess.target_orientation,
                "target_spacing_mm": self.preprocess.target_spacing_mm,
                "target_grid": list(self.preprocess.target_grid),
                "quantize": self.preprocess.quantize,
            },
            "text": asdict(self.text),
            "encoder": asdict(self.encoder),
            "pretrain": asdict(self.pretrain),
            "seg": asdict(self.seg),
            "cls": asdict(self.cls),
            "reg": asdict(self.reg),
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def load_experiment_config(path, out_override=None, seed_override=None) -> ExperimentConfig:
    """Parse the flat-section key=value config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    def section(name):
        return parser[name] if parser.has_section(name) else {}

    exp = section("experiment")
    out = Path(out_override) if out_override else Path(exp.get("out", "runs/experiment"))
    if not out.is_absolute():
        out = path.parent / out
    seed = int(seed_override if seed_override is not None else exp.get("seed", 0))
    stages = tuple(
        tok.strip() for tok in exp.get("stages", ",".join(ALL_STAGES)).split(",") if tok.strip()
    )

    ph = section("phantoms")
    phantoms = PhantomSection(
        size=_ints(ph.get("size", "32,32,32")),
        n_objects=int(ph.get("n_objects", 2)),
        noise_sigma=float(ph.get("noise_sigma", 0.05)),
        pretrain_count=int(ph.get("pretrain_count", 16)),
        seg_train=int(ph.get("seg_train", 18)),
        seg_val=int(ph.get("seg_val", 6)),
        cls_train=int(ph.get("cls_train", 24)),
        cls_val=int(ph.get("cls_val", 8)),
        cls_test=int(ph.get("cls_test", 8)),
        reg_train_pairs=int(ph.get("reg_train_pairs", 8)),
        reg_val_pairs=int(ph.get("reg_val_pairs", 0)),
        reg_amplitude=float(ph.get("reg_amplitude", 3.0)),
    )

    pp = section("preprocess")
    preprocess = PreprocessConfig(
        target_orientation=pp.get("orientation", "RAS"),
        target_spacing_mm=float(pp.get("spacing", 1.0)),
        target_grid=_ints(pp.get("grid", "32,32,32")),
        quantize=pp.get("quantize", "true").lower() in ("1", "true", "yes", "on"),
    )

    tx = section("text")
    text = TextSection(
        provider=tx.get("provider", "hashing"),
        dim=int(tx.get("dim", 64)),
        embedding_file=tx.get("embedding_file", None),
    )

    en = section("encoder")
    encoder = EncoderConfig(
        arch=en.get("arch", "swin"),
        feature_size=int(en.get("feature_size", 12)),
        depths=_ints(en.get("depths", "2,2,2,2")),
        heads=_ints(en.get("heads", "3,6,12,24")),
        window=int(en.get("window", 4)),
        patch=int(en.get("patch", 2)),
        in_channels=1,
    )

    pt = section("pretrain")
    pretrain = PretrainConfig(
        steps=int(pt.get("steps", 300)),
        warmup=int(pt.get("warmup", 30)),
        batch=int(pt.get("batch", 4)),
        roi=int(pt.get("roi", 32)),
        base_lr=float(pt["base_lr"]) if "base_lr" in pt else None,
        loss_weight=float(pt.get("loss_weight", 0.01)),
        checkpoint_every=int(pt.get("checkpoint_every", 100)),
        seed=seed,
    )

    def finetune_section(name, task, defaults):
        sec = section(name)
        return FinetuneConfig(
            task=task,
            epochs=int(sec.get("epochs", defaults["epochs"])),
            lr=float(sec.get("lr", defaults["lr"])),
            batch=int(sec.get("batch", defaults.get("batch", 2))),
            seed=seed,
            init=sec.get("init", "pretrain"),
            warmup_epochs=int(sec.get("warmup_epochs", 5)),
            hidden=int(sec.get("hidden", 512)),
            freeze_encoder=sec.get("freeze_encoder", "false").lower() in ("1", "true", "yes"),
            similarity=sec.get("similarity", defaults.get("similarity", "ncc")),
            smooth_weight=float(sec.get("smooth_weight", 1.0)),
        )

    seg = finetune_section("finetune_seg", "seg", {"epochs": 20, "lr": 0.01, "batch": 2})
    cls = finetune_section("finetune_cls", "cls", {"epochs": 10, "lr": 1e-3, "batch": 4})
    reg = finetune_section(
        "finetune_reg", "reg", {"epochs": 50, "lr": 1e-3, "batch": 1, "similarity": "mse"}
    )

    return ExperimentConfig(
        out=out, seed=seed, stages=stages, phantoms=phantoms, preprocess=preprocess,
        text=text, encoder=encoder, pretrain=pretrain, seg=seg, cls=cls, reg=reg,
    )


def _child_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# stages


# per-task ellipsoid sizes: segmentation needs enough foreground voxels to
# learn from, registration needs small structures so a 3-voxel field moves them
_RADIUS_FRACS = {1: (0.12, 0.22), 2: (0.16, 0.28), 3: (0.12, 0.22), 4: (0.09, 0.16)}


def _stage_generate(cfg: ExperimentConfig, stage_dir: Path) -> dict:
    ph = cfg.phantoms
    counts = {"pretrain": 0, "seg": 0, "cls": 0, "reg_pairs": 0}

    def make(i, tag, modality=None):
        spec = PhantomSpec(
            size=ph.size,
            n_objects=ph.n_objects,
            modality=modality or MODALITIES[i % 2],
            noise_sigma=ph.noise_sigma,
            seed=_child_seed(cfg.seed, tag, i),
            radius_frac=_RADIUS_FRACS[tag],
        )
        return spec

    # pre-training corpus
    pre_dir = stage_dir / "pretrain"
    pre_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(ph.pretrain_count):
        vol, _labels, meta = gen_phantom(make(i, 1))
        name = f"p{i:03d}.nii"
        write_nifti(vol, pre_dir / name)
        records.append(
            ManifestRecord(
                id=f"pre{i:03d}", volume_path=name, organ="phantom",
                modality=meta.modality, description=build_description(meta), split="pretrain",
            )
        )
        counts["pretrain"] += 1
    save_manifest(DatasetManifest(records, root=pre_dir), pre_dir / "manifest.jsonl")

    # segmentation task (binary foreground/background labels)
    seg_dir = stage_dir / "seg"
    seg_dir.mkdir(exist_ok=True)
    records = []
    for i in range(ph.seg_train + ph.seg_val):
        vol, labels, meta = gen_phantom(make(i, 2))
        name, lab_name = f"s{i:03d}.nii", f"s{i:03d}_lab.nii"
        write_nifti(vol, seg_dir / name)
        lab = Volume(
            data=(labels > 0).astype(np.uint16), spacing=vol.spacing,
            orientation=vol.orientation, dtype_tag="u16",
        )
        write_nifti(lab, seg_dir / lab_name)
        records.append(
            ManifestRecord(
                id=f"seg{i:03d}", volume_path=name, organ="phantom",
                modality=meta.modality, description=build_description(meta),
                split="train" if i < ph.seg_train else "val",
                extra={"labels_path": lab_name},
            )
        )
        counts["seg"] += 1
    save_manifest(DatasetManifest(records, root=seg_dir), seg_dir / "manifest.jsonl")

    # classification task (modality from the intensity profile)
    cls_dir = stage_dir / "cls"
    cls_dir.mkdir(exist_ok=True)
    records = []
    split_plan = (
        [("train", i) for i in range(ph.cls_train)]
        + [("val", i) for i in range(ph.cls_val)]
        + [("test", i) for i in range(ph.cls_test)]
    )
    for j, (split, i) in enumerate(split_plan):
        vol, _labels, meta = gen_phantom(make(j, 3))
        name = f"c{j:03d}.nii"
        write_nifti(vol, cls_dir / name)
        records.append(
            ManifestRecord(
                id=f"cls{j:03d}", volume_path=name, organ="phantom",
                modality=meta.modality, description=build_description(meta), split=split,
            )
        )
        counts["cls"] += 1
    save_manifest(DatasetManifest(records, root=cls_dir), cls_dir / "manifest.jsonl")

    # registration pairs with known ground-truth fields
    reg_dir = stage_dir / "reg"
    reg_dir.mkdir(exist_ok=True)
    records = []
    for i in range(ph.reg_train_pairs + ph.reg_val_pairs):
        spec = make(i, 4)
        moving, fixed, mlab, flab, fld = gen_reg_pair(spec, amplitude=ph.reg_amplitude)
        names = {key: f"pair{i:03d}_{key}.nii" for key in ("mov", "fix", "movlab", "fixlab", "field")}
        write_nifti(moving, reg_dir / names["mov"])
        write_nifti(fixed, reg_dir / names["fix"])
        for arr, key in ((mlab, "movlab"), (flab, "fixlab")):
            write_nifti(
                Volume(data=arr.astype(np.uint16), spacing=fixed.spacing,
                       orientation=fixed.orientation, dtype_tag="u16"),
                reg_dir / names[key],
            )
        frames = tuple(
            Volume(data=fld[c], spacing=fixed.spacing, orientation=fixed.orientation)
            for c in range(3)
        )
        write_nifti4d(Volume4D(frames=frames), reg_dir / names["field"])
        records.append(
            ManifestRecord(
                id=f"reg{i:03d}", volume_path=names["fix"], organ="phantom",
                modality=spec.modality, description="registration pair",
                split="train" if i < ph.reg_train_pairs else "val",
                extra={
                    "moving_path": names["mov"],
                    "moving_labels_path": names["movlab"],
                    "fixed_labels_path": names["fixlab"],
                    "field_path": names["field"],
                },
            )
        )
        counts["reg_pairs"] += 1
    save_manifest(DatasetManifest(records, root=reg_dir), reg_dir / "manifest.jsonl")
    return counts


def preprocess_manifest(manifest_path, out_dir, pre_cfg: PreprocessConfig) -> dict:
    """Standardize every volume in a manifest; inputs that fail any stage
    precondition are treated as corrupt and skipped (with a log entry)."""
    src = load_manifest(manifest_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    failures = 0
    for rec in src:
        try:
            path = src.resolve(rec)
            vol = read_nifti4d(path) if rec.extra.get("frames") else read_nifti(path)
            out_vol = preprocess_pipeline(vol, pre_cfg)
            name = f"{rec.id}.nii"
            write_nifti(out_vol, out_dir / name)
            records.append(
                ManifestRecord(
                    id=rec.id, volume_path=name, organ=rec.organ, modality=rec.modality,
                    description=rec.description, split=rec.split,
                )
            )
        except MriFoundryError:
            failures += 1
            log.exception("skipping corrupt input %s", rec.id)
    save_manifest(DatasetManifest(records, root=out_dir), out_dir / "manifest.jsonl")
    return {"processed": len(records), "skipped": failures}


def _stage_preprocess(cfg: ExperimentConfig, stage_dir: Path) -> dict:
    return preprocess_manifest(
        cfg.out / "generate" / "pretrain" / "manifest.jsonl", stage_dir, cfg.preprocess
    )


def _stage_pretrain(cfg: ExperimentConfig, stage_dir: Path) -> dict:
    manifest = load_manifest(cfg.out / "preprocess" / "manifest.jsonl")
    if len(manifest) == 0:
        raise ManifestError("no preprocessed volumes to pre-train on")
    volumes = [read_nifti(manifest.resolve(rec)) for rec in manifest]
    descriptions = [rec.description for rec in manifest]
    provider = get_provider(
        cfg.text.provider, dim=cfg.text.dim,
        embedding_file=cfg.text.embedding_file, descriptions=descriptions,
    )
    embeddings = np.stack([provider.embed(d).vector for d in descriptions])
    source = VolumeSource(volumes, embeddings)
    result = pretrain_loop(cfg.pretrain, cfg.encoder, source, stage_dir)

    l1 = [json.loads(line)["l1"] for line in open(result["metrics_path"], encoding="utf-8")]
    head = float(np.mean(l1[:10]))
    tail = float(np.mean(l1[-10:]))
    report = {
        **result,
        "l1_first10_mean": head,
        "l1_last10_mean": tail,
        "l1_ratio": tail / head if head else None,
        "final_checkpoint": result["checkpoints"][-1] if result["checkpoints"] else None,
    }
    with open(stage_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    return report


def _resolve_init(cfg: ExperimentConfig, fincfg: FinetuneConfig):
    """Map the init spec to encoder tensors (or None for scratch)."""
    if fincfg.init == "scratch":
        return None
    if fincfg.init == "pretrain":
        report_path = cfg.out / "pretrain" / "report.json"
        if not report_path.exists():
            raise ConfigError("init=pretrain but the pretrain stage has not produced a report")
        ckpt_path = json.load(open(report_path, encoding="utf-8"))["final_checkpoint"]
        return model_tensors(load_checkpoint(ckpt_path))
    return model_tensors(load_checkpoint(fincfg.init))


def _write_report(stage_dir: Path, report) -> dict:
    stage_dir.mkdir(parents=True, exist_ok=True)
    payload = report.as_dict()
    with open(stage_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    with open(stage_dir / "history.jsonl", "w", encoding="utf-8") as fh:
        for entry in payload["history"]:
            fh.write(json.dumps(entry) + "\n")
    return payload


def _stage_finetune_seg(cfg: ExperimentConfig, stage_dir: Path) -> dict:
    manifest = load_manifest(cfg.out / "generate" / "seg" / "manifest.jsonl")
    data: dict[str, list[SegSample]] = {"train": [], "val": []}
    for rec in manifest:
        img = np.asarray(read_nifti(manifest.resolve(rec)).data, dtype=np.float32)
        labels = np.asarray(read_nifti(manifest.resolve(rec, "labels_path")).data, dtype=np.int64)
        data[rec.split].append(SegSample(image=img, labels=labels))
    init = _resolve_init(cfg, cfg.seg)
    _model, report = finetune_seg(cfg.seg, cfg.encoder, data, n_classes=2, init_tensors=init)
    return _write_report(stage_dir, report)


def _stage_finetune_cls(cfg: ExperimentConfig, stage_dir: Path) -> dict:
    manifest = load_manifest(cfg.out / "generate" / "cls" / "manifest.jsonl")
    data: dict[str, list[ClsSample]] = {"train": [], "val": [], "test": []}
    for rec in manifest:
        img = np.asarray(read_nifti(manifest.resolve(rec)).data, dtype=np.float32)
        data[rec.split].append(ClsSample(image=img, label=MODALITIES.index(rec.modality)))
    init = _resolve_init(cfg, cfg.cls)
    _model, report = finetune_cls(cfg.cls, cfg.encoder, data, n_classes=2, init_tensors=init)
    return _write_report(stage_dir, report)


def _stage_finetune_reg(cfg: ExperimentConfig, stage_dir: Path) -> dict:
    manifest = load_manifest(cfg.out / "generate" / "reg" / "manifest.jsonl")
    data: dict[str, list[RegPair]] = {"train": [], "val": []}
    for rec in manifest:
        fixed = np.asarray(read_nifti(manifest.resolve(rec)).data, dtype=np.float32)
        moving = np.asarray(
            read_nifti(manifest.resolve(rec, "moving_path")).data, dtype=np.float32
        )
        mlab = np.asarray(
            read_nifti(manifest.resolve(rec, "moving_labels_path")).data, dtype=np.int64
        )
        flab = np.asarray(
            read_nifti(manifest.resolve(rec, "fixed_labels_path")).data, dtype=np.int64
        )
        data[rec.split].append(
            RegPair(moving=moving, fixed=fixed, moving_labels=mlab, fixed_labels=flab)
        )
    reg_enc = EncoderConfig(**{**asdict(cfg.encoder), "in_channels": 2})
    init = _resolve_init(cfg, cfg.reg)
    _model, report = finetune_reg(cfg.reg, reg_enc, data, init_tensors=init)
    return _write_report(stage_dir, report)


def _stage_eval(cfg: ExperimentConfig, stage_dir: Path) -> dict:
    stage_dir.mkdir(parents=True, exist_ok=True)
    metrics = {}
    for stage, keys in (
        ("pretrain", ("l1_first10_mean", "l1_last10_mean", "l1_ratio")),
        ("finetune_seg", None),
        ("finetune_cls", None),
        ("finetune_reg", None),
    ):
        report_path = cfg.out / stage / "report.json"
        if not report_path.exists():
            continue
        report = json.load(open(report_path, encoding="utf-8"))
        if keys:
            metrics[stage] = {k: report.get(k) for k in keys}
        else:
            metrics[stage] = report.get("metrics", {})
    timings = {}
    for stage in ALL_STAGES:
        marker = cfg.out / stage / "stage.json"
        if marker.exists():
            timings[stage] = json.load(open(marker, encoding="utf-8")).get("elapsed_s")
    summary = {
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "out": str(cfg.out),
        "metrics": metrics,
        "stage_elapsed_s": timings,
        "artifacts": {
            "pretrain_manifest": str(cfg.out / "generate" / "pretrain" / "manifest.jsonl"),
            "processed_manifest": str(cfg.out / "preprocess" / "manifest.jsonl"),
        },
    }
    with open(cfg.out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    return summary


_STAGE_FNS = {
    "generate": _stage_generate,
    "preprocess": _stage_preprocess,
    "pretrain": _stage_pretrain,
    "finetune_seg": _stage_finetune_seg,
    "finetune_cls": _stage_finetune_cls,
    "finetune_reg": _stage_finetune_reg,
    "eval": _stage_eval,
}


def run_experiment(cfg: ExperimentConfig, only_stages=None) -> dict:
    """Execute the configured stages in order, skipping any stage whose
    marker carries the current config hash."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    failure_path = cfg.out / "failure.json"
    if failure_path.exists():
        failure_path.unlink()
    wanted = tuple(only_stages) if only_stages else cfg.stages
    results = {}
    for stage in ALL_STAGES:
        if stage not in wanted:
            continue
        stage_dir = cfg.out / stage
        marker = stage_dir / "stage.json"
        if marker.exists():
            info = json.load(open(marker, encoding="utf-8"))
            if info.get("config_hash") == cfg.config_hash and info.get("completed"):
                log.info("stage %s up to date; skipping", stage)
                results[stage] = {"skipped": True}
                continue
        stage_dir.mkdir(parents=True, exist_ok=True)
        started = time.monotonic()
        try:
            report = _STAGE_FNS[stage](cfg, stage_dir)
        except Exception as exc:
            with open(failure_path, "w", encoding="utf-8") as fh:
                json.dump(
                    {"stage": stage, "error": type(exc).__name__, "message": str(exc)}, fh
                )
            raise
        with open(marker, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "config_hash": cfg.config_hash,
                    "completed": True,
                    "elapsed_s": time.monotonic() - started,
                },
                fh,
            )
        results[stage] = report
    summary_path = cfg.out / "summary.json"
    if summary_path.exists():
        return json.load(open(summary_path, encoding="utf-8"))
    return results


DESK_CONFIG = """\
# Desk-scale experiment: everything runs on a laptop CPU in minutes.
[experiment]
out = {out}
seed = {seed}

[phantoms]
size = 32,32,32
n_objects = 2
noise_sigma = 0.05
pretrain_count = 16
seg_train = 18
seg_val = 6
cls_train = 24
cls_val = 8
cls_test = 8
reg_train_pairs = 8
reg_val_pairs = 0
reg_amplitude = 3.0

[preprocess]
orientation = RAS
spacing = 1.0
grid = 32,32,32
quantize = true

[text]
provider = hashing
dim = 64

[encoder]
arch = swin
feature_size = 12
depths = 2,2,2,2
heads = 3,6,12,24
window = 4
patch = 2

[pretrain]
steps = 300
warmup = 30
batch = 4
roi = 32
base_lr = 1e-3
loss_weight = 0.01
checkpoint_every = 100

[finetune_seg]
epochs = 20
lr = 0.01
batch = 2
init = pretrain

[finetune_cls]
epochs = 10
lr = 1e-3
warmup_epochs = 5
batch = 4
init = pretrain

[finetune_reg]
epochs = 50
lr = 1e-3
batch = 1
similarity = mse
smooth_weight = 0.1
init = pretrain
"""


def write_desk_config(path, out_dir="runs/desk", seed=7) -> Path:
    """Materialize the default desk-scale config file."""
    path = Path(path)
    path.write_text(DESK_CONFIG.format(out=out_dir, seed=seed), encoding="utf-8")
    return path
