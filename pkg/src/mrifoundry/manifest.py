"""Newline-delimited dataset manifests.

One JSON object per line with keys {id, volume_path, organ, modality,
description, split}. Extra keys are preserved (downstream tasks attach
label paths and pairing info) but never required.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ManifestError

REQUIRED_KEYS = ("id", "volume_path", "organ", "modality", "description", "split")
SPLITS = ("pretrain", "train", "val", "test")


@dataclass
class ManifestRecord:
    id: str
    volume_path: str
    organ: str
    modality: str
    description: str
    split: str
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        obj = {k: getattr(self, k) for k in REQUIRED_KEYS}
        obj.update(self.extra)
        return json.dumps(obj, sort_keys=True)


@dataclass
class DatasetManifest:
    records: list[ManifestRecord]
    root: Path | None = None  # volume_path entries resolve against this

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def resolve(self, record: ManifestRecord, key: str = "volume_path") -> Path:
        raw = record.volume_path if key == "volume_path" else record.extra[key]
        p = Path(raw)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def subset(self, split: str) -> "DatasetManifest":
        return DatasetManifest(records=[r for r in self.records if r.split == split], root=self.root)


def validate_manifest(manifest: DatasetManifest, check_paths: bool = True) -> DatasetManifest:
    seen = set()
    for rec in manifest.records:
        if rec.id in seen:
            raise ManifestError(f"duplicate id {rec.id!r}")
        seen.add(rec.id)
        if rec.split not in SPLITS:
            raise ManifestError(f"record {rec.id!r}: unknown split {rec.split!r}")
        if check_paths and not manifest.resolve(rec).exists():
            raise ManifestError(f"record {rec.id!r}: volume path {rec.volume_path!r} not found")
    return manifest


def load_manifest(path, check_paths: bool = True) -> DatasetManifest:
    """Parse and validate a newline-delimited manifest file."""
    path = Path(path)
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid record: {exc}") from exc
            missing = [k for k in REQUIRED_KEYS if k not in obj]
            if missing:
                raise ManifestError(f"{path}:{lineno}: missing field(s) {missing}")
            extra = {k: v for k, v in obj.items() if k not in REQUIRED_KEYS}
            records.append(
                ManifestRecord(**{k: obj[k] for k in REQUIRED_KEYS}, extra=extra)
            )
    manifest = DatasetManifest(records=records, root=path.parent)
    return validate_manifest(manifest, check_paths=check_paths)


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        for rec in manifest.records:
            fh.write(rec.to_json() + "\n")
