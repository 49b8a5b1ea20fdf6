import pytest

from mrifoundry.errors import ManifestError
from mrifoundry.manifest import DatasetManifest, ManifestRecord, load_manifest, save_manifest


def write_lines(path, lines):
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


def record_line(i, split="pretrain", **extra):
    import json

    obj = {
        "id": f"r{i}",
        "volume_path": f"v{i}.nii",
        "organ": "phantom",
        "modality": "T1w",
        "description": "MR T1w; 3.0T",
        "split": split,
    }
    obj.update(extra)
    return json.dumps(obj)


def touch_volumes(tmp_path, n):
    for i in range(n):
        (tmp_path / f"v{i}.nii").write_bytes(b"")


def test_empty_file(tmp_path):
    path = write_lines(tmp_path / "m.jsonl", [])
    manifest = load_manifest(path)
    assert len(manifest) == 0


def test_three_records_order(tmp_path):
    touch_volumes(tmp_path, 3)
    path = write_lines(tmp_path / "m.jsonl", [record_line(i) for i in range(3)])
    manifest = load_manifest(path)
    assert [r.id for r in manifest] == ["r0", "r1", "r2"]


def test_duplicate_id_named(tmp_path):
    touch_volumes(tmp_path, 1)
    lines = [record_line(0), record_line(0)]
    path = write_lines(tmp_path / "m.jsonl", lines)
    with pytest.raises(ManifestError, match="r0"):
        load_manifest(path)


def test_missing_field_line_number(tmp_path):
    import json

    bad = json.dumps({"id": "x", "volume_path": "v0.nii", "organ": "o", "modality": "m", "split": "train"})
    path = write_lines(tmp_path / "m.jsonl", [record_line(0), bad])
    touch_volumes(tmp_path, 1)
    with pytest.raises(ManifestError, match=":2:"):
        load_manifest(path)


def test_malformed_json_line_number(tmp_path):
    path = write_lines(tmp_path / "m.jsonl", [record_line(0), "{not json"])
    touch_volumes(tmp_path, 1)
    with pytest.raises(ManifestError, match=":2:"):
        load_manifest(path)


def test_unknown_split(tmp_path):
    touch_volumes(tmp_path, 1)
    path = write_lines(tmp_path / "m.jsonl", [record_line(0, split="holdout")])
    with pytest.raises(ManifestError, match="split"):
        load_manifest(path)


def test_unresolvable_path(tmp_path):
    path = write_lines(tmp_path / "m.jsonl", [record_line(0)])
    with pytest.raises(ManifestError, match="not found"):
        load_manifest(path)
    assert len(load_manifest(path, check_paths=False)) == 1


def test_extras_roundtrip(tmp_path):
    touch_volumes(tmp_path, 2)
    path = write_lines(
        tmp_path / "m.jsonl",
        [record_line(0, labels_path="v1.nii"), record_line(1, split="val")],
    )
    manifest = load_manifest(path)
    assert manifest.records[0].extra == {"labels_path": "v1.nii"}
    assert manifest.resolve(manifest.records[0], "labels_path").name == "v1.nii"
    out = tmp_path / "copy.jsonl"
    save_manifest(manifest, out)
    again = load_manifest(out)
    assert [r.to_json() for r in again] == [r.to_json() for r in manifest]


def test_subset(tmp_path):
    touch_volumes(tmp_path, 3)
    path = write_lines(
        tmp_path / "m.jsonl",
        [record_line(0, split="train"), record_line(1, split="val"), record_line(2, split="train")],
    )
    manifest = load_manifest(path)
    assert [r.id for r in manifest.subset("train")] == ["r0", "r2"]
