"""Bitwise-invertible training checkpoints.

Layout: 8-byte magic ``TRIADCK1``, uint32 little-endian header length, a
UTF-8 JSON header (config hash, step, rng snapshot, tensor directory of
name/shape/offset), the concatenated little-endian float32 tensor
payloads, and a trailing CRC32 of the payload.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError, CompatibilityError, IntegrityError

MAGIC = b"TRIADCK1"


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    step: int
    config_hash: str
    rng: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tensors = {
            name: np.ascontiguousarray(arr, dtype=np.float32)
            for name, arr in self.tensors.items()
        }


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    directory = []
    chunks = []
    offset = 0
    for name, arr in ckpt.tensors.items():
        raw = arr.astype("<f4", copy=False).tobytes()
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = json.dumps(
        {
            "config_hash": ckpt.config_hash,
            "step": ckpt.step,
            "rng": ckpt.rng,
            "tensors": directory,
        }
    ).encode("utf-8")
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_checkpoint(path, expected_config_hash: str | None = None) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    hlen = struct.unpack_from("<I", raw, len(MAGIC))[0]
    body = len(MAGIC) + 4
    if len(raw) < body + hlen + 4:
        raise IntegrityError(f"{path}: truncated header")
    try:
        header = json.loads(raw[body : body + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc

    directory = header["tensors"]
    payload_len = sum(4 * int(np.prod(e["shape"], dtype=np.int64)) for e in directory)
    expected_size = body + hlen + payload_len + 4
    if len(raw) != expected_size:
        raise IntegrityError(
            f"{path}: file is {len(raw)} bytes, expected {expected_size}"
        )
    payload = raw[body + hlen : body + hlen + payload_len]
    crc = struct.unpack_from("<I", raw, body + hlen + payload_len)[0]
    if zlib.crc32(payload) != crc:
        raise IntegrityError(f"{path}: payload checksum mismatch")

    if expected_config_hash is not None and header["config_hash"] != expected_config_hash:
        raise CompatibilityError(
            f"{path}: checkpoint for config {header['config_hash']}, "
            f"expected {expected_config_hash}"
        )

    tensors = {}
    for entry in directory:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=start)
        tensors[entry["name"]] = arr.reshape(shape).copy()
    return Checkpoint(
        tensors=tensors,
        step=int(header["step"]),
        config_hash=header["config_hash"],
        rng=header.get("rng", {}),
    )


def snapshot_training(model, optimizer, step: int, config_hash: str, seed: int) -> Checkpoint:
    """Capture model parameters and optimizer moments as a checkpoint."""
    tensors: dict[str, np.ndarray] = {}
    for name, t in model.state_dict().items():
        tensors[f"model.{name}"] = t.detach().cpu().numpy()
    names = {id(p): n for n, p in model.named_parameters()}
    for group in optimizer.param_groups:
        for p in group["params"]:
            state = optimizer.state.get(p)
            if not state:
                continue
            pname = names[id(p)]
            tensors[f"optim.{pname}.exp_avg"] = state["exp_avg"].detach().cpu().numpy()
            tensors[f"optim.{pname}.exp_avg_sq"] = state["exp_avg_sq"].detach().cpu().numpy()
            tensors[f"optim.{pname}.step"] = np.asarray(float(state["step"]), dtype=np.float32)
    rng = {"seed": int(seed), "torch": torch.get_rng_state().numpy().tobytes().hex()}
    return Checkpoint(tensors=tensors, step=step, config_hash=config_hash, rng=rng)


def restore_training(model, optimizer, ckpt: Checkpoint) -> None:
    """Invert :func:`snapshot_training` onto freshly built model/optimizer."""
    model_state = {}
    for name, arr in ckpt.tensors.items():
        if name.startswith("model."):
            model_state[name[len("model.") :]] = torch.from_numpy(arr.copy())
    model.load_state_dict(model_state)
    for pname, p in model.named_parameters():
        key = f"optim.{pname}.exp_avg"
        if key not in ckpt.tensors:
            continue
        optimizer.state[p] = {
            "step": torch.tensor(float(ckpt.tensors[f"optim.{pname}.step"])),
            "exp_avg": torch.from_numpy(ckpt.tensors[key].copy()),
            "exp_avg_sq": torch.from_numpy(ckpt.tensors[f"optim.{pname}.exp_avg_sq"].copy()),
        }
    if "torch" in ckpt.rng:
        raw = np.frombuffer(bytes.fromhex(ckpt.rng["torch"]), dtype=np.uint8).copy()
        torch.set_rng_state(torch.from_numpy(raw))


def model_tensors(ckpt: Checkpoint) -> dict[str, torch.Tensor]:
    """The ``model.*`` namespace of a checkpoint as torch tensors."""
    return {
        name[len("model.") :]: torch.from_numpy(arr.copy())
        for name, arr in ckpt.tensors.items()
        if name.startswith("model.")
    }
