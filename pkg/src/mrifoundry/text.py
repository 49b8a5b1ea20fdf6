"""Imaging descriptions and the frozen text-embedding provider.

Descriptions summarize acquisition parameters only (modality, field
strength, timings, vendor) and deliberately never mention anatomy: the
resulting embedding distances supervise the visual embedding geometry, so
the signal must be organ-independent.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, MetadataError, ShapeError

# Anatomy words that must never appear in a description.
ORGAN_DENYLIST = (
    "brain", "breast", "prostate", "liver", "heart", "lung", "kidney",
    "spleen", "pancreas", "colon", "hippocampus", "abdomen", "cardiac",
)

DEFAULT_EMBED_DIM = 256


@dataclass
class ImagingMeta:
    """Organ-independent acquisition metadata for one volume."""

    modality: str
    field_strength_t: float | None = None
    tr_ms: float | None = None
    te_ms: float | None = None
    manufacturer: str | None = None
    sequence_name: str | None = None

    def __post_init__(self):
        if not self.modality:
            raise MetadataError("modality tag must be non-empty")
        if self.field_strength_t is not None and self.field_strength_t <= 0:
            raise MetadataError(f"field strength must be positive, got {self.field_strength_t}")
        for text in (self.modality, self.manufacturer or "", self.sequence_name or ""):
            low = text.lower()
            for organ in ORGAN_DENYLIST:
                if organ in low:
                    raise MetadataError(f"metadata field {text!r} names anatomy ({organ!r})")


def _num(x: float) -> str:
    """Render TR/TE style numbers without a trailing .0."""
    f = float(x)
    return str(int(f)) if f == int(f) else str(f)


def build_description(meta: ImagingMeta) -> str:
    """Canonical description string; absent fields are omitted."""
    parts = [f"MR {meta.modality}"]
    if meta.field_strength_t is not None:
        parts.append(f"{float(meta.field_strength_t)}T")
    if meta.tr_ms is not None:
        parts.append(f"TR={_num(meta.tr_ms)}ms")
    if meta.te_ms is not None:
        parts.append(f"TE={_num(meta.te_ms)}ms")
    if meta.manufacturer:
        parts.append(meta.manufacturer)
    if meta.sequence_name:
        parts.append(meta.sequence_name)
    return "; ".join(parts)


@dataclass
class TextEmbedding:
    vector: np.ndarray
    source_text: str

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float32)
        if vec.ndim != 1:
            raise ShapeError(f"embedding must be a vector, got shape {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise DataError("embedding has non-finite entries")
        norm = float(np.linalg.norm(vec.astype(np.float64)))
        if abs(norm - 1.0) > 1e-6:
            raise DataError(f"embedding must be unit-norm, got |v|={norm}")
        self.vector = vec

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


class HashingTextEncoder:
    """Frozen character-trigram feature hasher.

    Signed hashing of trigrams into ``dim`` buckets followed by L2
    normalization. Fully deterministic across processes (keyed on a stable
    digest, not Python's randomized ``hash``).
    """

    name = "hashing"

    def __init__(self, dim: int = DEFAULT_EMBED_DIM):
        if dim < 2:
            raise DataError(f"embedding dim must be >= 2, got {dim}")
        self.dim = int(dim)

    def embed(self, text: str) -> TextEmbedding:
        if not text:
            raise DataError("cannot embed empty text")
        padded = f"\x02\x02{text}\x03\x03"  # boundary markers; short strings still hash
        acc = np.zeros(self.dim, dtype=np.float64)
        for i in range(len(padded) - 2):
            gram = padded[i : i + 3].encode("utf-8")
            h = int.from_bytes(hashlib.blake2b(gram, digest_size=8).digest(), "little")
            sign = 1.0 if (h >> 63) & 1 else -1.0
            acc[h % self.dim] += sign
        norm = np.linalg.norm(acc)
        if norm == 0.0:  # astronomically unlikely sign cancellation
            acc[0] = 1.0
            norm = 1.0
        return TextEmbedding(vector=(acc / norm).astype(np.float32), source_text=text)


class ExternalEmbeddingProvider:
    """Embeddings precomputed by an external model, keyed by description."""

    name = "external"

    def __init__(self, descriptions: list[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[0] != len(descriptions):
            raise ShapeError(
                f"need one embedding row per description: {matrix.shape} vs {len(descriptions)}"
            )
        self.dim = matrix.shape[1]
        self._table = {d: matrix[i] for i, d in enumerate(descriptions)}

    def embed(self, text: str) -> TextEmbedding:
        if text not in self._table:
            raise DataError(f"no precomputed embedding for {text!r}")
        return TextEmbedding(vector=self._table[text], source_text=text)


def pairwise_dist(embeddings) -> np.ndarray:
    """Symmetric Euclidean distance matrix over a list of embeddings."""
    if len(embeddings) < 2:
        raise ShapeError("need at least 2 embeddings")
    vecs = [e.vector if isinstance(e, TextEmbedding) else np.asarray(e) for e in embeddings]
    dims = {v.shape for v in vecs}
    if len(dims) != 1:
        raise ShapeError(f"mixed embedding dimensions: {sorted(dims)}")
    x = np.stack(vecs).astype(np.float64)
    diff = x[:, None, :] - x[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(d, 0.0)
    return d


def save_embedding_file(path, matrix: np.ndarray) -> None:
    """Flat binary format: one ASCII header line "D N", then D*N LE float32."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ShapeError(f"embedding matrix must be 2D, got {matrix.shape}")
    n, d = matrix.shape
    with open(Path(path), "wb") as fh:
        fh.write(f"{d} {n}\n".encode("ascii"))
        fh.write(matrix.tobytes())


def load_embedding_file(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise DataError(f"{path}: missing embedding header line")
    try:
        d, n = (int(tok) for tok in raw[:nl].split())
    except ValueError as exc:
        raise DataError(f"{path}: malformed header {raw[:nl]!r}") from exc
    payload = raw[nl + 1 :]
    need = 4 * d * n
    if len(payload) != need:
        raise DataError(f"{path}: payload is {len(payload)} bytes, expected {need}")
    return np.frombuffer(payload, dtype="<f4").reshape(n, d).copy()


def get_provider(name: str, dim: int = DEFAULT_EMBED_DIM, embedding_file=None, descriptions=None):
    if name == "hashing":
        return HashingTextEncoder(dim=dim)
    if name == "external":
        if embedding_file is None or descriptions is None:
            raise DataError("external provider needs an embedding file and description list")
        return ExternalEmbeddingProvider(descriptions, load_embedding_file(embedding_file))
    raise DataError(f"unknown text provider {name!r}")
