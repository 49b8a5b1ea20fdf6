"""In-memory volume types and slice-stack assembly.

A :class:`Volume` is the currency of the whole pipeline: a 3D scalar grid
with millimetre spacing, an axis-orientation code, and an intensity mapping
for quantized data. Geometry and intensity metadata are normalized to
32-bit float precision at construction so that file serialization
round-trips bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, GeometryError, OrientationError, SpacingError

# World frame is RAS+: +x points Right, +y Anterior, +z Superior.
_LETTER_TO_DIR = {
    "R": np.array([1.0, 0.0, 0.0]),
    "L": np.array([-1.0, 0.0, 0.0]),
    "A": np.array([0.0, 1.0, 0.0]),
    "P": np.array([0.0, -1.0, 0.0]),
    "S": np.array([0.0, 0.0, 1.0]),
    "I": np.array([0.0, 0.0, -1.0]),
}
_AXIS_PAIRS = ({"L", "R"}, {"A", "P"}, {"S", "I"})
_POS_LETTERS = ("R", "A", "S")
_NEG_LETTERS = ("L", "P", "I")

DTYPE_TAGS = {"u16": np.uint16, "f32": np.float32}


def validate_axis_code(code: str) -> str:
    """Check that ``code`` uses exactly one letter from each opposing pair."""
    if not isinstance(code, str) or len(code) != 3:
        raise OrientationError(f"axis code must be 3 characters, got {code!r}")
    used = [False, False, False]
    for ch in code:
        if ch not in _LETTER_TO_DIR:
            raise OrientationError(f"unknown axis letter {ch!r} in {code!r}")
        pair = next(i for i, p in enumerate(_AXIS_PAIRS) if ch in p)
        if used[pair]:
            raise OrientationError(f"axis code {code!r} repeats the {ch!r} axis pair")
        used[pair] = True
    return code


def axis_directions(code: str) -> np.ndarray:
    """World direction vectors (rows) for each axis of an orientation code."""
    validate_axis_code(code)
    return np.stack([_LETTER_TO_DIR[ch] for ch in code])


def snap_direction(vec: np.ndarray) -> str:
    """Map a world direction vector to its dominant axis letter.

    Vectors more than 45 degrees off every world axis are rejected: the
    pipeline only handles axis-aligned (or nearly axis-aligned) volumes.
    """
    v = np.asarray(vec, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise OrientationError("zero-length direction vector")
    k = int(np.argmax(np.abs(v)))
    if abs(v[k]) < norm * (np.sqrt(0.5) - 1e-9):
        raise OrientationError(
            f"direction {v.tolist()} is oblique beyond 45 degrees; refusing to snap"
        )
    return _POS_LETTERS[k] if v[k] > 0 else _NEG_LETTERS[k]


def _f32(x: float) -> float:
    return float(np.float32(x))


@dataclass(frozen=True)
class Volume:
    """A 3D scalar grid with physical spacing and orientation.

    ``data`` is indexed (axis0, axis1, axis2). ``orientation`` names the
    world direction each axis points toward, e.g. ``"RAS"``. For ``u16``
    volumes, physical intensity = ``intensity_offset + intensity_scale *
    stored``; for ``f32`` the mapping is the identity.
    """

    data: np.ndarray
    spacing: tuple[float, float, float]
    orientation: str
    dtype_tag: str = "f32"
    intensity_offset: float = 0.0
    intensity_scale: float = 1.0

    def __post_init__(self):
        if self.dtype_tag not in DTYPE_TAGS:
            raise DataError(f"unknown dtype tag {self.dtype_tag!r}")
        data = np.ascontiguousarray(self.data, dtype=DTYPE_TAGS[self.dtype_tag])
        if data.ndim != 3 or min(data.shape) < 1:
            raise GeometryError(f"volume data must be 3D with dims >= 1, got {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        spacing = tuple(_f32(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise GeometryError(f"spacing must be 3 positive reals, got {self.spacing}")
        object.__setattr__(self, "spacing", spacing)
        validate_axis_code(self.orientation)
        object.__setattr__(self, "intensity_offset", _f32(self.intensity_offset))
        object.__setattr__(self, "intensity_scale", _f32(self.intensity_scale))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def physical(self) -> np.ndarray:
        """Voxel values in physical intensity units, as float32."""
        if self.dtype_tag == "f32":
            return np.asarray(self.data)
        return (self.intensity_offset + self.intensity_scale * self.data.astype(np.float32)).astype(
            np.float32
        )

    def affine(self) -> np.ndarray:
        """4x4 voxel-index -> world (RAS mm) transform with origin at voxel 0."""
        out = np.eye(4)
        dirs = axis_directions(self.orientation)
        for j in range(3):
            out[:3, j] = dirs[j] * self.spacing[j]
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.dtype_tag == other.dtype_tag
            and self.spacing == other.spacing
            and self.orientation == other.orientation
            and self.intensity_offset == other.intensity_offset
            and self.intensity_scale == other.intensity_scale
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )


@dataclass(frozen=True)
class Volume4D:
    """An ordered stack of geometrically identical 3D frames (e.g. DCE-MRI)."""

    frames: tuple[Volume, ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 2:
            raise GeometryError("a 4D volume needs at least 2 frames")
        first = frames[0]
        for f in frames[1:]:
            if (
                f.shape != first.shape
                or f.spacing != first.spacing
                or f.orientation != first.orientation
            ):
                raise GeometryError("4D frames must share shape, spacing and orientation")
        object.__setattr__(self, "frames", frames)

    @property
    def t(self) -> int:
        return len(self.frames)


@dataclass
class SeriesStack:
    """A pile of 2D slices with per-slice world positions.

    Stand-in for a scanner series: ``axis_dirs`` are unit world directions
    of increasing slice index 0 (rows) and index 1 (columns), and
    ``pixel_spacing`` the in-plane mm per step along those axes.
    """

    slices: list[np.ndarray]
    positions: list[tuple[float, float, float]]
    axis_dirs: tuple[tuple[float, float, float], tuple[float, float, float]]
    pixel_spacing: tuple[float, float]
    metadata: dict = field(default_factory=dict)


def stack_to_volume(stack: SeriesStack) -> Volume | Volume4D:
    """Assemble a slice stack into a 3D volume, or a 4D volume when slice
    positions repeat (t frames sharing each position).

    Slices are sorted by the projection of their position onto the slice
    normal, so input order does not matter. Slice spacing is inferred from
    consecutive position deltas and must be regular to within 1% of the
    median delta.
    """
    n = len(stack.slices)
    if n < 2:
        raise GeometryError("need at least 2 slices")
    if len(stack.positions) != n:
        raise GeometryError("positions and slices length mismatch")
    shape0 = np.asarray(stack.slices[0]).shape
    for s in stack.slices:
        if np.asarray(s).shape != shape0:
            raise GeometryError(f"inconsistent slice shapes: {np.asarray(s).shape} vs {shape0}")
    if len(shape0) != 2:
        raise GeometryError("slices must be 2D")

    d0 = np.asarray(stack.axis_dirs[0], dtype=float)
    d1 = np.asarray(stack.axis_dirs[1], dtype=float)
    normal = np.cross(d0, d1)
    nn = np.linalg.norm(normal)
    if nn == 0:
        raise GeometryError("degenerate slice orientation vectors")
    normal /= nn

    proj = np.array([float(np.dot(p, normal)) for p in stack.positions])
    order = np.argsort(proj, kind="stable")

    # Cluster projections that coincide (exact up to float noise): k slices
    # per position means a k-frame 4D acquisition.
    tol = 1e-6 * max(1.0, float(np.max(np.abs(proj))))
    groups: list[list[int]] = []
    last = None
    for idx in order:
        if last is not None and abs(proj[idx] - last) <= tol:
            groups[-1].append(int(idx))
        else:
            groups.append([int(idx)])
        last = proj[idx]

    sizes = {len(g) for g in groups}
    if len(sizes) != 1:
        raise GeometryError(f"uneven frames per slice position: counts {sorted(sizes)}")
    t = sizes.pop()
    if len(groups) < 2:
        raise GeometryError("all slices share one position; no through-plane axis")

    centers = np.array([np.mean([proj[i] for i in g]) for g in groups])
    deltas = np.diff(centers)
    med = float(np.median(deltas))
    if med <= 0:
        raise SpacingError("slice positions are not strictly increasing along the normal")
    if np.any(np.abs(deltas - med) > 0.01 * med):
        raise SpacingError(
            f"irregular slice spacing: deltas {deltas.tolist()} vs median {med:.6g}"
        )

    code = snap_direction(d0) + snap_direction(d1) + snap_direction(normal)
    validate_axis_code(code)
    spacing = (float(stack.pixel_spacing[0]), float(stack.pixel_spacing[1]), med)

    def build(frame: int) -> Volume:
        planes = [np.asarray(stack.slices[g[frame]], dtype=np.float32) for g in groups]
        data = np.stack(planes, axis=2)
        return Volume(data=data, spacing=spacing, orientation=code, dtype_tag="f32")

    if t == 1:
        return build(0)
    return Volume4D(frames=tuple(build(f) for f in range(t)))
