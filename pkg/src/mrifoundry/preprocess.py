"""Volume standardization: 4D frame selection, reorientation, isotropic
resampling, fixed-grid resizing, 16-bit quantization, and ROI cropping.

Interpolation is trilinear with voxel-center alignment (physical extent is
preserved) and clamp-to-edge borders, so outputs never leave the input
value range.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, GeometryError
from .volume import Volume, Volume4D, SeriesStack, stack_to_volume, validate_axis_code, _AXIS_PAIRS

log = logging.getLogger(__name__)


@dataclass
class PreprocessConfig:
    target_orientation: str = "RAS"
    target_spacing_mm: float = 1.0
    target_grid: tuple[int, int, int] = (256, 256, 128)
    quantize: bool = True

    def __post_init__(self):
        validate_axis_code(self.target_orientation)
        if self.target_spacing_mm <= 0:
            raise ConfigError(f"target spacing must be positive, got {self.target_spacing_mm}")
        if len(self.target_grid) != 3 or any(g < 2 for g in self.target_grid):
            raise ConfigError(f"target grid dims must be >= 2, got {self.target_grid}")
        self.target_grid = tuple(int(g) for g in self.target_grid)


def select_3d_from_4d(v: Volume4D) -> Volume:
    """Pick the middle frame, index floor((t-1)/2), of a 4D acquisition."""
    return v.frames[(v.t - 1) // 2]


def _pair_index(letter: str) -> int:
    return next(i for i, p in enumerate(_AXIS_PAIRS) if letter in p)


def reorient(v: Volume, target: str) -> Volume:
    """Permute/flip axes so that ``v`` is expressed in the ``target`` code.

    Every voxel keeps its world position; only the index convention
    changes. Values are moved, never interpolated.
    """
    validate_axis_code(target)
    src = v.orientation
    if src == target:
        return v
    src_pairs = [_pair_index(ch) for ch in src]
    perm = []
    flips = []
    for j, ch in enumerate(target):
        k = src_pairs.index(_pair_index(ch))
        perm.append(k)
        if src[k] != ch:
            flips.append(j)
    data = np.transpose(np.asarray(v.data), perm)
    if flips:
        data = np.flip(data, axis=flips)
    spacing = tuple(v.spacing[k] for k in perm)
    return Volume(
        data=np.ascontiguousarray(data),
        spacing=spacing,
        orientation=target,
        dtype_tag=v.dtype_tag,
        intensity_offset=v.intensity_offset,
        intensity_scale=v.intensity_scale,
    )


def _as_float(v: Volume) -> Volume:
    if v.dtype_tag == "f32":
        return v
    return Volume(data=v.physical(), spacing=v.spacing, orientation=v.orientation, dtype_tag="f32")


def _trilinear_to(data: np.ndarray, out_shape: tuple[int, int, int], ratios) -> np.ndarray:
    """Trilinear resample onto ``out_shape``.

    Output voxel center o on axis k samples input index
    (o + 0.5) * ratios[k] - 0.5, clamped to the grid.
    """
    n = data.shape
    vals = data.astype(np.float64)
    axes = []
    for ax in range(3):
        x = (np.arange(out_shape[ax], dtype=np.float64) + 0.5) * ratios[ax] - 0.5
        x = np.clip(x, 0.0, n[ax] - 1.0)
        i0 = np.floor(x).astype(np.int64)
        i0 = np.minimum(i0, n[ax] - 1)
        i1 = np.minimum(i0 + 1, n[ax] - 1)
        axes.append((i0, i1, x - i0))
    (a0, a1, wa), (b0, b1, wb), (c0, c1, wc) = axes
    wa = wa[:, None, None]
    wb = wb[None, :, None]
    wc = wc[None, None, :]

    def grab(ia, ib, ic):
        return vals[np.ix_(ia, ib, ic)]

    out = (1 - wa) * (
        (1 - wb) * ((1 - wc) * grab(a0, b0, c0) + wc * grab(a0, b0, c1))
        + wb * ((1 - wc) * grab(a0, b1, c0) + wc * grab(a0, b1, c1))
    ) + wa * (
        (1 - wb) * ((1 - wc) * grab(a1, b0, c0) + wc * grab(a1, b0, c1))
        + wb * ((1 - wc) * grab(a1, b1, c0) + wc * grab(a1, b1, c1))
    )
    return out.astype(np.float32)


def resample_iso(v: Volume, spacing: float) -> Volume:
    """Resample to isotropic ``spacing`` mm; output dims round to preserve extent."""
    if spacing <= 0:
        raise ConfigError(f"spacing must be positive, got {spacing}")
    v = _as_float(v)
    out_shape = tuple(
        max(1, int(round(d * s / spacing))) for d, s in zip(v.shape, v.spacing)
    )
    if out_shape == v.shape and all(abs(s - spacing) < 1e-12 for s in v.spacing):
        return v
    ratios = tuple(spacing / s for s in v.spacing)
    data = _trilinear_to(np.asarray(v.data), out_shape, ratios)
    return Volume(data=data, spacing=(spacing,) * 3, orientation=v.orientation, dtype_tag="f32")


def resize_to(v: Volume, grid: tuple[int, int, int]) -> Volume:
    """Trilinear resize onto exactly ``grid`` voxels, keeping physical extent."""
    grid = tuple(int(g) for g in grid)
    if len(grid) != 3 or any(g < 2 for g in grid):
        raise ConfigError(f"grid dims must be >= 2, got {grid}")
    v = _as_float(v)
    if grid == v.shape:
        return v
    ratios = tuple(n / m for n, m in zip(v.shape, grid))
    data = _trilinear_to(np.asarray(v.data), grid, ratios)
    spacing = tuple(s * n / m for s, n, m in zip(v.spacing, v.shape, grid))
    return Volume(data=data, spacing=spacing, orientation=v.orientation, dtype_tag="f32")


def quantize_u16(v: Volume) -> Volume:
    """Min-max quantize to uint16, recording the inverse mapping.

    Zero-range volumes map to all zeros with scale 0.
    """
    if v.dtype_tag == "u16":
        return v
    vals = np.asarray(v.data, dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise DataError("cannot quantize: non-finite values present")
    mn = float(vals.min())
    mx = float(vals.max())
    if mx == mn:
        data = np.zeros(v.shape, dtype=np.uint16)
        return Volume(
            data=data, spacing=v.spacing, orientation=v.orientation,
            dtype_tag="u16", intensity_offset=mn, intensity_scale=0.0,
        )
    q = np.rint((vals - mn) / (mx - mn) * 65535.0)
    data = np.clip(q, 0, 65535).astype(np.uint16)
    return Volume(
        data=data, spacing=v.spacing, orientation=v.orientation,
        dtype_tag="u16", intensity_offset=mn, intensity_scale=(mx - mn) / 65535.0,
    )


def normalize_unit(v: Volume) -> Volume:
    """Per-volume min-max scaling to [0, 1] float32; zero range maps to zeros."""
    vals = np.asarray(v.data, dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise DataError("cannot normalize: non-finite values present")
    mn = vals.min()
    mx = vals.max()
    if mx == mn:
        data = np.zeros(v.shape, dtype=np.float32)
    else:
        data = ((vals - mn) / (mx - mn)).astype(np.float32)
    return Volume(data=data, spacing=v.spacing, orientation=v.orientation, dtype_tag="f32")


def random_roi_crop(v: Volume, roi: int, rng: np.random.Generator) -> Volume:
    """Cubic crop of side ``roi`` at a uniform valid offset.

    Volumes smaller than the ROI are zero-padded symmetrically first.
    Deterministic given the generator state.
    """
    roi = int(roi)
    data = np.asarray(v.data)
    pads = []
    for d in data.shape:
        short = max(0, roi - d)
        pads.append((short // 2, short - short // 2))
    if any(p != (0, 0) for p in pads):
        data = np.pad(data, pads, mode="constant")
    offsets = [int(rng.integers(0, d - roi + 1)) for d in data.shape]
    crop = data[
        offsets[0] : offsets[0] + roi,
        offsets[1] : offsets[1] + roi,
        offsets[2] : offsets[2] + roi,
    ]
    return Volume(
        data=np.ascontiguousarray(crop),
        spacing=v.spacing,
        orientation=v.orientation,
        dtype_tag=v.dtype_tag,
        intensity_offset=v.intensity_offset,
        intensity_scale=v.intensity_scale,
    )


def preprocess_pipeline(
    obj: SeriesStack | Volume | Volume4D, cfg: PreprocessConfig
) -> Volume:
    """Standardize one input: assemble -> 4D select -> reorient ->
    isotropic resample -> fixed-grid resize -> quantize (optional)."""
    if isinstance(obj, SeriesStack):
        obj = stack_to_volume(obj)
    if isinstance(obj, Volume4D):
        obj = select_3d_from_4d(obj)
    if not isinstance(obj, Volume):
        raise GeometryError(f"cannot preprocess object of type {type(obj).__name__}")
    out = reorient(obj, cfg.target_orientation)
    out = resample_iso(out, cfg.target_spacing_mm)
    out = resize_to(out, cfg.target_grid)
    if cfg.quantize:
        out = quantize_u16(out)
    return out
