"""Synthetic ellipsoid phantoms with known ground truth.

The modality tag couples to the intensity profile (T1w: bright objects on
a dark background, T2w: inverted), so the imaging description genuinely
predicts image statistics and the text-alignment loss has signal at desk
scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, PlacementError
from .models import warp
from .text import ImagingMeta
from .volume import Volume

MODALITIES = ("T1w", "T2w")

# nominal acquisition parameters per modality; each phantom jitters them so
# descriptions are distinct (degenerate zero text-distances would swamp the
# ratio-alignment loss)
_ACQ = {
    "T1w": {"tr_ms": 500.0, "te_ms": 10.0},
    "T2w": {"tr_ms": 4000.0, "te_ms": 90.0},
}


@dataclass
class PhantomSpec:
    size: tuple[int, int, int] = (32, 32, 32)
    n_objects: int = 3
    modality: str = "T1w"
    noise_sigma: float = 0.05
    seed: int = 0
    # ellipsoid semi-axes as a fraction of each dim; small objects make
    # registration hard, large ones give segmentation enough foreground
    radius_frac: tuple[float, float] = (0.09, 0.16)

    def __post_init__(self):
        self.size = tuple(int(s) for s in self.size)
        if len(self.size) != 3 or any(s < 16 for s in self.size):
            raise ConfigError(f"phantom size dims must be >= 16, got {self.size}")
        if self.n_objects < 1:
            raise ConfigError("need at least one object")
        if self.modality not in MODALITIES:
            raise ConfigError(f"modality must be one of {MODALITIES}")
        if self.noise_sigma < 0:
            raise ConfigError("noise sigma must be >= 0")
        lo, hi = self.radius_frac
        if not 0 < lo <= hi < 0.5:
            raise ConfigError(f"radius_frac must satisfy 0 < lo <= hi < 0.5, got {self.radius_frac}")


def _ellipsoid_mask(size, center, radii) -> np.ndarray:
    grids = np.ogrid[tuple(slice(0, s) for s in size)]
    acc = np.zeros(size, dtype=np.float64)
    for g, c, r in zip(grids, center, radii):
        acc = acc + ((g - c) / r) ** 2
    return acc <= 1.0


def gen_phantom(spec: PhantomSpec) -> tuple[Volume, np.ndarray, ImagingMeta]:
    """Random ellipsoids labelled 1..n on background 0.

    T1w gives foreground 0.8 on background 0.2; T2w inverts. Gaussian
    noise is added then clamped to [0, 1]. Fully determined by the seed.
    """
    rng = np.random.default_rng(spec.seed)
    size = spec.size
    labels = np.zeros(size, dtype=np.int64)
    occupied = np.zeros(size, dtype=bool)
    lo, hi = spec.radius_frac
    for obj in range(1, spec.n_objects + 1):
        placed = False
        for _ in range(100):
            center = [rng.uniform(0.25 * s, 0.75 * s) for s in size]
            radii = [rng.uniform(lo * s, hi * s) for s in size]
            mask = _ellipsoid_mask(size, center, radii)
            fresh = mask & ~occupied
            if fresh.sum() == 0:
                continue  # fully overlapped; try another placement
            labels[fresh] = obj
            occupied |= mask
            placed = True
            break
        if not placed:
            raise PlacementError(
                f"object {obj} could not be placed without full overlap after 100 tries"
            )
    fg, bg = (0.8, 0.2) if spec.modality == "T1w" else (0.2, 0.8)
    img = np.where(labels > 0, fg, bg).astype(np.float64)
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, size=size)
        img = np.clip(img, 0.0, 1.0)
    vol = Volume(
        data=img.astype(np.float32), spacing=(1.0, 1.0, 1.0), orientation="RAS", dtype_tag="f32"
    )
    acq = _ACQ[spec.modality]
    meta = ImagingMeta(
        modality=spec.modality,
        field_strength_t=float(rng.choice([1.5, 3.0])),
        tr_ms=round(acq["tr_ms"] * rng.uniform(0.9, 1.1), 1),
        te_ms=round(acq["te_ms"] * rng.uniform(0.9, 1.1), 1),
        manufacturer="SynthScan",
    )
    return vol, labels, meta


def gen_reg_pair(
    spec: PhantomSpec, amplitude: float = 3.0, smooth_sigma: float = 3.0
) -> tuple[Volume, Volume, np.ndarray, np.ndarray, np.ndarray]:
    """A (moving, fixed) pair linked by a random smooth displacement field.

    ``fixed`` is a phantom; the field is Gaussian-smoothed noise scaled so
    the root-mean-square displacement equals ``amplitude`` voxels, with
    per-voxel magnitudes clipped at 4 voxels; ``moving`` is the fixed image
    warped by it, labels warped in nearest mode. Returns
    (moving, fixed, moving_labels, fixed_labels, field).
    """
    if not 0 <= amplitude <= 4:
        raise ConfigError("amplitude must lie in [0, 4] voxels")
    fixed, fixed_labels, _meta = gen_phantom(spec)
    size = spec.size
    if amplitude == 0:
        field = np.zeros((3, *size), dtype=np.float32)
        return fixed, fixed, fixed_labels.copy(), fixed_labels, field

    rng = np.random.default_rng([spec.seed, 606])
    raw = rng.normal(size=(3, *size))
    smooth = np.stack([gaussian_filter(raw[c], smooth_sigma) for c in range(3)])
    mag = np.sqrt((smooth**2).sum(axis=0))
    smooth *= amplitude / np.sqrt(np.mean(mag**2))
    mag = np.sqrt((smooth**2).sum(axis=0))
    over = mag > 4.0
    if over.any():  # keep the max-displacement invariant
        smooth[:, over] *= 4.0 / mag[over]
    field = smooth.astype(np.float32)

    with torch.no_grad():
        ft = torch.from_numpy(field.copy())[None]
        fixed_t = torch.from_numpy(np.asarray(fixed.data).copy())[None, None]
        moving_data = warp(fixed_t, ft)[0, 0].numpy()
        mlab = warp(
            torch.from_numpy(fixed_labels.astype(np.float32))[None, None], ft, mode="nearest"
        )[0, 0].numpy().astype(np.int64)
    moving = Volume(data=moving_data, spacing=fixed.spacing, orientation=fixed.orientation)
    return moving, fixed, mlab, fixed_labels, field
