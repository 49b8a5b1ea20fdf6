"""Bit-exact reader/writer for a little-endian NIfTI-1 subset.

Supported datatype codes: 4 (int16, widened to float32 on read),
16 (float32) and 512 (uint16). Orientation comes from the sform affine by
dominant-axis snapping; qform decoding, compressed files and big-endian
byte order are out of scope.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CorruptHeaderError, NiftiFormatError, UnsupportedDtypeError
from .volume import Volume, Volume4D, axis_directions, snap_direction, validate_axis_code

HEADER_SIZE = 348
VOX_OFFSET = 352  # 348-byte header + 4-byte extension pad

DTYPE_INT16 = 4
DTYPE_FLOAT32 = 16
DTYPE_UINT16 = 512

_CODE_TO_NUMPY = {
    DTYPE_INT16: np.dtype("<i2"),
    DTYPE_FLOAT32: np.dtype("<f4"),
    DTYPE_UINT16: np.dtype("<u2"),
}
_BITPIX = {DTYPE_INT16: 16, DTYPE_FLOAT32: 32, DTYPE_UINT16: 16}


def _parse_header(raw: bytes, path: Path) -> dict:
    if len(raw) < HEADER_SIZE:
        raise NiftiFormatError(f"{path}: file shorter than a NIfTI-1 header")
    magic = raw[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise NiftiFormatError(f"{path}: bad magic {magic!r}")
    sizeof_hdr = struct.unpack_from("<i", raw, 0)[0]
    if sizeof_hdr != HEADER_SIZE:
        if struct.unpack_from(">i", raw, 0)[0] == HEADER_SIZE:
            raise NiftiFormatError(f"{path}: big-endian NIfTI is not supported")
        raise CorruptHeaderError(f"{path}: sizeof_hdr={sizeof_hdr}, expected {HEADER_SIZE}")

    dim = struct.unpack_from("<8h", raw, 40)
    datatype, bitpix = struct.unpack_from("<2h", raw, 70)
    pixdim = struct.unpack_from("<8f", raw, 76)
    vox_offset = struct.unpack_from("<f", raw, 108)[0]
    scl_slope, scl_inter = struct.unpack_from("<2f", raw, 112)
    sform_code = struct.unpack_from("<h", raw, 254)[0]
    srow = np.array(struct.unpack_from("<12f", raw, 280), dtype=np.float64).reshape(3, 4)

    if datatype not in _CODE_TO_NUMPY:
        raise UnsupportedDtypeError(f"{path}: unsupported datatype code {datatype}")
    if bitpix != _BITPIX[datatype]:
        raise CorruptHeaderError(f"{path}: bitpix {bitpix} inconsistent with datatype {datatype}")
    if dim[0] not in (3, 4):
        raise CorruptHeaderError(f"{path}: dim[0]={dim[0]}, only 3D/4D volumes supported")
    dims = dim[1 : 1 + dim[0]]
    if any(d < 1 for d in dims):
        raise CorruptHeaderError(f"{path}: non-positive dimension in {dims}")
    if any(pixdim[k] <= 0 for k in (1, 2, 3)):
        raise CorruptHeaderError(f"{path}: non-positive pixdim {pixdim[1:4]}")
    if sform_code <= 0:
        raise CorruptHeaderError(f"{path}: sform_code={sform_code}; an sform affine is required")

    return {
        "magic": magic,
        "dims": tuple(int(d) for d in dims),
        "datatype": int(datatype),
        "pixdim": tuple(float(p) for p in pixdim[1:4]),
        "vox_offset": int(vox_offset),
        "scl_slope": float(scl_slope),
        "scl_inter": float(scl_inter),
        "srow": srow,
    }


def _orientation_from_srow(srow: np.ndarray, path: Path) -> str:
    code = "".join(snap_direction(srow[:, j]) for j in range(3))
    try:
        validate_axis_code(code)
    except Exception as exc:
        raise CorruptHeaderError(f"{path}: sform columns map to invalid axes {code!r}") from exc
    return code


def _read_payload(path: Path, header: dict) -> np.ndarray:
    dims = header["dims"]
    dtype = _CODE_TO_NUMPY[header["datatype"]]
    count = int(np.prod(dims))
    if header["magic"] == b"n+1\x00":
        data_path, offset = path, header["vox_offset"]
    else:
        data_path, offset = path.with_suffix(".img"), 0
        if not data_path.exists():
            raise NiftiFormatError(f"{path}: companion image file {data_path} missing")
    raw = data_path.read_bytes()
    need = offset + count * dtype.itemsize
    if len(raw) < need:
        raise NiftiFormatError(
            f"{data_path}: truncated payload, need {need} bytes, have {len(raw)}"
        )
    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    # NIfTI stores the first index fastest.
    return flat.reshape(dims, order="F")


def _to_volume(arr3d: np.ndarray, header: dict, path: Path) -> Volume:
    spacing = header["pixdim"]
    orientation = _orientation_from_srow(header["srow"], path)
    slope, inter = header["scl_slope"], header["scl_inter"]
    dt = header["datatype"]
    if dt == DTYPE_UINT16:
        # Raw counts stay uint16; the scl mapping is carried as metadata so
        # write -> read round-trips bit-exactly (including slope 0).
        return Volume(
            data=arr3d,
            spacing=spacing,
            orientation=orientation,
            dtype_tag="u16",
            intensity_offset=inter,
            intensity_scale=slope,
        )
    values = arr3d.astype(np.float32)
    if not ((slope == 0.0 or slope == 1.0) and inter == 0.0):
        eff = 1.0 if slope == 0.0 else slope
        values = (values * np.float32(eff) + np.float32(inter)).astype(np.float32)
    return Volume(data=values, spacing=spacing, orientation=orientation, dtype_tag="f32")


def read_nifti(path) -> Volume:
    """Read a 3D volume. Raises on 4D files: use :func:`read_nifti4d`."""
    path = Path(path)
    header = _parse_header(path.read_bytes()[:HEADER_SIZE], path)
    if len(header["dims"]) == 4:
        raise NiftiFormatError(f"{path}: 4D file; use read_nifti4d")
    return _to_volume(_read_payload(path, header), header, path)


def read_nifti4d(path) -> Volume4D:
    """Read a 4D (time-resolved) file as a stack of 3D frames."""
    path = Path(path)
    header = _parse_header(path.read_bytes()[:HEADER_SIZE], path)
    if len(header["dims"]) != 4:
        raise NiftiFormatError(f"{path}: not a 4D file (dim[0]={len(header['dims'])})")
    arr = _read_payload(path, header)
    frames = tuple(
        _to_volume(np.ascontiguousarray(arr[..., k]), header, path) for k in range(arr.shape[3])
    )
    return Volume4D(frames=frames)


def read_nifti_any(path) -> Volume | Volume4D:
    header = _parse_header(Path(path).read_bytes()[:HEADER_SIZE], Path(path))
    return read_nifti4d(path) if len(header["dims"]) == 4 else read_nifti(path)


def _pack_header(vol: Volume, dims4: tuple[int, ...] | None = None) -> bytes:
    dims = dims4 if dims4 is not None else vol.shape
    nd = len(dims)
    dim = [nd] + list(dims) + [1] * (7 - nd)
    datatype = DTYPE_UINT16 if vol.dtype_tag == "u16" else DTYPE_FLOAT32

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, *dim)
    struct.pack_into("<2h", hdr, 70, datatype, _BITPIX[datatype])
    pixdim = [1.0] + list(vol.spacing) + [1.0] * 4
    struct.pack_into("<8f", hdr, 76, *pixdim)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    if vol.dtype_tag == "u16":
        struct.pack_into("<2f", hdr, 112, vol.intensity_scale, vol.intensity_offset)
    else:
        struct.pack_into("<2f", hdr, 112, 1.0, 0.0)
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform off, sform on
    affine = np.zeros((3, 4))
    dirs = axis_directions(vol.orientation)
    for j in range(3):
        affine[:, j] = dirs[j] * vol.spacing[j]
    struct.pack_into("<12f", hdr, 280, *affine.reshape(-1).tolist())
    hdr[344:348] = b"n+1\x00"
    return bytes(hdr)


def write_nifti(vol: Volume, path) -> None:
    """Write a single-file (.nii) little-endian NIfTI-1 volume.

    The layout is exactly: 348-byte header, 4 zero pad bytes
    (vox_offset=352), then the raw voxel payload with the first index
    fastest.
    """
    path = Path(path)
    payload = np.asarray(vol.data).ravel(order="F")
    payload = payload.astype("<u2" if vol.dtype_tag == "u16" else "<f4", copy=False)
    with open(path, "wb") as fh:
        fh.write(_pack_header(vol))
        fh.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
        fh.write(payload.tobytes())


def write_nifti4d(vol4d: Volume4D, path) -> None:
    first = vol4d.frames[0]
    dims4 = first.shape + (vol4d.t,)
    payload = np.stack([np.asarray(f.data) for f in vol4d.frames], axis=3).ravel(order="F")
    payload = payload.astype("<u2" if first.dtype_tag == "u16" else "<f4", copy=False)
    with open(Path(path), "wb") as fh:
        fh.write(_pack_header(first, dims4=dims4))
        fh.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
        fh.write(payload.tobytes())
