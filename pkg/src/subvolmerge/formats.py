"""File formats: the native raw-grid pair (``.vgrid.json`` + ``.vgrid.raw``) and a
read-only NIfTI-1 (single-file ``.nii``) reader.

NIfTI orientation (qform/sform) is IGNORED. Axes are taken in storage
order, so two volumes compare voxelwise only if they were stored on the
same grid, as registered image pairs are.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .grid import BinaryMask, GridError, VoxelGrid

MAGIC = "VGRID1"
DTYPE = "f32le"
ORDER = "x-fastest"

NIFTI_HEADER_SIZE = 348
NIFTI_DTYPES = {2: np.uint8, 4: np.int16, 16: np.float32}


class FormatError(ValueError):
    pass


def vgrid_paths(path) -> tuple:
    """``foo``, ``foo.vgrid.json`` or ``foo.vgrid.raw`` -> (header path, payload path)."""
    p = str(path)
    for suffix in (".vgrid.json", ".vgrid.raw"):
        if p.endswith(suffix):
            p = p[: -len(suffix)]
            break
    return Path(p + ".vgrid.json"), Path(p + ".vgrid.raw")


def write_vgrid(grid: VoxelGrid, header_path, payload_path) -> None:
    header = {
        "magic": MAGIC,
        "dims": list(grid.dims),
        "spacing_mm": list(grid.spacing),
        "dtype": DTYPE,
        "order": ORDER,
    }
    try:
        Path(payload_path).write_bytes(grid.flat().astype("<f4").tobytes())
        Path(header_path).write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write grid to {header_path} / {payload_path}: {exc}") from exc


def read_vgrid(header_path, payload_path) -> VoxelGrid:
    try:
        header = json.loads(Path(header_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{header_path}: header is not valid JSON ({exc})") from exc
    if not isinstance(header, dict):
        raise FormatError(f"{header_path}: header must be a JSON object")
    for key, want in (("magic", MAGIC), ("dtype", DTYPE), ("order", ORDER)):
        if header.get(key) != want:
            raise FormatError(f"{header_path}: {key} mismatch, expected {want!r}, got {header.get(key)!r}")
    dims = header.get("dims")
    spacing = header.get("spacing_mm", [1.0, 1.0, 1.0])
    if (not isinstance(dims, list) or len(dims) != 3
            or not all(isinstance(d, int) and not isinstance(d, bool) and d > 0 for d in dims)):
        raise FormatError(f"{header_path}: dims must be three positive integers, got {dims!r}")
    if (not isinstance(spacing, list) or len(spacing) != 3
            or not all(isinstance(s, (int, float)) and not isinstance(s, bool) and s > 0 for s in spacing)):
        raise FormatError(f"{header_path}: spacing_mm must be three positive numbers, got {spacing!r}")

    expected = 4 * dims[0] * dims[1] * dims[2]
    actual = os.path.getsize(payload_path)
    if actual != expected:
        raise FormatError(f"{payload_path}: size mismatch, expected {expected} bytes, got {actual}")
    flat = np.fromfile(payload_path, dtype="<f4", count=expected // 4)
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        raise FormatError(f"{payload_path}: non-finite value at index {int(bad[0])}")
    return VoxelGrid.from_flat(flat, dims, spacing)


def load_grid(path) -> VoxelGrid:
    """Read a volume from a ``.nii`` file or a vgrid pair."""
    if str(path).endswith(".nii"):
        return read_nifti(path)[0]
    return read_vgrid(*vgrid_paths(path))


def load_mask(path) -> BinaryMask:
    if str(path).endswith(".nii"):
        return read_nifti(path, as_mask=True)[1]
    return BinaryMask(load_grid(path).values > 0.5)


def save_grid(grid: VoxelGrid, path) -> Path:
    header, payload = vgrid_paths(path)
    write_vgrid(grid, header, payload)
    return header


# Offsets and formats follow the published NIfTI-1 header layout.
_NIFTI_FIELDS = {
    "sizeof_hdr": (0, "i"),
    "dim": (40, "8h"),
    "datatype": (70, "h"),
    "bitpix": (72, "h"),
    "pixdim": (76, "8f"),
    "vox_offset": (108, "f"),
    "scl_slope": (112, "f"),
    "scl_inter": (116, "f"),
    "magic": (344, "4s"),
}


def parse_nifti_header(raw: bytes) -> dict:
    if len(raw) < NIFTI_HEADER_SIZE:
        raise FormatError(f"truncated NIfTI header: {len(raw)} of {NIFTI_HEADER_SIZE} bytes")
    for endian in "<>":
        if struct.unpack_from(endian + "i", raw, 0)[0] == NIFTI_HEADER_SIZE:
            break
    else:
        raise FormatError(f"sizeof_hdr is not {NIFTI_HEADER_SIZE}")
    hdr = {"endian": endian}
    for name, (offset, fmt) in _NIFTI_FIELDS.items():
        vals = struct.unpack_from(endian + fmt, raw, offset)
        hdr[name] = vals if len(vals) > 1 else vals[0]
    if hdr["magic"] != b"n+1\x00":
        raise FormatError(f"bad NIfTI-1 magic {hdr['magic']!r} (only single-file n+1 is supported)")
    dim = hdr["dim"]
    rank = dim[0]
    if rank not in (3, 4) or (rank == 4 and dim[4] != 1):
        raise FormatError(f"unsupported NIfTI rank {rank} with dims {dim[1:rank + 1]}")
    if min(dim[1:4]) < 1:
        raise FormatError(f"NIfTI dims must be positive, got {dim[1:4]}")
    if hdr["datatype"] not in NIFTI_DTYPES:
        raise FormatError(f"unsupported NIfTI datatype code {hdr['datatype']}")
    if not np.isfinite(hdr["vox_offset"]) or hdr["vox_offset"] < NIFTI_HEADER_SIZE:
        raise FormatError(f"invalid vox_offset {hdr['vox_offset']}")
    return hdr


def read_nifti(path, as_mask: bool = False):
    """Read an uncompressed single-file NIfTI-1 volume.

    Returns ``(grid, None)``, or ``(grid, mask)`` with ``as_mask`` where the
    mask is ``grid > 0.5``. Slope/intercept scaling is applied unless the
    slope is 0.
    """
    data = Path(path).read_bytes()
    hdr = parse_nifti_header(data)
    dims = tuple(int(d) for d in hdr["dim"][1:4])
    dtype = np.dtype(NIFTI_DTYPES[hdr["datatype"]]).newbyteorder(hdr["endian"])
    start = int(hdr["vox_offset"])
    nbytes = dtype.itemsize * dims[0] * dims[1] * dims[2]
    if start + nbytes > len(data):
        raise FormatError(f"{path}: truncated payload, expected {nbytes} bytes at offset {start}, "
                          f"file has {max(0, len(data) - start)}")
    values = np.frombuffer(data, dtype=dtype, count=nbytes // dtype.itemsize, offset=start).astype(np.float64)
    slope, inter = hdr["scl_slope"], hdr["scl_inter"]
    if slope != 0 and np.isfinite(slope):
        values = values * slope + (inter if np.isfinite(inter) else 0.0)
    spacing = tuple(abs(s) if np.isfinite(s) and s != 0 else 1.0 for s in hdr["pixdim"][1:4])
    try:
        grid = VoxelGrid.from_flat(values, dims, spacing)
    except GridError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    mask = BinaryMask(grid.values > 0.5) if as_mask else None
    return grid, mask
