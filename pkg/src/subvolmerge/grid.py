"""Volume and mask containers, CT/MRI intensity normalization, masking.

Arrays are indexed ``[x, y, z]``; the flat (serialized) order is x-fastest,
which is numpy's Fortran order for that indexing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MRI_SCALE = 1000.0
CT_SCALE = 2000.0


class GridError(ValueError):
    pass


def _as_triple(values, name, cast):
    t = tuple(cast(v) for v in values)
    if len(t) != 3:
        raise GridError(f"{name} must have 3 entries, got {len(t)}")
    return t


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Dense 3D scalar field stored as float32.

    ``values`` has shape ``(nx, ny, nz)``. The array is made read-only so a
    grid can be shared between workers without copies.
    """

    values: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float32, copy=True)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise GridError(f"grid must be 3D with positive dims, got shape {arr.shape}")
        bad = ~np.isfinite(arr)
        if bad.any():
            first = int(np.flatnonzero(bad.ravel(order="F"))[0])
            raise GridError(f"non-finite value at linear index {first}")
        spacing = _as_triple(self.spacing, "spacing", float)
        if min(spacing) <= 0:
            raise GridError(f"spacing must be positive, got {spacing}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple:
        return tuple(int(n) for n in self.values.shape)

    @classmethod
    def from_flat(cls, flat, dims, spacing=(1.0, 1.0, 1.0)) -> "VoxelGrid":
        """Build from an x-fastest linearized buffer."""
        dims = _as_triple(dims, "dims", int)
        flat = np.asarray(flat, dtype=np.float32)
        if flat.size != dims[0] * dims[1] * dims[2]:
            raise GridError(f"buffer holds {flat.size} values, dims {dims} need {int(np.prod(dims))}")
        return cls(flat.reshape(dims, order="F"), spacing)

    def flat(self) -> np.ndarray:
        """Values linearized x-fastest."""
        return self.values.ravel(order="F")

    def with_values(self, values) -> "VoxelGrid":
        return VoxelGrid(values, self.spacing)

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, copy=True)
        if bits.ndim != 3 or min(bits.shape) < 1:
            raise GridError(f"mask must be 3D with positive dims, got shape {bits.shape}")
        bits = bits.astype(bool)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def dims(self) -> tuple:
        return tuple(int(n) for n in self.bits.shape)

    @classmethod
    def full(cls, dims) -> "BinaryMask":
        return cls(np.ones(dims, dtype=bool))

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)


@dataclass(frozen=True)
class NormalizationRecord:
    ct_offset: float
    mri_scale: float = field(default=MRI_SCALE)
    ct_scale: float = field(default=CT_SCALE)

    def __post_init__(self):
        if not np.isfinite(self.ct_offset):
            raise GridError(f"ct_offset must be finite, got {self.ct_offset}")
        if self.mri_scale != MRI_SCALE or self.ct_scale != CT_SCALE:
            raise GridError("normalization scales are fixed at 1000 (MRI) and 2000 (CT)")

    def to_normalized(self, hu):
        """Map an HU value (or array) into normalized CT units."""
        return (np.asarray(hu, dtype=np.float64) - self.ct_offset) / self.ct_scale

    def to_hu(self, value):
        return np.asarray(value, dtype=np.float64) * self.ct_scale + self.ct_offset


def check_same_dims(a, b, what="grid", other="mask"):
    if tuple(a) != tuple(b):
        raise GridError(f"dimension mismatch: {what} dims {tuple(a)} vs {other} dims {tuple(b)}")


def normalize_mri(grid: VoxelGrid) -> VoxelGrid:
    return grid.with_values(grid.values.astype(np.float64) / MRI_SCALE)


def normalize_ct(grid: VoxelGrid):
    """Shift a CT volume to start at zero and divide by 2000.

    Returns the normalized grid and the record needed to undo it. The offset
    is the global minimum of the volume, mask or no mask.
    """
    if grid.values.size == 0:
        raise GridError("empty volume")
    offset = float(np.min(grid.values.astype(np.float64)))
    record = NormalizationRecord(ct_offset=offset)
    out = (grid.values.astype(np.float64) - offset) / CT_SCALE
    return grid.with_values(out), record


def denormalize_ct(grid: VoxelGrid, record: NormalizationRecord) -> VoxelGrid:
    return grid.with_values(record.to_hu(grid.values))


def apply_mask(grid: VoxelGrid, mask: BinaryMask) -> VoxelGrid:
    check_same_dims(grid.dims, mask.dims)
    return grid.with_values(np.where(mask.bits, grid.values, np.float32(0)))
