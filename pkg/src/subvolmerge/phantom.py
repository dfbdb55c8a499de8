"""Deterministic three-tissue ellipsoid head phantom (MRI-like, CT-like, mask)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import MRI_SCALE, BinaryMask, VoxelGrid

CT_RANGE = (-1024.0, 3000.0)


@dataclass(frozen=True)
class Tissue:
    name: str
    ct_hu: float
    mri: float  # normalized units


DEFAULT_TISSUES = (
    Tissue("air", -1000.0, 0.0),
    Tissue("bone", 1000.0, 0.1),
    Tissue("soft", 40.0, 0.6),
)


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple = (128, 192, 192)
    seed: int = 0
    semi_axes: tuple | None = None  # default: 0.42 * dims
    shell: float = 4.0  # bone thickness in voxels
    tissues: tuple = DEFAULT_TISSUES
    ct_modulation: float = 30.0  # HU, upper bound on the summed amplitude
    mri_modulation: float = 0.05

    def axes(self) -> tuple:
        if self.semi_axes is None:
            return tuple(0.42 * n for n in self.dims)
        return tuple(float(a) for a in self.semi_axes)

    def validate(self):
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"dims must be three positive ints, got {self.dims}")
        for a, n in zip(self.axes(), self.dims):
            if a <= 0 or a > (n - 1) / 2:
                raise ValueError(f"semi-axes {self.axes()} do not fit inside dims {self.dims}")
        for t in self.tissues:
            if not CT_RANGE[0] <= t.ct_hu <= CT_RANGE[1]:
                raise ValueError(f"tissue {t.name} CT value {t.ct_hu} outside {CT_RANGE}")
        if len(self.tissues) != 3:
            raise ValueError("tissue table needs background, shell and interior entries")


def _modulation(dims, rng) -> np.ndarray:
    """Sum of three separable low-frequency sinusoid products, max |value| <= 1."""
    amps = rng.dirichlet(np.ones(3))
    total = np.zeros(dims, dtype=np.float64)
    for amp in amps:
        parts = []
        for n in dims:
            f = rng.uniform(0.5, 2.0)
            phase = rng.uniform(0, 2 * np.pi)
            parts.append(np.sin(2 * np.pi * f * np.arange(n) / n + phase))
        total += amp * parts[0][:, None, None] * parts[1][None, :, None] * parts[2][None, None, :]
    return total


def make_phantom(spec: PhantomSpec = PhantomSpec()):
    """Return ``(mri, ct, mask)``.

    ``ct`` is in HU; ``mri`` is in raw scanner-like units (normalized value
    times 1000) so it goes through ``normalize_mri`` like real data.
    """
    spec.validate()
    air, bone, soft = spec.tissues
    dims = tuple(int(n) for n in spec.dims)
    axes = np.array(spec.axes())
    center = (np.array(dims) - 1) / 2.0
    coords = [(np.arange(n) - c) / a for n, c, a in zip(dims, center, axes)]
    r2 = coords[0][:, None, None] ** 2 + coords[1][None, :, None] ** 2 + coords[2][None, None, :] ** 2
    outer = r2 <= 1.0
    inner_axes = axes - spec.shell
    if (inner_axes > 0).all():
        ic = [(np.arange(n) - c) / a for n, c, a in zip(dims, center, inner_axes)]
        inner = ic[0][:, None, None] ** 2 + ic[1][None, :, None] ** 2 + ic[2][None, None, :] ** 2 <= 1.0
    else:
        inner = np.zeros(dims, dtype=bool)

    mod = _modulation(dims, np.random.default_rng(spec.seed))
    ct = np.full(dims, air.ct_hu)
    ct[outer] = bone.ct_hu
    ct[inner] = soft.ct_hu + spec.ct_modulation * mod[inner]
    mri = np.full(dims, air.mri)
    mri[outer] = bone.mri
    mri[inner] = soft.mri + spec.mri_modulation * mod[inner]
    return VoxelGrid(mri * MRI_SCALE), VoxelGrid(ct), BinaryMask(outer)
