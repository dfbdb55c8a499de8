"""Mask-restricted MAE/PSNR in HU and a seam (tile boundary) gradient profile."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from .grid import BinaryMask, GridError, VoxelGrid, check_same_dims
from .planner import TilePlan

# psnr() result when the masked volumes agree exactly.
IDENTICAL = "identical"


def _masked_pair(pred: VoxelGrid, ref: VoxelGrid, mask: BinaryMask | None):
    check_same_dims(pred.dims, ref.dims, "pred", "ref")
    if mask is None:
        mask = BinaryMask.full(ref.dims)
    check_same_dims(ref.dims, mask.dims, "ref", "mask")
    if not mask.bits.any():
        raise GridError("empty mask: no voxels to evaluate")
    # Fortran-order flattening fixes a sequential reduction order.
    sel = mask.bits.ravel(order="F")
    p = pred.values.ravel(order="F")[sel].astype(np.float64)
    r = ref.values.ravel(order="F")[sel].astype(np.float64)
    return p, r


def mae(pred: VoxelGrid, ref: VoxelGrid, mask: BinaryMask | None = None) -> float:
    p, r = _masked_pair(pred, ref, mask)
    return float(np.abs(p - r).sum() / p.size)


def psnr(pred: VoxelGrid, ref: VoxelGrid, mask: BinaryMask | None = None, peak="auto"):
    """``10 log10(peak^2 / MSE)`` over the mask.

    ``peak="auto"`` uses the masked dynamic range of ``ref``. Returns
    ``(value, peak_used)``; value is :data:`IDENTICAL` when MSE is zero.
    """
    p, r = _masked_pair(pred, ref, mask)
    peak_used = float(r.max() - r.min()) if peak == "auto" else float(peak)
    mse = float(np.square(p - r).sum() / p.size)
    if mse == 0.0:
        return IDENTICAL, peak_used
    if peak_used <= 0:
        raise GridError(f"PSNR peak must be positive, got {peak_used}")
    return 10.0 * math.log10(peak_used**2 / mse), peak_used


def boundary_planes(plan: TilePlan, axis: int) -> list:
    """Internal tile boundary positions ``b`` on an axis (seam between ``b-1`` and ``b``).

    Both the start of every tile after the first and the end of every tile
    before the last are boundaries; with no overlap they coincide.
    """
    extent = plan.volume_dims[axis]
    L = plan.tile_size[axis]
    o = plan.origins[axis]
    planes = set()
    for k in range(1, len(o)):
        planes.add(o[k])
        planes.add(o[k - 1] + L)
    return sorted(b for b in planes if 0 < b < extent)


def seam_profile(volume: VoxelGrid, plan: TilePlan, axis: int, mask: BinaryMask | None = None,
                 boundaries=None) -> dict:
    """Mean ``|v[b] - v[b-1]|`` across each boundary plane, inside the mask.

    Planes with no masked voxel on both sides are left out.
    """
    check_same_dims(volume.dims, plan.volume_dims, "volume", "plan")
    extent = volume.dims[axis]
    if boundaries is None:
        boundaries = boundary_planes(plan, axis)
    v = np.moveaxis(volume.values, axis, 0).astype(np.float64)
    m = None
    if mask is not None:
        check_same_dims(volume.dims, mask.dims, "volume", "mask")
        m = np.moveaxis(mask.bits, axis, 0)
    out = {}
    for b in boundaries:
        if not (0 < b < extent):
            raise GridError(f"boundary index {b} out of range (1..{extent - 1}) on axis {axis}")
        diff = np.abs(v[b] - v[b - 1])
        if m is not None:
            sel = m[b] & m[b - 1]
            if not sel.any():
                continue
            diff = diff[sel]
        out[b] = float(diff.mean())
    return out


def seam_gradient(volume: VoxelGrid, plan: TilePlan, mask: BinaryMask | None = None) -> float:
    """Mean of the per-boundary seam profile over all three axes (0 with no boundaries)."""
    vals = [g for ax in range(3) for g in seam_profile(volume, plan, ax, mask).values()]
    return float(np.mean(vals)) if vals else 0.0


def residual_seam_gradient(pred: VoxelGrid, ref: VoxelGrid, plan: TilePlan,
                           mask: BinaryMask | None = None) -> float:
    """Seam gradient of ``pred - ref``.

    Anatomical edges crossing boundary planes swamp the raw forward
    difference; the error field keeps only what tiling added.
    """
    check_same_dims(pred.dims, ref.dims, "pred", "ref")
    err = VoxelGrid(pred.values.astype(np.float64) - ref.values.astype(np.float64))
    return seam_gradient(err, plan, mask)


@dataclass
class MetricReport:
    mae: float
    psnr: float | str
    peak_used: float
    voxels_evaluated: int
    seam_gradient_mean: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    CSV_COLUMNS = ("mae", "psnr", "peak_used", "voxels_evaluated", "seam_gradient_mean")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        d = self.to_dict()
        w.writerow(["" if d[c] is None else d[c] for c in self.CSV_COLUMNS])
        return buf.getvalue()


def evaluate(pred: VoxelGrid, ref: VoxelGrid, mask: BinaryMask | None = None, peak="auto",
             plan: TilePlan | None = None) -> MetricReport:
    value, peak_used = psnr(pred, ref, mask, peak)
    n = mask.count() if mask is not None else int(np.prod(ref.dims))
    seam = residual_seam_gradient(pred, ref, plan, mask) if plan is not None else None
    return MetricReport(mae(pred, ref, mask), value, peak_used, n, seam)
