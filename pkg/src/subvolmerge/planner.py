"""Tile lattice planning: per-axis origins, strides, overlaps, mask filtering."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .grid import BinaryMask, check_same_dims

DEFAULT_TILE = (32, 96, 96)


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class TileSpec:
    origin: tuple
    size: tuple
    grid_index: tuple

    def footprint(self, volume_dims) -> tuple:
        """Slices of the part of this tile that lies inside the volume."""
        return tuple(
            slice(o, min(o + s, n)) for o, s, n in zip(self.origin, self.size, volume_dims)
        )


def stride_for(tile_len: int, p: float) -> int:
    """``max(1, round_half_up(tile_len * (1 - p)))``.

    Decimal arithmetic on the printed value of ``p`` keeps e.g. 0.7 from
    turning 28.8 into 28.799999.
    """
    raw = Decimal(tile_len) * (Decimal(1) - Decimal(repr(float(p))))
    return max(1, int(raw.quantize(Decimal(1), rounding=ROUND_HALF_UP)))


def _check_fraction(p):
    if not (0.0 <= p < 1.0):
        raise PlanError(f"overlap fraction out of range: {p} (need 0 <= p < 1)")


def plan_axis(extent: int, tile_len: int, p: float) -> list:
    _check_fraction(p)
    if tile_len < 1 or extent < 1:
        raise PlanError(f"extent and tile length must be >= 1, got {extent}, {tile_len}")
    if extent <= tile_len:
        return [0]
    s = stride_for(tile_len, p)
    origins = []
    o = 0
    while o + tile_len < extent:
        origins.append(o)
        o += s
    last = extent - tile_len
    if origins[-1] != last:
        origins.append(last)
    return origins


def _per_axis(p):
    if np.ndim(p) == 0:
        return (float(p),) * 3
    t = tuple(float(v) for v in p)
    if len(t) != 3:
        raise PlanError(f"overlap fraction needs 1 or 3 values, got {len(t)}")
    return t


@dataclass(frozen=True)
class TilePlan:
    volume_dims: tuple
    tile_size: tuple
    overlap_fraction: tuple
    origins: tuple  # one origin list per axis
    stride: tuple
    overlap_n: tuple  # nominal pair overlap, tile_size - stride
    retained: tuple = ()
    skipped: tuple = ()

    @property
    def padding(self) -> tuple:
        """Right-padding per axis when the volume is smaller than the tile."""
        return tuple(max(0, t - n) for t, n in zip(self.tile_size, self.volume_dims))

    @property
    def padded_dims(self) -> tuple:
        return tuple(max(t, n) for t, n in zip(self.tile_size, self.volume_dims))

    @property
    def lattice_shape(self) -> tuple:
        return tuple(len(o) for o in self.origins)

    @property
    def total(self) -> int:
        return int(np.prod(self.lattice_shape))

    def all_tiles(self) -> list:
        return sorted(self.retained + self.skipped, key=lambda t: t.grid_index)

    def pair_overlaps(self, axis: int) -> list:
        """Actual overlap between consecutive tiles on an axis (clamped pair included)."""
        o = self.origins[axis]
        L = self.tile_size[axis]
        return [o[k - 1] + L - o[k] for k in range(1, len(o))]


def plan_volume(dims, tile_size=DEFAULT_TILE, p=0.5) -> TilePlan:
    dims = tuple(int(d) for d in dims)
    tile_size = tuple(int(t) for t in tile_size)
    if len(dims) != 3 or len(tile_size) != 3:
        raise PlanError("dims and tile size need 3 entries each")
    ps = _per_axis(p)
    origins = tuple(tuple(plan_axis(n, t, q)) for n, t, q in zip(dims, tile_size, ps))
    stride = tuple(stride_for(t, q) for t, q in zip(tile_size, ps))
    tiles = tuple(
        TileSpec(origin=tuple(o[i] for o, i in zip(origins, idx)), size=tile_size, grid_index=idx)
        for idx in itertools.product(*(range(len(o)) for o in origins))
    )
    return TilePlan(
        volume_dims=dims,
        tile_size=tile_size,
        overlap_fraction=ps,
        origins=origins,
        stride=stride,
        overlap_n=tuple(t - s for t, s in zip(tile_size, stride)),
        retained=tiles,
        skipped=(),
    )


def filter_by_mask(plan: TilePlan, mask: BinaryMask) -> TilePlan:
    """Keep only tiles whose footprint touches at least one mask voxel."""
    check_same_dims(plan.volume_dims, mask.dims, "plan", "mask")
    # Per-axis prefix sums of a 3D cumulative count make each footprint test O(1).
    c = np.zeros(tuple(n + 1 for n in mask.dims), dtype=np.int64)
    c[1:, 1:, 1:] = mask.bits.astype(np.int64).cumsum(0).cumsum(1).cumsum(2)
    retained, skipped = [], []
    for tile in plan.all_tiles():
        (x0, x1), (y0, y1), (z0, z1) = ((s.start, s.stop) for s in tile.footprint(plan.volume_dims))
        n = (
            c[x1, y1, z1] - c[x0, y1, z1] - c[x1, y0, z1] - c[x1, y1, z0]
            + c[x0, y0, z1] + c[x0, y1, z0] + c[x1, y0, z0] - c[x0, y0, z0]
        )
        (retained if n > 0 else skipped).append(tile)
    return replace(plan, retained=tuple(retained), skipped=tuple(skipped))


def count_report(plan: TilePlan, gamma: float | None = None) -> dict:
    p = plan.overlap_fraction
    return {
        "p": p[0] if len(set(p)) == 1 else list(p),
        "gamma": gamma,
        "total": plan.total,
        "retained": len(plan.retained),
        "skipped": len(plan.skipped),
        "per_axis_origins": [list(o) for o in plan.origins],
        "stride": list(plan.stride),
        "overlap_N": list(plan.overlap_n),
        "volume_dims": list(plan.volume_dims),
        "tile_size": list(plan.tile_size),
    }


REPORT_CSV_COLUMNS = ("p", "gamma", "total", "retained", "skipped")


def report_csv_row(report: dict) -> list:
    p = report["p"]
    p = "/".join(str(v) for v in p) if isinstance(p, list) else p
    g = "" if report["gamma"] is None else report["gamma"]
    return [p, g, report["total"], report["retained"], report["skipped"]]
