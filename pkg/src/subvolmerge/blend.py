"""Pairwise power-law cross-fade and the three-stage hierarchical merge.

Tiles are merged into long cuboids along the first axis of ``axis_order``,
cuboids into flat slabs along the second, slabs into the volume along the
third. Within a stage each incoming piece blends against the accumulated
canvas over their actual overlap ``N``::

    out[j] = (1 - w[j]) * canvas[j] + w[j] * piece[j],   w[j] = (j / N) ** gamma

with ``j = 0`` at the first overlapped voxel (nearest the canvas interior).
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import GridError, NormalizationRecord, VoxelGrid
from .planner import TilePlan


def _check_gamma(gamma):
    if not (math.isfinite(gamma) and gamma > 0):
        raise ValueError(f"gamma must be finite and > 0, got {gamma}")


def weight(j: int, N: int, gamma: float) -> float:
    """Weight of the incoming tile at overlap offset ``j``."""
    _check_gamma(gamma)
    if N < 1:
        raise ValueError(f"overlap length must be >= 1, got {N}")
    if not (0 <= j <= N - 1):
        raise ValueError(f"overlap index {j} out of range [0, {N - 1}]")
    return (j / N) ** gamma


def weights(N: int, gamma: float) -> np.ndarray:
    _check_gamma(gamma)
    return (np.arange(N, dtype=np.float64) / N) ** gamma


def blend_pair(a, b, w):
    return (1.0 - w) * a + w * b


@dataclass
class MergeConfig:
    gamma: float = 0.9
    overlap: tuple = (0.5, 0.5, 0.5)
    axis_order: tuple = (0, 1, 2)
    fill_hu: float = -1000.0

    def __post_init__(self):
        _check_gamma(self.gamma)
        if np.ndim(self.overlap) == 0:
            self.overlap = (float(self.overlap),) * 3
        self.overlap = tuple(float(p) for p in self.overlap)
        self.axis_order = tuple(int(a) for a in self.axis_order)
        if sorted(self.axis_order) != [0, 1, 2]:
            raise ValueError(f"axis order must be a permutation of (0, 1, 2), got {self.axis_order}")
        if not math.isfinite(self.fill_hu):
            raise ValueError("fill value must be finite")

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "MergeConfig":
        return cls(**json.loads(text))


@dataclass
class Canvas:
    """Accumulator for one merge stage.

    ``values`` spans the full (padded) extent along ``axis`` and the piece
    cross-section on the other axes. ``covered`` marks voxels some placed
    piece has predicted; everything else holds ``fill``. ``end`` is the
    exclusive end of the last placed piece along ``axis``.
    """

    values: np.ndarray
    covered: np.ndarray
    axis: int
    fill: float
    end: int = 0
    origin: tuple = field(default=(0, 0, 0))

    @classmethod
    def empty(cls, shape, axis, fill, origin=(0, 0, 0)) -> "Canvas":
        return cls(
            values=np.full(shape, fill, dtype=np.float64),
            covered=np.zeros(shape, dtype=bool),
            axis=axis,
            fill=float(fill),
            origin=tuple(origin),
        )


def _along(axis, sl):
    idx = [slice(None)] * 3
    idx[axis] = sl
    return tuple(idx)


def merge_along_axis(canvas: Canvas, values, start: int, gamma: float, covered=None) -> Canvas:
    """Blend ``values`` into ``canvas`` with its first voxel at ``start`` along the canvas axis.

    Pieces must arrive in ascending ``start``. A gap before ``start`` keeps the
    fill value. Where only one side has coverage, that side wins outright.
    The canvas is updated in place and returned.
    """
    ax = canvas.axis
    values = np.asarray(values, dtype=np.float64)
    if covered is None:
        covered = np.ones(values.shape, dtype=bool)
    cross_c = tuple(n for i, n in enumerate(canvas.values.shape) if i != ax)
    cross_t = tuple(n for i, n in enumerate(values.shape) if i != ax)
    if cross_c != cross_t:
        raise GridError(f"cross-section mismatch on axis {ax}: canvas {cross_c} vs tile {cross_t}")
    L = values.shape[ax]
    if start < 0 or start + L > canvas.values.shape[ax]:
        raise GridError(f"piece [{start}, {start + L}) outside canvas extent {canvas.values.shape[ax]}")

    n = max(0, canvas.end - start)
    if n > L:
        raise GridError(f"piece at {start} lies entirely inside the covered extent (end {canvas.end})")
    if n:
        shape = [1, 1, 1]
        shape[ax] = n
        w = weights(n, gamma).reshape(shape)
        dst = _along(ax, slice(start, start + n))
        src = _along(ax, slice(0, n))
        cv, cc = canvas.values[dst], canvas.covered[dst]
        tv, tc = values[src], covered[src]
        mixed = blend_pair(cv, tv, w)
        canvas.values[dst] = np.where(cc & tc, mixed, np.where(tc, tv, cv))
        canvas.covered[dst] = cc | tc
    if n < L:
        dst = _along(ax, slice(start + n, start + L))
        src = _along(ax, slice(n, L))
        tc = covered[src]
        canvas.values[dst] = np.where(tc, values[src], canvas.values[dst])
        canvas.covered[dst] |= tc
    canvas.end = start + L
    return canvas


def _tile_array(tile, size):
    arr = tile.values if isinstance(tile, VoxelGrid) else np.asarray(tile)
    if tuple(arr.shape) != tuple(size):
        raise GridError(f"tile dims {tuple(arr.shape)} do not match plan tile size {tuple(size)}")
    if not np.isfinite(arr).all():
        raise GridError("tile holds non-finite values")
    return arr


def _lookup(tiles, expected):
    """Adapt a ``{grid_index: array}`` mapping to the row-fetch interface."""
    missing = sorted(set(expected) - set(tiles))
    if missing:
        raise GridError(f"missing predicted tile for retained lattice index {missing[0]}")
    extra = sorted(set(tiles) - set(expected))
    if extra:
        raise GridError(f"predicted tile {extra[0]} is not in the retained set")
    return lambda row: [tiles[t.grid_index] for t in row]


def assemble(plan: TilePlan, tiles, config: MergeConfig, record: NormalizationRecord | None = None) -> VoxelGrid:
    """Reconstruct the volume from predicted tiles.

    ``tiles`` is either a mapping from lattice index to a tile-sized array
    (or VoxelGrid) covering exactly the retained tiles, or a callable that
    takes one row of :class:`TileSpec` (same lattice index on the two outer
    axes, ascending on the first merge axis) and returns their predictions.
    The callable form streams: only one row of tiles is alive at a time.

    With ``record`` the tiles are taken as normalized CT and the fill value
    is converted from HU; without it tiles are assumed to be in HU already.
    The result stays in the tiles' units.

    Rows merge into cuboids along ``axis_order[0]``, cuboids into slabs
    along ``axis_order[1]``, slabs into the volume along ``axis_order[2]``,
    each in ascending lattice index. Completing each slab before starting
    the next gives the same result as running the three stages one after
    another, since no slab depends on another.
    """
    expected = {t.grid_index: t for t in plan.retained}
    fetch = tiles if callable(tiles) else _lookup(tiles, expected)
    fill = float(record.to_normalized(config.fill_hu)) if record is not None else config.fill_hu
    a0, a1, a2 = config.axis_order
    padded = plan.padded_dims
    size = plan.tile_size

    rows = defaultdict(list)
    for idx, spec in expected.items():
        rows[(idx[a2], idx[a1])].append(spec)

    volume = Canvas.empty(padded, a2, fill)
    for k2 in range(plan.lattice_shape[a2]):
        slab = None
        for k1 in range(plan.lattice_shape[a1]):
            row = sorted(rows.get((k2, k1), ()), key=lambda t: t.grid_index[a0])
            if not row:
                continue
            preds = fetch(row)
            if len(preds) != len(row):
                raise GridError(f"got {len(preds)} predictions for a row of {len(row)} tiles")
            shape = list(size)
            shape[a0] = padded[a0]
            cuboid = Canvas.empty(shape, a0, fill)
            for spec, pred in zip(row, preds):
                merge_along_axis(cuboid, _tile_array(pred, size), spec.origin[a0], config.gamma)
            if slab is None:
                shape[a1] = padded[a1]
                slab = Canvas.empty(shape, a1, fill)
            merge_along_axis(slab, cuboid.values, row[0].origin[a1], config.gamma, cuboid.covered)
        if slab is not None:
            merge_along_axis(volume, slab.values, plan.origins[a2][k2], config.gamma, slab.covered)

    nx, ny, nz = plan.volume_dims
    return VoxelGrid(volume.values[:nx, :ny, :nz])
