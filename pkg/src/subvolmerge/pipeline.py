"""Predict-then-merge pipeline shared by the CLI and the sweeps."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .blend import MergeConfig, assemble
from .grid import BinaryMask, NormalizationRecord, VoxelGrid, denormalize_ct, normalize_ct, normalize_mri
from .planner import DEFAULT_TILE, TilePlan, filter_by_mask, plan_volume
from .predictors import PredictorSpec, predict_tile, run_external


@dataclass
class PipelineResult:
    sct: VoxelGrid  # HU
    normalized: VoxelGrid
    plan: TilePlan
    record: NormalizationRecord
    predict_seconds: float
    merge_seconds: float


def prepare_input(grid: VoxelGrid, normalize: str = "ct", ct_offset: float = -1000.0):
    """Normalize the network input.

    ``"ct"`` treats the input as a CT volume (synthetic checks, where the
    input is also the reference); ``"mri"`` divides by 1000 and takes the CT
    offset for the output from ``ct_offset``.
    """
    if normalize == "ct":
        return normalize_ct(grid)
    if normalize == "mri":
        return normalize_mri(grid), NormalizationRecord(ct_offset=ct_offset)
    raise ValueError(f"unknown normalization {normalize!r}")


def make_plan(dims, tile=DEFAULT_TILE, overlap=0.5, mask: BinaryMask | None = None) -> TilePlan:
    plan = plan_volume(dims, tile, overlap)
    return filter_by_mask(plan, mask) if mask is not None else plan


def pad_volume(plan: TilePlan, volume: np.ndarray, pad_value: float) -> np.ndarray:
    padded = np.full(plan.padded_dims, pad_value, dtype=np.float32)
    nx, ny, nz = plan.volume_dims
    padded[:nx, :ny, :nz] = volume
    return padded


def tile_input(padded: np.ndarray, spec) -> np.ndarray:
    return padded[tuple(slice(o, o + s) for o, s in zip(spec.origin, spec.size))]


class RowPredictor:
    """Callable handed to :func:`assemble`: predicts one row of tiles at a time.

    Built-in predictors run on a thread pool of ``workers``; an external
    predictor gets the row as one ordered stream (split over ``workers``
    processes). Frame indices are positions in ``plan.retained``.
    """

    def __init__(self, plan: TilePlan, normalized: VoxelGrid, predictor: PredictorSpec, pad_value: float,
                 workers: int = 1):
        self.plan = plan
        self.padded = pad_volume(plan, normalized.values, pad_value)
        self.predictor = predictor
        self.workers = max(1, workers)
        self.position = {t.grid_index: k for k, t in enumerate(plan.retained)}
        self.pool = ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None
        self.seconds = 0.0

    def _one(self, spec):
        return predict_tile(self.predictor, tile_input(self.padded, spec), spec.origin, self.plan.tile_size)

    def __call__(self, row):
        t0 = time.perf_counter()
        if self.predictor.is_external:
            out = run_external(self.predictor.command, [tile_input(self.padded, t) for t in row],
                               workers=self.workers, indices=[self.position[t.grid_index] for t in row])
        elif self.pool is not None:
            out = list(self.pool.map(self._one, row))
        else:
            out = [self._one(t) for t in row]
        self.seconds += time.perf_counter() - t0
        return out

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def predict_plan(plan: TilePlan, normalized: VoxelGrid, predictor: PredictorSpec, pad_value: float,
                 workers: int = 1) -> dict:
    """Predict every retained tile up front; returns ``{grid_index: array}``."""
    rp = RowPredictor(plan, normalized, predictor, pad_value, workers)
    try:
        preds = rp(list(plan.retained))
    finally:
        rp.close()
    return {t.grid_index: p for t, p in zip(plan.retained, preds)}


def merge_predictions(plan, preds, config: MergeConfig, record):
    normalized = assemble(plan, preds, config, record)
    return normalized, denormalize_ct(normalized, record)


def run_pipeline(grid: VoxelGrid, predictor: PredictorSpec, mask: BinaryMask | None = None,
                 tile=DEFAULT_TILE, overlap=0.5, gamma=0.9, fill_hu=-1000.0, normalize="ct",
                 ct_offset=-1000.0, axis_order=(0, 1, 2), workers=1) -> PipelineResult:
    """Normalize, plan, predict row by row while merging, denormalize."""
    normalized_in, record = prepare_input(grid, normalize, ct_offset)
    plan = make_plan(grid.dims, tile, overlap, mask)
    pad = float(record.to_normalized(fill_hu)) if normalize == "ct" else 0.0
    config = MergeConfig(gamma=gamma, overlap=plan.overlap_fraction, axis_order=axis_order, fill_hu=fill_hu)
    t0 = time.perf_counter()
    rows = RowPredictor(plan, normalized_in, predictor, pad, workers)
    try:
        normalized, sct = merge_predictions(plan, rows, config, record)
    finally:
        rows.close()
    total = time.perf_counter() - t0
    sct = VoxelGrid(sct.values, grid.spacing)
    return PipelineResult(sct, normalized, plan, record, rows.seconds, total - rows.seconds)
