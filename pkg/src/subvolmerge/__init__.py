"""Hierarchical weighted merging of overlapping predicted subvolumes."""

from .grid import (
    BinaryMask,
    GridError,
    NormalizationRecord,
    VoxelGrid,
    apply_mask,
    denormalize_ct,
    normalize_ct,
    normalize_mri,
)
from .planner import TilePlan, TileSpec, count_report, filter_by_mask, plan_axis, plan_volume
from .blend import Canvas, MergeConfig, assemble, blend_pair, merge_along_axis, weight
from .metrics import IDENTICAL, MetricReport, evaluate, mae, psnr, residual_seam_gradient, seam_gradient, seam_profile
from .formats import FormatError, read_nifti, read_vgrid, write_vgrid
from .phantom import PhantomSpec, make_phantom
from .predictors import PredictorSpec, parse_predictor, predict_tile, run_external
from .protocol import ProtocolError

__version__ = "0.1.0"
