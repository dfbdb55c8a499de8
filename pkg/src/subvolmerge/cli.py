"""``subvolmerge`` command line.

Exit codes: 0 success, 2 usage or input error, 3 predictor protocol error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .blend import MergeConfig
from .formats import FormatError, load_grid, load_mask, save_grid
from .grid import GridError, VoxelGrid
from .metrics import evaluate, mae, psnr, residual_seam_gradient
from .phantom import PhantomSpec, make_phantom
from .pipeline import RowPredictor, make_plan, merge_predictions, predict_plan, prepare_input, run_pipeline
from .planner import DEFAULT_TILE, REPORT_CSV_COLUMNS, PlanError, count_report, report_csv_row
from .predictors import parse_predictor
from .protocol import ProtocolError
from .svg import line_chart

GAMMA_COLUMNS = ("gamma", "mae_hu", "psnr_db", "seam_gradient", "wall_time_s")
OVERLAP_COLUMNS = ("p", "retained_tiles", "mae_hu", "psnr_db", "seam_gradient", "wall_time_s")
CACHE_LIMIT = 1 << 30  # bytes of cached tile predictions in sweep-gamma


class InputError(ValueError):
    pass


def _ints(text):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected 3 values, got {text!r}")
    return vals


def _overlap(text):
    vals = tuple(float(v) for v in text.split(","))
    if len(vals) not in (1, 3):
        raise argparse.ArgumentTypeError(f"overlap takes 1 or 3 values, got {text!r}")
    return vals[0] if len(vals) == 1 else vals


def parse_range(text: str) -> list:
    """``a:b:step`` (inclusive) or a comma list."""
    if ":" in text:
        a, b, step = (float(v) for v in text.split(":"))
        if step <= 0 or b < a:
            raise argparse.ArgumentTypeError(f"bad range {text!r}")
        n = int(round((b - a) / step)) + 1
        return [round(a + i * step, 10) for i in range(n)]
    return [float(v) for v in text.split(",")]


def _emit(text: str, out: str | None):
    if out and out != "-":
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _csv(header_comment, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {header_comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _num(v):
    return v if isinstance(v, str) else repr(float(v))


def _load_mask_for(path, dims):
    if path is None:
        return None
    mask = load_mask(path)
    if mask.dims != tuple(dims):
        raise GridError(f"dimension mismatch: volume dims {tuple(dims)} vs mask dims {mask.dims}")
    return mask


# ---- commands ---------------------------------------------------------------

def cmd_plan(args):
    if args.dims is None and args.input is None:
        raise InputError("one of --dims or --input is required")
    dims = args.dims if args.dims is not None else load_grid(args.input).dims
    mask = _load_mask_for(args.mask, dims)
    report = count_report(make_plan(dims, args.tile, args.overlap, mask), args.gamma)
    if args.format == "csv":
        _emit(_csv("subvolmerge plan v1", REPORT_CSV_COLUMNS, [report_csv_row(report)]), args.out)
    else:
        _emit(json.dumps(report, indent=2) + "\n", args.out)


def cmd_synth(args):
    spec = PhantomSpec(dims=args.dims, seed=args.seed)
    mri, ct, mask = make_phantom(spec)
    prefix = args.out
    for name, grid in (("mri", mri), ("ct", ct), ("mask", mask)):
        if name == "mask":
            grid = VoxelGrid(mask.bits.astype(np.float32))
        save_grid(grid, f"{prefix}_{name}")
    print(json.dumps({"mri": f"{prefix}_mri.vgrid.json", "ct": f"{prefix}_ct.vgrid.json",
                      "mask": f"{prefix}_mask.vgrid.json", "mask_voxels": mask.count()}))


def _common_inputs(args):
    grid = load_grid(args.input)
    mask = _load_mask_for(args.mask, grid.dims)
    ref = None
    ref_path = getattr(args, "ref", None)
    if ref_path is not None:
        ref = load_grid(ref_path)
        if ref.dims != grid.dims:
            raise GridError(f"dimension mismatch: input dims {grid.dims} vs ref dims {ref.dims}")
    return grid, mask, ref


def cmd_merge(args):
    grid, mask, ref = _common_inputs(args)
    result = run_pipeline(grid, parse_predictor(args.predictor), mask, args.tile, args.overlap, args.gamma,
                          args.fill, args.normalize, args.ct_offset, args.axis_order, args.workers)
    if args.out:
        save_grid(result.sct, args.out)
    if ref is not None:
        report = evaluate(result.sct, ref, mask, args.peak, result.plan)
        print(json.dumps(report.to_dict(), indent=2))


def cmd_eval(args):
    pred = load_grid(args.pred)
    ref = load_grid(args.ref)
    mask = _load_mask_for(args.mask, ref.dims)
    report = evaluate(pred, ref, mask, args.peak)
    _emit(json.dumps(report.to_dict(), indent=2) + "\n" if args.format == "json" else report.to_csv(), args.out)


def _score(sct, ref, mask, plan, peak):
    value, _ = psnr(sct, ref, mask, peak)
    return mae(sct, ref, mask), value, residual_seam_gradient(sct, ref, plan, mask)


def cmd_sweep_gamma(args):
    grid, mask, ref = _common_inputs(args)
    ref = ref if ref is not None else grid
    predictor = parse_predictor(args.predictor)
    normalized_in, record = prepare_input(grid, args.normalize, args.ct_offset)
    plan = make_plan(grid.dims, args.tile, args.overlap, mask)
    pad = float(record.to_normalized(args.fill)) if args.normalize == "ct" else 0.0
    # Tiles do not depend on gamma. When they fit in memory, predict once and
    # charge that time to every row; otherwise stream them again per gamma.
    cache_bytes = 4 * len(plan.retained) * int(np.prod(plan.tile_size))
    preds, predict_s = None, 0.0
    if cache_bytes <= CACHE_LIMIT:
        t0 = time.perf_counter()
        preds = predict_plan(plan, normalized_in, predictor, pad, args.workers)
        predict_s = time.perf_counter() - t0
    rows = []
    for g in sorted(args.gammas):
        t1 = time.perf_counter()
        config = MergeConfig(gamma=g, overlap=plan.overlap_fraction, axis_order=args.axis_order, fill_hu=args.fill)
        if preds is not None:
            _, sct = merge_predictions(plan, preds, config, record)
        else:
            stream = RowPredictor(plan, normalized_in, predictor, pad, args.workers)
            try:
                _, sct = merge_predictions(plan, stream, config, record)
            finally:
                stream.close()
        wall = predict_s + time.perf_counter() - t1
        m, p, s = _score(sct, ref, mask, plan, args.peak)
        rows.append((g, m, p, s, wall))
    _emit(_csv("subvolmerge sweep-gamma v1", GAMMA_COLUMNS,
               [[_num(v) for v in r] for r in rows]), args.out)
    if args.svg:
        Path(args.svg).write_text(line_chart(
            [r[0] for r in rows],
            [(f"MAE vs gamma (overlap {args.overlap})", "MAE (HU)", [r[1] for r in rows])],
            "gamma"), encoding="utf-8")


def cmd_sweep_overlap(args):
    grid, mask, ref = _common_inputs(args)
    ref = ref if ref is not None else grid
    predictor = parse_predictor(args.predictor)
    rows = []
    for p in sorted(args.overlaps):
        t0 = time.perf_counter()
        res = run_pipeline(grid, predictor, mask, args.tile, p, args.gamma, args.fill, args.normalize,
                           args.ct_offset, args.axis_order, args.workers)
        wall = time.perf_counter() - t0
        m, ps, s = _score(res.sct, ref, mask, res.plan, args.peak)
        rows.append((p, len(res.plan.retained), m, ps, s, wall))
    _emit(_csv("subvolmerge sweep-overlap v1", OVERLAP_COLUMNS,
               [[_num(r[0]), r[1]] + [_num(v) for v in r[2:]] for r in rows]), args.out)
    if args.svg:
        xs = [r[0] for r in rows]
        Path(args.svg).write_text(line_chart(xs, [
            (f"MAE vs overlap (gamma {args.gamma})", "MAE (HU)", [r[2] for r in rows]),
            ("Retained subvolumes vs overlap", "tiles", [r[1] for r in rows]),
        ], "overlap fraction"), encoding="utf-8")


# ---- parser -----------------------------------------------------------------

def _pipeline_flags(p, predictor_default="identity"):
    p.add_argument("--input", required=True, help="input volume (.vgrid.json or .nii)")
    p.add_argument("--mask", help="binary mask volume; tiles outside it are skipped")
    p.add_argument("--ref", help="reference CT in HU for metrics")
    p.add_argument("--predictor", default=predictor_default,
                   help="identity | constant:C | affine:A,B,C,D | edge-bias:BETA,Q[@INNER] | external:CMD")
    p.add_argument("--tile", type=_ints, default=DEFAULT_TILE, help="tile size x,y,z (default 32,96,96)")
    p.add_argument("--fill", type=float, default=-1000.0, help="HU value for voxels no tile covers")
    p.add_argument("--normalize", choices=("ct", "mri"), default="ct",
                   help="how the input is scaled before prediction (ct: input is CT-like; mri: divide by 1000)")
    p.add_argument("--ct-offset", type=float, default=-1000.0,
                   help="CT offset in HU used to denormalize output when --normalize mri")
    p.add_argument("--axis-order", type=_ints, default=(0, 1, 2),
                   help="merge axes, first to last (default 0,1,2)")
    p.add_argument("--peak", default="auto", type=lambda s: s if s == "auto" else float(s),
                   help="PSNR peak in HU, or auto for the masked reference range")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="parallel tile predictions (threads, or worker processes for external)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subvolmerge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="tile lattice and subvolume counts")
    p.add_argument("--dims", type=_ints, help="volume dims x,y,z")
    p.add_argument("--input", help="take dims from this volume instead")
    p.add_argument("--tile", type=_ints, default=DEFAULT_TILE)
    p.add_argument("--overlap", type=_overlap, default=0.5, help="overlap fraction p in [0, 1)")
    p.add_argument("--gamma", type=float, help="recorded in the report only")
    p.add_argument("--mask")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("synth", help="write a synthetic phantom (mri, ct, mask)")
    p.add_argument("--dims", type=_ints, default=(128, 192, 192))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("merge", help="predict tiles and merge them into a volume")
    _pipeline_flags(p)
    p.add_argument("--overlap", type=_overlap, default=0.5, help="overlap fraction p in [0, 1)")
    p.add_argument("--gamma", type=float, default=0.9, help="blend exponent")
    p.add_argument("--out", help="output prefix for the merged .vgrid pair")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("eval", help="masked MAE/PSNR between two volumes")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--mask")
    p.add_argument("--peak", default="auto", type=lambda s: s if s == "auto" else float(s))
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-gamma", help="MAE/PSNR/seam gradient across gamma at fixed overlap")
    _pipeline_flags(p)
    p.add_argument("--gammas", type=parse_range, default=parse_range("0.1:1.9:0.1"),
                   help="start:stop:step (inclusive) or a comma list")
    p.add_argument("--overlap", type=_overlap, default=0.5)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--svg", help="write a line chart here")
    p.set_defaults(func=cmd_sweep_gamma)

    p = sub.add_parser("sweep-overlap", help="metrics and tile counts across overlap fractions")
    _pipeline_flags(p)
    p.add_argument("--overlaps", type=parse_range, default=parse_range("0:0.9:0.1"),
                   help="start:stop:step (inclusive) or a comma list")
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--svg", help="write a line chart here")
    p.set_defaults(func=cmd_sweep_overlap)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ProtocolError as exc:
        print(f"subvolmerge: predictor protocol error: {exc}", file=sys.stderr)
        return 3
    except (InputError, GridError, PlanError, FormatError, ValueError, OSError) as exc:
        print(f"subvolmerge: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
