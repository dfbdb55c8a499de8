import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import enumerate_axis, footprint_hits
from subvolmerge.grid import BinaryMask, GridError
from subvolmerge.planner import PlanError, count_report, filter_by_mask, plan_axis, plan_volume, stride_for


@pytest.mark.parametrize("extent, tile, p, expected", [
    (96, 96, 0.5, [0]),
    (192, 96, 0.0, [0, 96]),
    (192, 96, 0.5, [0, 48, 96]),
    (100, 96, 0.5, [0, 4]),
])
def test_plan_axis_examples(extent, tile, p, expected):
    assert plan_axis(extent, tile, p) == expected


@pytest.mark.parametrize("p", [1.0, -0.1, 1.5])
def test_plan_axis_rejects_fraction(p):
    with pytest.raises(PlanError, match="overlap fraction out of range"):
        plan_axis(100, 10, p)


def test_undersized_extent_pads():
    assert plan_axis(20, 32, 0.5) == [0]
    plan = plan_volume((20, 96, 96), (32, 96, 96), 0.5)
    assert plan.padding == (12, 0, 0)
    assert plan.padded_dims == (32, 96, 96)


def test_stride_round_half_up():
    assert stride_for(32, 0.7) == 10  # 9.6
    assert stride_for(96, 0.7) == 29  # 28.8
    assert stride_for(5, 0.5) == 3  # 2.5 rounds up
    assert stride_for(96, 0.999) == 1


@pytest.mark.parametrize("p, n", [(0.0, 16), (0.5, 63)])
def test_plan_volume_counts(p, n):
    plan = plan_volume((128, 192, 192), (32, 96, 96), p)
    assert plan.total == n == len(plan.retained)


def test_plan_volume_strides_and_overlap():
    plan = plan_volume((128, 192, 192), (32, 96, 96), 0.5)
    assert plan.stride == (16, 48, 48)
    assert plan.overlap_n == (16, 48, 48)
    assert plan.lattice_shape == (7, 3, 3)


def test_single_tile_volume():
    for p in (0.0, 0.3, 0.9):
        assert plan_volume((32, 96, 96), (32, 96, 96), p).total == 1


def test_clamped_pair_overlap():
    plan = plan_volume((100, 96, 96), (96, 96, 96), 0.5)
    assert plan.pair_overlaps(0) == [92]


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 400), st.integers(1, 120), st.floats(0, 0.95))
def test_plan_axis_matches_enumerator(extent, tile, p):
    p = round(p, 2)
    origins = plan_axis(extent, tile, p)
    assert origins == enumerate_axis(extent, tile, p)
    s = stride_for(tile, p)
    assert all(o >= 0 for o in origins)
    if extent >= tile:
        assert origins[-1] + tile == extent
    diffs = np.diff(origins)
    assert (diffs[:-1] == s).all() if len(diffs) > 1 else True
    if len(diffs):
        assert 0 < diffs[-1] <= s


@settings(max_examples=60, deadline=None)
@given(st.tuples(*[st.integers(1, 14)] * 3), st.tuples(*[st.integers(1, 6)] * 3), st.floats(0, 0.9))
def test_coverage_every_voxel(dims, tile, p):
    plan = plan_volume(dims, tile, round(p, 2))
    hits = np.zeros(dims, dtype=int)
    for t in plan.retained:
        hits[t.footprint(dims)] += 1
    assert hits.min() >= 1


@pytest.mark.parametrize("dims, tile", [((12, 8, 6), (4, 4, 3)), ((9, 9, 9), (3, 3, 3))])
def test_zero_overlap_disjoint_when_divisible(dims, tile):
    plan = plan_volume(dims, tile, 0.0)
    hits = np.zeros(dims, dtype=int)
    for t in plan.retained:
        hits[t.footprint(dims)] += 1
    assert (hits == 1).all()


def test_filter_trivial_masks():
    plan = plan_volume((64, 64, 64), (16, 32, 32), 0.5)
    full = filter_by_mask(plan, BinaryMask.full(plan.volume_dims))
    assert len(full.retained) == plan.total and full.skipped == ()
    empty = filter_by_mask(plan, BinaryMask(np.zeros(plan.volume_dims)))
    assert empty.retained == () and len(empty.skipped) == plan.total
    assert count_report(empty)["retained"] == 0


def test_filter_corner_region_brute_force():
    dims = (40, 48, 48)
    bits = np.zeros(dims, dtype=bool)
    bits[:8, 40:, 20:28] = True
    plan = plan_volume(dims, (16, 16, 16), 0.5)
    out = filter_by_mask(plan, BinaryMask(bits))
    expected = {t.grid_index for t in plan.retained if footprint_hits(t.origin, t.size, dims, bits)}
    assert {t.grid_index for t in out.retained} == expected
    assert 0 < len(expected) < plan.total
    assert len(out.retained) + len(out.skipped) == plan.total


def test_filter_dim_mismatch():
    plan = plan_volume((8, 8, 8), (4, 4, 4), 0.0)
    with pytest.raises(GridError):
        filter_by_mask(plan, BinaryMask(np.ones((8, 8, 9))))


def test_count_report_consistency():
    plan = plan_volume((128, 192, 192), (32, 96, 96), 0.5)
    rep = count_report(filter_by_mask(plan, BinaryMask.full(plan.volume_dims)))
    assert (rep["total"], rep["retained"], rep["skipped"]) == (63, 63, 0)
    assert rep["total"] == np.prod([len(o) for o in rep["per_axis_origins"]])
    assert rep["stride"] == [16, 48, 48] and rep["overlap_N"] == [16, 48, 48]
    ratio = 63 / count_report(plan_volume((128, 192, 192), (32, 96, 96), 0.0))["total"]
    assert ratio == pytest.approx(3.94, abs=0.01)


def test_total_monotone_in_p():
    for dims, tile in (((128, 192, 192), (32, 96, 96)), ((37, 50, 23), (8, 16, 5))):
        totals = [plan_volume(dims, tile, p).total for p in np.round(np.arange(0, 1, 0.05), 2)]
        assert totals == sorted(totals)


def test_retained_monotone_for_head_like_masks(rng):
    dims = (48, 64, 64)
    g = np.ogrid[: dims[0], : dims[1], : dims[2]]
    for _ in range(5):
        axes = rng.uniform(0.3, 0.45, 3) * np.array(dims)
        bits = sum(((gi - (n - 1) / 2) / a) ** 2 for gi, n, a in zip(g, dims, axes)) <= 1
        counts = [len(filter_by_mask(plan_volume(dims, (16, 32, 32), p), BinaryMask(bits)).retained)
                  for p in np.round(np.arange(0, 1, 0.1), 1)]
        assert counts == sorted(counts)


def test_retained_not_monotone_for_isolated_voxel():
    # Tile positions move with the stride, so one voxel can be hit by fewer tiles at larger p:
    # x origins are [0, 13, 26, 32] at p=0.2 (x=26 in two tiles) but [0, 10, 20, 30, 32] at p=0.4 (one tile).
    bits = np.zeros((48, 64, 64), dtype=bool)
    bits[26, 0, 0] = True
    counts = [len(filter_by_mask(plan_volume(bits.shape, (16, 32, 32), p), BinaryMask(bits)).retained)
              for p in (0.2, 0.4)]
    assert counts == [2, 1]
