import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_targets, dense, make_gt, radius_scan, random_pair

from simtrack.geometry import CellIndex, GridSpec
from simtrack.targets import (
    Kind,
    assignment_kind,
    build_targets,
    build_targets_single,
    gaussian_kernel,
    gaussian_radius,
    render_gaussian,
)

GRID = GridSpec()
CAR = (1.9, 4.5, 1.7)


def test_assignment_kind_total():
    assert assignment_kind(True, True) is Kind.TRACKED
    assert assignment_kind(True, False) is Kind.DEAD
    assert assignment_kind(False, True) is Kind.NEWBORN
    assert assignment_kind(False, False) is Kind.ABSENT


def test_radius_floor_clamp():
    assert gaussian_radius(1, 1) >= 2
    assert gaussian_radius(1, 1, min_radius=0) == 0


def test_radius_matches_scan_10x10():
    assert gaussian_radius(10, 10, 0.1) == radius_scan(10, 10, 0.1)


@given(st.floats(1, 60), st.floats(1, 60), st.floats(0.05, 0.95))
def test_radius_matches_scan(l, w, o):
    assert gaussian_radius(l, w, o, 0) == radius_scan(l, w, o, 0)


@given(st.floats(1, 40), st.floats(1, 40), st.floats(0, 20))
def test_radius_monotone(l, w, grow):
    assert gaussian_radius(l + grow, w + grow) >= gaussian_radius(l, w)
    assert gaussian_radius(20, 20) >= gaussian_radius(10, 10)


def test_radius_rejects_bad_input():
    with pytest.raises(ValueError):
        gaussian_radius(0.5, 3)
    with pytest.raises(ValueError):
        gaussian_radius(3, 3, 1.0)


def test_render_peak_and_tail():
    heat = np.zeros((3, 20, 20))
    assert render_gaussian(heat, 1, (10, 10), 2, 1.0)
    assert heat[1, 10, 10] == 1.0
    want = math.exp(-(2**2) / (2 * (5 / 6) ** 2))
    assert heat[1, 10, 12] == pytest.approx(want)
    assert want == pytest.approx(0.0561, abs=1e-4)
    assert heat[1, 10, 13] == 0.0 and heat[0].sum() == 0.0


def test_render_max_merge():
    heat = np.zeros((1, 9, 9))
    render_gaussian(heat, 0, (4, 4), 2, 0.6)
    render_gaussian(heat, 0, (4, 4), 2, 0.9)
    assert heat[0, 4, 4] == 0.9
    render_gaussian(heat, 0, (4, 4), 2, 0.3)
    assert heat[0, 4, 4] == 0.9


def test_render_off_grid_is_noop(caplog):
    heat = np.zeros((1, 5, 5))
    with caplog.at_level(logging.WARNING):
        assert not render_gaussian(heat, 0, (7, 2), 2, 1.0)
    assert not heat.any()
    assert "outside" in caplog.text


def test_render_clips_at_border():
    heat = np.zeros((1, 5, 5))
    render_gaussian(heat, 0, (0, 0), 2, 1.0)
    k = gaussian_kernel(2)
    assert np.array_equal(heat[0, :3, :3], k[2:, 2:])


def test_render_rejects_bad_peak():
    with pytest.raises(ValueError):
        render_gaussian(np.zeros((1, 5, 5)), 0, (2, 2), 2, 0.0)
    with pytest.raises(ValueError):
        render_gaussian(np.zeros((1, 5, 5)), 0, (2, 2), 2, 1.5)


def test_static_tracked_object():
    t = build_targets(make_gt(0, [(1, 0, 0.0, 0.0, 0.0, CAR)]), make_gt(1, [(1, 0, 0.0, 0.0, 0.0, CAR)]), GRID)
    assert [(c.cell, c.kind) for c in t.centers] == [(CellIndex(64, 64), Kind.TRACKED)]
    assert t.centerness[0, 64, 64] == 1.0
    assert tuple(t.motion[:, 64, 64]) == (0.0, 0.0)


def test_moving_tracked_object_rendered_at_previous_location():
    t = build_targets(make_gt(0, [(1, 0, 0.0, 0.0, 0.0, CAR)]), make_gt(1, [(1, 0, 2.0, -0.8, 0.0, CAR)]), GRID)
    assert t.centers[0].cell == CellIndex(64, 64)
    assert t.centerness[0, 64, 64] == 1.0
    assert t.motion[:, 64, 64] == pytest.approx((2.0, -0.8))
    # the current location is not a peak
    assert t.centerness[0, 63, 66] < 1.0


def test_dead_object_is_negative():
    t = build_targets(make_gt(0, [(1, 0, 0.0, 0.0, 0.0, CAR)]), make_gt(1, []), GRID)
    assert t.centerness[0, 64, 64] == 0.0 and t.centers == []
    assert not t.motion.any() and not t.regression.any()


def test_newborn_rendered_at_current_location():
    t = build_targets(make_gt(0, []), make_gt(1, [(4, 2, 8.0, 8.0, 0.3, (0.6, 1.8, 1.5))]), GRID)
    c = t.centers[0]
    assert c.kind is Kind.NEWBORN and c.class_id == 2 and c.cell == CellIndex(74, 74)
    assert tuple(t.motion[:, 74, 74]) == (0.0, 0.0)
    assert t.regression[:, 74, 74] == pytest.approx((0.75, 0.6, 1.8, 1.5, math.sin(0.3), math.cos(0.3)))


def test_off_grid_object_skipped_and_reported():
    t = build_targets(make_gt(0, []), make_gt(1, [(9, 0, 70.0, 0.0, 0.0, CAR)]), GRID)
    assert t.centers == [] and t.skipped == [9]


def test_single_frame_targets():
    empty = build_targets_single(make_gt(0, []), GRID)
    assert not empty.centerness.any() and not empty.motion.any() and not empty.regression.any()
    one = make_gt(0, [(0, 1, 3.0, -4.0, 0.0, (0.7, 0.7, 1.8))])
    a, b = build_targets_single(one, GRID), build_targets(make_gt(-1, []), one, GRID)
    assert np.array_equal(a.centerness, b.centerness) and a.centers == b.centers
    two = make_gt(0, [(0, 1, 3.0, -4.0, 0.0, (0.7, 0.7, 1.8)), (1, 1, 20.0, 10.0, 0.0, (0.7, 0.7, 1.8))])
    t = build_targets_single(two, GRID)
    assert (t.centerness == 1.0).sum() == 2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_targets_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    prev, cur = random_pair(rng, GRID)
    got = build_targets(prev, cur, GRID)
    centers, heat, motion, reg = brute_targets(prev, cur, GRID)
    assert [(c.class_id, tuple(c.cell), c.track_id, c.kind.value) for c in got.centers] == centers
    h, m, s = dense(heat, motion, reg, GRID)
    assert np.allclose(got.centerness, h, atol=1e-12, rtol=0)
    assert np.allclose(got.motion, m, atol=1e-12, rtol=0)
    assert np.allclose(got.regression, s, atol=1e-12, rtol=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_target_invariants(seed):
    rng = np.random.default_rng(seed)
    prev, cur = random_pair(rng, GRID)
    t = build_targets(prev, cur, GRID)
    assert t.centerness.min() >= 0.0 and t.centerness.max() <= 1.0
    p = prev.by_id()
    c = cur.by_id()
    for ctr in t.centers:
        r, q = ctr.cell
        assert t.centerness[ctr.class_id, r, q] == 1.0
        assert t.regression[4, r, q] ** 2 + t.regression[5, r, q] ** 2 == pytest.approx(1.0, abs=1e-12)
        assert min(t.regression[1:4, r, q]) > 0
    # tracked centres carry the exact finite difference (unless another object's peak owns the cell)
    owners = {}
    for ctr in t.centers:
        owners.setdefault(tuple(ctr.cell), []).append(ctr)
    for ctr in t.centers:
        if ctr.kind is Kind.TRACKED and len(owners[tuple(ctr.cell)]) == 1:
            a, b = p[ctr.track_id].box, c[ctr.track_id].box
            assert tuple(t.motion[:, ctr.cell[0], ctr.cell[1]]) == (b.center[0] - a.center[0], b.center[1] - a.center[1])


def test_dead_centre_only_carries_other_tails():
    prev = make_gt(0, [(0, 0, 0.0, 0.0, 0.0, CAR), (1, 0, 2.4, 0.0, 0.0, CAR)])
    cur = make_gt(1, [(1, 0, 2.4, 0.0, 0.0, CAR)])
    t = build_targets(prev, cur, GRID)
    alone = build_targets(make_gt(0, [(1, 0, 2.4, 0.0, 0.0, CAR)]), cur, GRID)
    assert t.centerness[0, 64, 64] == alone.centerness[0, 64, 64] < 1.0
