import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simtrack.geometry import (
    Box3D,
    CellIndex,
    GridSpec,
    Point5D,
    Pose2D,
    bev_center_distance,
    cell_center,
    compose,
    invert,
    normalize_angle,
    pillarize,
    relative_pose,
    transform_point,
    transform_points,
    world_to_cell,
)

coord = st.floats(-100, 100, allow_nan=False)
angle = st.floats(-10, 10, allow_nan=False)
poses = st.builds(Pose2D, coord, coord, angle)


def close_pose(a: Pose2D, b: Pose2D, tol=1e-9):
    assert abs(a.x - b.x) < tol and abs(a.y - b.y) < tol
    assert abs(normalize_angle(a.yaw - b.yaw)) < tol


def test_normalize_angle_range():
    assert normalize_angle(math.pi) == pytest.approx(math.pi)
    assert normalize_angle(-math.pi) == pytest.approx(math.pi)
    assert normalize_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


@given(angle)
def test_normalize_angle_half_open(a):
    n = normalize_angle(a)
    assert -math.pi < n <= math.pi
    assert math.isclose(math.cos(n), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(n), math.sin(a), abs_tol=1e-9)


def test_compose_identity():
    p = Pose2D(1.5, -2.0, 0.3)
    close_pose(compose(Pose2D.identity(), p), p)


def test_compose_quarter_turn_then_step():
    # hand evaluation: rotate (1, 0) by pi/2 -> (0, 1), then add (1, 0)
    close_pose(compose(Pose2D(1, 0, math.pi / 2), Pose2D(1, 0, 0)), Pose2D(1, 1, math.pi / 2))


def test_compose_inverse_is_identity():
    p = Pose2D(3.0, -1.0, 2.0)
    close_pose(compose(p, invert(p)), Pose2D.identity())


@given(poses, poses, poses)
def test_compose_associative(a, b, c):
    close_pose(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-8)


@given(poses)
def test_invert_two_sided(p):
    close_pose(compose(p, invert(p)), Pose2D.identity(), 1e-8)
    close_pose(compose(invert(p), p), Pose2D.identity(), 1e-8)


def test_relative_pose_examples():
    close_pose(relative_pose(Pose2D(1, 2, 0.4), Pose2D(1, 2, 0.4)), Pose2D.identity())
    q = transform_point(relative_pose(Pose2D(0, 0, 0), Pose2D(2, 0, 0)), (3, 0))
    assert q == pytest.approx((1, 0), abs=1e-12)
    q = transform_point(relative_pose(Pose2D(0, 0, 0), Pose2D(0, 0, math.pi / 2)), (1, 0))
    assert q == pytest.approx((0, -1), abs=1e-12)


@given(poses, poses, poses, st.tuples(coord, coord))
def test_relative_pose_chains(a, b, c, pt):
    direct = relative_pose(a, c)
    chained = compose(relative_pose(b, c), relative_pose(a, b))
    close_pose(direct, chained, 1e-7)
    assert transform_point(direct, pt) == pytest.approx(transform_point(chained, pt), abs=1e-7)


@given(poses, st.tuples(coord, coord))
def test_relative_pose_self_is_identity(a, pt):
    assert transform_point(relative_pose(a, a), pt) == pytest.approx(pt, abs=1e-9)


def test_transform_point_examples():
    assert transform_point(Pose2D.identity(), (3, 4)) == (3, 4)
    assert transform_point(Pose2D(1, 2, 0), (0, 0)) == (1, 2)
    x, y = transform_point(Pose2D(0, 0, math.pi), (1, 0))
    assert abs(x + 1) < 1e-9 and abs(y) < 1e-9


@given(poses)
def test_transform_points_matches_scalar(p):
    pts = np.array([[0.0, 0.0], [1.0, 2.0], [-3.5, 4.25]])
    got = transform_points(p, pts)
    want = np.array([transform_point(p, q) for q in pts])
    assert np.allclose(got, want, atol=1e-9)


def test_grid_default_shape():
    g = GridSpec()
    assert g.shape == (128, 128)
    with pytest.raises(ValueError):
        GridSpec((-1.0, -1.0), (1.0, 1.0), 0.7)


def test_world_to_cell_examples():
    g = GridSpec()
    assert world_to_cell(g, (-51.2, -51.2)) == CellIndex(0, 0)
    assert world_to_cell(g, (0.0, 0.0)) == CellIndex(64, 64)
    assert world_to_cell(g, (60.0, 0.0)) is None
    assert world_to_cell(g, (51.2, 0.0)) is None  # half-open upper edge


def test_rows_index_y():
    g = GridSpec()
    assert world_to_cell(g, (0.0, 10.0)) == CellIndex(76, 64)


@given(st.floats(-51.2, 51.19, allow_nan=False), st.floats(-51.2, 51.19, allow_nan=False))
def test_cell_round_trip(x, y):
    g = GridSpec()
    cell = world_to_cell(g, (x, y))
    assert cell is not None
    cx, cy = cell_center(g, cell)
    assert abs(cx - x) <= g.cell_size / 2 + 1e-9
    assert abs(cy - y) <= g.cell_size / 2 + 1e-9
    assert world_to_cell(g, (cx, cy)) == cell


def test_bev_center_distance():
    a = Box3D((0, 0, 0), (1, 1, 1), 0, 0)
    assert bev_center_distance(a, a) == 0
    assert bev_center_distance(a, Box3D((3, 4, 9), (1, 1, 1), 0, 0)) == 5
    b = Box3D((1, 1, 0), (1, 1, 1), 0, 0)
    assert bev_center_distance(b, Box3D((2, 2, 0), (1, 1, 1), 0, 0)) == pytest.approx(math.sqrt(2))


def test_box_invariants():
    with pytest.raises(ValueError):
        Box3D((0, 0, 0), (0, 1, 1), 0, 0)
    b = Box3D((0, 0, 0), (1, 2, 1), 4.0, 0, velocity=(1, 0))
    assert -math.pi < b.yaw <= math.pi
    # velocity does not take part in equality
    assert b == Box3D((0, 0, 0), (1, 2, 1), 4.0, 0)


def test_box_transformed_rotates_velocity():
    b = Box3D((1, 0, 0.5), (2, 4, 1.5), 0.0, 0, velocity=(1.0, 0.0))
    t = b.transformed(Pose2D(0, 0, math.pi / 2))
    assert t.xy == pytest.approx((0, 1), abs=1e-12)
    assert t.velocity == pytest.approx((0, 1), abs=1e-12)
    assert t.yaw == pytest.approx(math.pi / 2)


def test_footprint_corners():
    b = Box3D((1, 2, 0), (2, 4, 1), math.pi / 2, 0)
    fp = b.footprint()
    assert fp.min(axis=0) == pytest.approx((0, 0))
    assert fp.max(axis=0) == pytest.approx((2, 4))


def test_pillarize_empty():
    count, mean_dt = pillarize([], GridSpec())
    assert count.shape == (128, 128) and not count.any() and not mean_dt.any()


def test_pillarize_mean_dt():
    pts = [Point5D(0.1, 0.1, 0, 0.5, 0.0), Point5D(0.2, 0.3, 1, 0.5, 0.0), Point5D(0.7, 0.7, 0, 0.1, -0.1)]
    count, mean_dt = pillarize(pts, GridSpec())
    assert count[64, 64] == 3
    assert mean_dt[64, 64] == pytest.approx(-0.1 / 3)
    assert count.sum() == 3


def test_pillarize_drops_range_max():
    count, _ = pillarize(np.array([[51.2, 0.0, 0.0, 0.0, 0.0], [-51.2, -51.2, 0, 0, 0]]), GridSpec())
    assert count.sum() == 1 and count[0, 0] == 1


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(-70, 70), st.floats(-70, 70)), max_size=60))
def test_pillarize_conserves_in_grid_points(xy):
    g = GridSpec()
    arr = np.array([[x, y, 0.0, 0.0, 0.0] for x, y in xy]).reshape(-1, 5)
    count, _ = pillarize(arr, g)
    assert count.sum() == sum(g.contains(p) for p in xy)
