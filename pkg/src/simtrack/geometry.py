"""BEV frames, SE(2) ego-motion, grid indexing, boxes and pillar occupancy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(angle + math.pi, 2.0 * math.pi)
    if a < 0.0:
        a += 2.0 * math.pi
    a -= math.pi
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Pose2D:
    """Rigid BEV pose. Maps local coordinates into the parent frame."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))

    @classmethod
    def identity(cls) -> Pose2D:
        return cls(0.0, 0.0, 0.0)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.yaw)


def compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Return a ∘ b: apply ``b`` first, then ``a``."""
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    return Pose2D(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.yaw + b.yaw,
    )


def invert(p: Pose2D) -> Pose2D:
    c, s = math.cos(p.yaw), math.sin(p.yaw)
    return Pose2D(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), -p.yaw)


def relative_pose(src: Pose2D, dst: Pose2D) -> Pose2D:
    """Transform taking coordinates in ``src``'s frame into ``dst``'s frame.

    Both poses must be expressed in the same world frame.
    """
    return compose(invert(dst), src)


def transform_point(p: Pose2D, pt: Sequence[float]) -> tuple[float, float]:
    c, s = math.cos(p.yaw), math.sin(p.yaw)
    x, y = float(pt[0]), float(pt[1])
    return (p.x + c * x - s * y, p.y + s * x + c * y)


def transform_points(p: Pose2D, pts: np.ndarray) -> np.ndarray:
    """Vectorised ``transform_point`` over an (N, 2) array."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    c, s = math.cos(p.yaw), math.sin(p.yaw)
    rot = np.array([[c, -s], [s, c]])
    return pts @ rot.T + np.array([p.x, p.y])


def rotate_vector(yaw: float, v: Sequence[float]) -> tuple[float, float]:
    c, s = math.cos(yaw), math.sin(yaw)
    return (c * v[0] - s * v[1], s * v[0] + c * v[1])


@dataclass(frozen=True)
class Point5D:
    x: float
    y: float
    z: float
    r: float
    dt: float = 0.0


@dataclass(frozen=True)
class Box3D:
    """Upright 3D box. ``l`` runs along the heading, ``w`` across it.

    ``velocity`` is informational and excluded from equality.
    """

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float
    class_id: int
    velocity: tuple[float, float] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        w, l, h = self.size
        if not (w > 0 and l > 0 and h > 0):
            raise ValueError(f"box size must be positive, got {self.size}")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))
        if self.velocity is not None:
            object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.center[0], self.center[1])

    def transformed(self, p: Pose2D) -> Box3D:
        """Box expressed in the parent frame of ``p``."""
        x, y = transform_point(p, self.xy)
        vel = None if self.velocity is None else rotate_vector(p.yaw, self.velocity)
        return Box3D((x, y, self.center[2]), self.size, self.yaw + p.yaw, self.class_id, vel)

    def footprint(self) -> np.ndarray:
        """BEV corners (4, 2), counter-clockwise."""
        w, l, _ = self.size
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        local = np.array([[l / 2, w / 2], [-l / 2, w / 2], [-l / 2, -w / 2], [l / 2, -w / 2]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array(self.xy)


def bev_center_distance(a: Box3D, b: Box3D) -> float:
    return math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])


class CellIndex(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class GridSpec:
    """Square-cell BEV grid. Rows index y, columns index x; cells are half-open."""

    range_min: tuple[float, float] = (-51.2, -51.2)
    range_max: tuple[float, float] = (51.2, 51.2)
    cell_size: float = 0.8
    num_classes: int = 3

    def __post_init__(self) -> None:
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        for lo, hi in zip(self.range_min, self.range_max):
            n = (hi - lo) / self.cell_size
            if hi <= lo or abs(n - round(n)) > 1e-6:
                raise ValueError(
                    f"range [{lo}, {hi}] is not an integer number of {self.cell_size} m cells"
                )

    @property
    def width(self) -> int:
        return int(round((self.range_max[0] - self.range_min[0]) / self.cell_size))

    @property
    def height(self) -> int:
        return int(round((self.range_max[1] - self.range_min[1]) / self.cell_size))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def contains(self, pt: Sequence[float]) -> bool:
        return (
            self.range_min[0] <= pt[0] < self.range_max[0]
            and self.range_min[1] <= pt[1] < self.range_max[1]
        )

    def to_dict(self) -> dict:
        return {
            "range_min": list(self.range_min),
            "range_max": list(self.range_max),
            "cell_size": self.cell_size,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GridSpec:
        return cls(
            tuple(d["range_min"]), tuple(d["range_max"]), float(d["cell_size"]), int(d["num_classes"])
        )


def world_to_cell(g: GridSpec, pt: Sequence[float]) -> CellIndex | None:
    """Cell containing ``pt``, or None when the point falls outside the grid."""
    col = math.floor((pt[0] - g.range_min[0]) / g.cell_size)
    row = math.floor((pt[1] - g.range_min[1]) / g.cell_size)
    if 0 <= row < g.height and 0 <= col < g.width:
        return CellIndex(row, col)
    return None


def cell_center(g: GridSpec, cell: Sequence[int]) -> tuple[float, float]:
    row, col = cell
    return (
        g.range_min[0] + (col + 0.5) * g.cell_size,
        g.range_min[1] + (row + 0.5) * g.cell_size,
    )


def pillarize(points: Sequence[Point5D] | np.ndarray, g: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell point count and mean relative timestamp.

    ``points`` is a sequence of Point5D or an (N, 5) array. Returns ``(count, mean_dt)``,
    both shaped (height, width); empty cells have mean_dt 0.
    """
    if isinstance(points, np.ndarray):
        arr = points.reshape(-1, 5).astype(np.float64)
    else:
        arr = np.array([[p.x, p.y, p.z, p.r, p.dt] for p in points], dtype=np.float64).reshape(-1, 5)
    count = np.zeros(g.shape, dtype=np.int64)
    dt_sum = np.zeros(g.shape, dtype=np.float64)
    if len(arr):
        cols = np.floor((arr[:, 0] - g.range_min[0]) / g.cell_size).astype(np.int64)
        rows = np.floor((arr[:, 1] - g.range_min[1]) / g.cell_size).astype(np.int64)
        keep = (rows >= 0) & (rows < g.height) & (cols >= 0) & (cols < g.width)
        np.add.at(count, (rows[keep], cols[keep]), 1)
        np.add.at(dt_sum, (rows[keep], cols[keep]), arr[keep, 4])
    mean_dt = np.divide(dt_sum, count, out=np.zeros_like(dt_sum), where=count > 0)
    return count, mean_dt
