"""Online joint detection and tracking by identity read-off.

The updated map Z is kept sparse: a list of live entries carrying identity, a
continuous centre in the current ego frame and a confidence score. Each step:

1. move Z into the new ego frame,
2. rasterise Z as point masses (max-merge) and average it with the new centerness map,
3. threshold + 3x3 local-maximum suppression,
4. read identities off Z at the peaks (same class, within ``read_radius`` cells,
   strongest peak first); unclaimed peaks open new identities, unclaimed entries die,
5. advance every surviving track by the motion map.

No box-to-box distance between detections of different frames is ever computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import Box3D, CellIndex, GridSpec, Pose2D, cell_center, relative_pose, transform_point, world_to_cell
from .oracle_head import HeadOutput


@dataclass(frozen=True)
class TrackerConfig:
    tau: float = 0.1
    nms_window: int = 3
    read_radius: float = 1.5
    emit_coasting: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.read_radius < 0:
            raise ValueError("read_radius must be non-negative")
        if self.nms_window < 1 or self.nms_window % 2 == 0:
            raise ValueError("nms_window must be a positive odd number of cells")


@dataclass(frozen=True)
class TrackEntry:
    track_id: int
    class_id: int
    center: tuple[float, float]
    score: float
    box: Box3D
    last_motion: tuple[float, float] = (0.0, 0.0)
    age: int = 0
    coasting: bool = False


@dataclass
class TrackerState:
    entries: list[TrackEntry]
    next_id: int
    frame: int
    grid: GridSpec


@dataclass(frozen=True)
class TrackOutput:
    """One reported track at one frame (ego frame of that frame)."""

    frame: int
    track_id: int
    class_id: int
    box: Box3D
    score: float
    motion: tuple[float, float]
    coasting: bool = False

    @property
    def xy(self) -> tuple[float, float]:
        return self.box.xy


FrameTracks = list[TrackOutput]


class Peak(NamedTuple):
    class_id: int
    cell: CellIndex
    score: float


def local_maxima(y: np.ndarray, window: int = 3) -> np.ndarray:
    """Boolean mask of cells not beaten by any neighbour in a square window, per channel.

    Plateaus resolve toward the lowest (row, col): a cell must strictly exceed the
    neighbours that precede it in raster order and at least match the rest.
    """
    half = window // 2
    c, h, w = y.shape
    padded = np.full((c, h + 2 * half, w + 2 * half), -np.inf)
    padded[:, half : half + h, half : half + w] = y
    keep = np.ones(y.shape, dtype=bool)
    for dr in range(-half, half + 1):
        for dc in range(-half, half + 1):
            if dr == 0 and dc == 0:
                continue
            nb = padded[:, half + dr : half + dr + h, half + dc : half + dc + w]
            if (dr, dc) < (0, 0):
                keep &= y > nb
            else:
                keep &= y >= nb
    return keep


def extract_peaks(y: np.ndarray, cfg: TrackerConfig = TrackerConfig()) -> list[Peak]:
    """Thresholded local maxima sorted by descending score, then (row, col, class)."""
    mask = local_maxima(y, cfg.nms_window) & (y >= cfg.tau)
    cls, rows, cols = np.nonzero(mask)
    scores = y[cls, rows, cols]
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], rows[i], cols[i], cls[i]))
    return [Peak(int(cls[i]), CellIndex(int(rows[i]), int(cols[i])), float(scores[i])) for i in order]


def box_at(out: HeadOutput, cell: Sequence[int], center: tuple[float, float], class_id: int) -> Box3D:
    """Assemble a box from the regression channels at ``cell``."""
    r, c = cell
    z, w, l, h, s, co = (float(v) for v in out.regression[:, r, c])
    # guard untrained / empty cells
    w, l, h = max(w, 1e-3), max(l, 1e-3), max(h, 1e-3)
    yaw = math.atan2(s, co) if (s != 0.0 or co != 0.0) else 0.0
    return Box3D((center[0], center[1], z), (w, l, h), yaw, class_id)


def _motion_at(out: HeadOutput, cell: Sequence[int]) -> tuple[float, float]:
    return (float(out.motion[0, cell[0], cell[1]]), float(out.motion[1, cell[0], cell[1]]))


def _anchor(y_raw: np.ndarray, peak: Peak, window: int) -> tuple[CellIndex, float]:
    """Strongest raw-map cell of the peak's class inside its suppression window."""
    half = window // 2
    r, c = peak.cell
    h, w = y_raw.shape[-2:]
    r0, r1 = max(0, r - half), min(h, r + half + 1)
    c0, c1 = max(0, c - half), min(w, c + half + 1)
    patch = y_raw[peak.class_id, r0:r1, c0:c1]
    best = float(patch.max())
    if best <= y_raw[peak.class_id, r, c]:
        return peak.cell, best
    k = int(np.argmax(patch))
    return CellIndex(r0 + k // patch.shape[1], c0 + k % patch.shape[1]), best


def _report(state: TrackerState, cfg: TrackerConfig) -> FrameTracks:
    out = []
    for e in state.entries:
        if e.coasting and not cfg.emit_coasting:
            continue
        out.append(TrackOutput(state.frame, e.track_id, e.class_id, e.box, e.score, e.last_motion, e.coasting))
    return out


def init(out0: HeadOutput, cfg: TrackerConfig = TrackerConfig()) -> tuple[TrackerState, FrameTracks]:
    """Open one identity per peak of the first frame, in descending-score order."""
    entries = []
    for k, p in enumerate(extract_peaks(out0.centerness, cfg)):
        center = cell_center(out0.grid, p.cell)
        box = box_at(out0, p.cell, center, p.class_id)
        entries.append(TrackEntry(k, p.class_id, center, p.score, box))
    state = TrackerState(entries, len(entries), 0, out0.grid)
    return state, _report(state, cfg)


def rasterize(entries: Sequence[TrackEntry], grid: GridSpec) -> tuple[np.ndarray, list[CellIndex | None]]:
    """Point-mass raster of Z (max-merge) and each entry's cell."""
    z = np.zeros((grid.num_classes, grid.height, grid.width))
    cells = []
    for e in entries:
        cell = world_to_cell(grid, e.center)
        cells.append(cell)
        if cell is not None:
            z[e.class_id, cell.row, cell.col] = max(z[e.class_id, cell.row, cell.col], e.score)
    return z, cells


def step(
    state: TrackerState, ego_rel: Pose2D, out_t: HeadOutput, cfg: TrackerConfig = TrackerConfig()
) -> tuple[TrackerState, FrameTracks]:
    """Advance one frame. ``ego_rel`` maps the previous ego frame into the current one."""
    if out_t.grid != state.grid:
        raise ValueError("head output grid does not match the tracker grid")
    grid = state.grid

    moved = [
        replace(e, center=transform_point(ego_rel, e.center), box=e.box.transformed(ego_rel))
        for e in state.entries
    ]
    z, cells = rasterize(moved, grid)
    y_raw = out_t.centerness
    y = 0.5 * (y_raw + z)
    peaks = extract_peaks(y, cfg)

    claimed = [False] * len(moved)
    entries: list[TrackEntry] = []
    next_id = state.next_id
    for p in peaks:
        best = None
        for i, e in enumerate(moved):
            if claimed[i] or cells[i] is None or e.class_id != p.class_id:
                continue
            d = math.hypot(cells[i].row - p.cell.row, cells[i].col - p.cell.col)
            if d > cfg.read_radius:
                continue
            key = (d, e.track_id)
            if best is None or key < best[0]:
                best = (key, i)
        anchor, support = _anchor(y_raw, p, cfg.nms_window)
        motion = _motion_at(out_t, anchor)
        base = cell_center(grid, anchor)
        center = (base[0] + motion[0], base[1] + motion[1])
        box = box_at(out_t, anchor, center, p.class_id)
        coasting = support < cfg.tau
        if best is not None:
            i = best[1]
            claimed[i] = True
            prev = moved[i]
            entries.append(TrackEntry(prev.track_id, p.class_id, center, p.score, box, motion, prev.age + 1, coasting))
        else:
            entries.append(TrackEntry(next_id, p.class_id, center, p.score, box, motion, 0, coasting))
            next_id += 1

    new_state = TrackerState(entries, next_id, state.frame + 1, grid)
    return new_state, _report(new_state, cfg)


def run_sequence(
    outputs: Sequence[HeadOutput], ego_poses: Sequence[Pose2D], cfg: TrackerConfig = TrackerConfig()
) -> list[FrameTracks]:
    if len(outputs) != len(ego_poses):
        raise ValueError("need one ego pose per head output")
    if not outputs:
        return []
    state, tracks = init(outputs[0], cfg)
    result = [tracks]
    for t in range(1, len(outputs)):
        state, tracks = step(state, relative_pose(ego_poses[t - 1], ego_poses[t]), outputs[t], cfg)
        result.append(tracks)
    return result
