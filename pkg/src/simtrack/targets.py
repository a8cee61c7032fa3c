"""Training targets for a consecutive frame pair on the BEV grid.

Each object is rendered once, at the location where it first appears within the
two-frame window:

* present in both frames -> rendered at its previous centre, motion target is its
  displacement to the current centre;
* present only in the previous frame -> nothing is rendered (a negative);
* present only in the current frame -> rendered at its current centre, zero motion.

Maps are channel-first numpy arrays: centerness (C, H, W), motion (2, H, W) in metres
of the current ego frame, regression (6, H, W) holding z, w, l, h, sin(yaw), cos(yaw).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import CellIndex, GridSpec, world_to_cell
from .scenario import FrameGroundTruth, GtObject

log = logging.getLogger(__name__)

REG_CHANNELS: tuple[str, ...] = ("z", "w", "l", "h", "sin", "cos")
MOTION_CHANNELS: tuple[str, ...] = ("dx", "dy")


class Kind(enum.Enum):
    TRACKED = "tracked"
    DEAD = "dead"
    NEWBORN = "newborn"
    ABSENT = "absent"
    FALSE_POSITIVE = "false_positive"


def assignment_kind(present_prev: bool, present_cur: bool) -> Kind:
    if present_prev and present_cur:
        return Kind.TRACKED
    if present_prev:
        return Kind.DEAD
    if present_cur:
        return Kind.NEWBORN
    return Kind.ABSENT


@dataclass(frozen=True)
class TargetConfig:
    min_overlap: float = 0.1
    min_radius: int = 2


def gaussian_radius(l_cells: float, w_cells: float, min_overlap: float = 0.1, min_radius: int = 2) -> int:
    """Largest integer corner displacement keeping box IoU >= ``min_overlap``.

    Takes the smallest root of the three CornerNet cases (both corners shifted the same
    way, box shrunk, box grown), floors it, and clamps from below at ``min_radius``.
    """
    if l_cells < 1 or w_cells < 1:
        raise ValueError("box extent must be at least one cell")
    if not 0.0 < min_overlap < 1.0:
        raise ValueError("min_overlap must lie in (0, 1)")
    h, w, o = float(l_cells), float(w_cells), float(min_overlap)
    b1 = h + w
    c1 = h * w * (1 - o) / (1 + o)
    r1 = (b1 - math.sqrt(b1 * b1 - 4 * c1)) / 2
    b2 = 2 * (h + w)
    c2 = (1 - o) * h * w
    r2 = (b2 - math.sqrt(b2 * b2 - 16 * c2)) / 8
    a3 = 4 * o
    b3 = 2 * o * (h + w)
    c3 = (o - 1) * h * w
    r3 = (-b3 + math.sqrt(b3 * b3 - 4 * a3 * c3)) / (2 * a3)
    return max(int(min_radius), int(math.floor(min(r1, r2, r3))))


def gaussian_kernel(radius: int) -> np.ndarray:
    """(2r+1, 2r+1) unit-peak Gaussian with sigma = (2r+1)/6."""
    sigma = (2 * radius + 1) / 6.0
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / (2 * sigma * sigma))


def _window(shape: tuple[int, int], cell: Sequence[int], radius: int):
    h, w = shape
    r, c = cell
    top, bottom = min(r, radius), min(h - r, radius + 1)
    left, right = min(c, radius), min(w - c, radius + 1)
    dst = (slice(r - top, r + bottom), slice(c - left, c + right))
    src = (slice(radius - top, radius + bottom), slice(radius - left, radius + right))
    return dst, src


def render_gaussian(heatmap: np.ndarray, class_id: int, center_cell: Sequence[int], radius: int, peak: float) -> bool:
    """Max-merge a Gaussian into channel ``class_id`` of a (C, H, W) map, in place.

    Returns False, leaving the map untouched, when the centre lies off the grid.
    """
    if not 0.0 < peak <= 1.0:
        raise ValueError(f"peak must lie in (0, 1], got {peak}")
    h, w = heatmap.shape[-2:]
    r, c = int(center_cell[0]), int(center_cell[1])
    if not (0 <= r < h and 0 <= c < w):
        log.warning("gaussian centre %s lies outside the %dx%d grid", (r, c), h, w)
        return False
    dst, src = _window((h, w), (r, c), radius)
    ch = heatmap[class_id]
    np.maximum(ch[dst], peak * gaussian_kernel(radius)[src], out=ch[dst])
    return True


class Center(NamedTuple):
    class_id: int
    cell: CellIndex
    track_id: int
    kind: Kind


@dataclass
class RenderItem:
    """One object to rasterise: where, how strongly, and what it regresses."""

    track_id: int
    class_id: int
    kind: Kind
    center: tuple[float, float]
    motion: tuple[float, float]
    regression: tuple[float, float, float, float, float, float]
    peak: float = 1.0
    radius: int | None = None


@dataclass
class TargetMaps:
    centerness: np.ndarray
    motion: np.ndarray
    regression: np.ndarray
    centers: list[Center] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)


def empty_maps(grid: GridSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    h, w = grid.shape
    return (
        np.zeros((grid.num_classes, h, w)),
        np.zeros((len(MOTION_CHANNELS), h, w)),
        np.zeros((len(REG_CHANNELS), h, w)),
    )


def regression_vector(obj: GtObject) -> tuple[float, float, float, float, float, float]:
    b = obj.box
    return (b.center[2], b.size[0], b.size[1], b.size[2], math.sin(b.yaw), math.cos(b.yaw))


def item_radius(item: RenderItem, grid: GridSpec, cfg: TargetConfig) -> int:
    if item.radius is not None:
        return item.radius
    _, w, l = item.regression[:3]
    return gaussian_radius(max(1.0, l / grid.cell_size), max(1.0, w / grid.cell_size), cfg.min_overlap, cfg.min_radius)


def plan_targets(gt_prev: FrameGroundTruth | None, gt_cur: FrameGroundTruth) -> list[RenderItem]:
    """Apply the tracked / dead / new-born rules; ordered by track id."""
    prev = {} if gt_prev is None else gt_prev.by_id()
    items = []
    for obj in sorted(gt_cur.boxes, key=lambda b: b.track_id):
        before = prev.get(obj.track_id)
        kind = assignment_kind(before is not None, True)
        if kind is Kind.TRACKED:
            x0, y0 = before.box.xy
            x1, y1 = obj.box.xy
            items.append(RenderItem(obj.track_id, obj.box.class_id, kind, (x0, y0), (x1 - x0, y1 - y0), regression_vector(obj)))
        else:
            items.append(RenderItem(obj.track_id, obj.box.class_id, kind, obj.box.xy, (0.0, 0.0), regression_vector(obj)))
    return items


def render_items(items: Sequence[RenderItem], grid: GridSpec, cfg: TargetConfig = TargetConfig()) -> TargetMaps:
    """Rasterise items into fresh maps.

    Centerness max-merges per class. Motion and regression are written over each item's
    whole Gaussian window; where windows overlap, the cell goes to the item whose
    unit-peak Gaussian is strongest there (earlier items win ties).
    """
    heat, motion, reg = empty_maps(grid)
    strength = np.full(grid.shape, -1.0)
    out = TargetMaps(heat, motion, reg)
    for item in items:
        cell = world_to_cell(grid, item.center)
        if cell is None:
            out.skipped.append(item.track_id)
            continue
        radius = item_radius(item, grid, cfg)
        if item.peak > 0.0:
            render_gaussian(heat, item.class_id, cell, radius, min(1.0, item.peak))
        dst, src = _window(grid.shape, cell, radius)
        kern = gaussian_kernel(radius)[src]
        own = kern > strength[dst]
        strength[dst] = np.where(own, kern, strength[dst])
        for ch, v in enumerate(item.motion):
            motion[ch][dst][own] = v
        for ch, v in enumerate(item.regression):
            reg[ch][dst][own] = v
        if item.kind is not Kind.FALSE_POSITIVE:
            out.centers.append(Center(item.class_id, cell, item.track_id, item.kind))
    return out


def build_targets(
    gt_prev: FrameGroundTruth, gt_cur: FrameGroundTruth, grid: GridSpec, cfg: TargetConfig = TargetConfig()
) -> TargetMaps:
    """Target maps for a frame pair; ``gt_prev`` must already be in the ego frame of ``gt_cur``."""
    return render_items(plan_targets(gt_prev, gt_cur), grid, cfg)


def build_targets_single(gt_0: FrameGroundTruth, grid: GridSpec, cfg: TargetConfig = TargetConfig()) -> TargetMaps:
    """Targets for the first frame of a sequence: every object is new-born."""
    return render_items(plan_targets(None, gt_0), grid, cfg)
