"""Ground-truth-driven stand-in for a trained detection/tracking head.

The oracle renders the same hybrid-time targets a network would be trained on, then
degrades them: visibility-scaled and noisy peak scores, centre jitter, dropped peaks,
Poisson false positives and motion noise. An object that is occluded (or dropped) at
the current frame loses its centerness peak but keeps its motion and box regression,
so a tracker can still carry it forward.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import GridSpec, cell_center
from .scenario import CLASS_NAMES, DEFAULT_SIZES, FrameGroundTruth
from .targets import (
    MOTION_CHANNELS,
    REG_CHANNELS,
    Kind,
    RenderItem,
    TargetConfig,
    plan_targets,
    render_items,
)

FP_RADIUS = 2
MAGIC = b"SHO1"


@dataclass(frozen=True)
class NoiseConfig:
    score_sigma: float = 0.0
    center_sigma: float = 0.0
    drop_prob: float = 0.0
    fp_rate: float = 0.0
    motion_sigma: float = 0.0
    visibility_floor: float = 1.0

    def __post_init__(self) -> None:
        for name in ("score_sigma", "center_sigma", "drop_prob", "fp_rate", "motion_sigma", "visibility_floor"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.drop_prob > 1 or self.visibility_floor > 1:
            raise ValueError("drop_prob and visibility_floor must lie in [0, 1]")


@dataclass
class HeadOutput:
    centerness: np.ndarray
    motion: np.ndarray
    regression: np.ndarray
    grid: GridSpec
    num_false_positives: int = 0

    def channel_names(self) -> list[str]:
        names = [f"centerness/{_class_name(c)}" for c in range(self.centerness.shape[0])]
        names += [f"motion/{n}" for n in MOTION_CHANNELS]
        names += [f"regression/{n}" for n in REG_CHANNELS]
        return names


def _class_name(c: int) -> str:
    return CLASS_NAMES[c] if c < len(CLASS_NAMES) else f"class{c}"


def _fp_items(grid: GridSpec, noise: NoiseConfig, rng: np.random.Generator) -> list[RenderItem]:
    count = int(rng.poisson(noise.fp_rate)) if noise.fp_rate > 0 else 0
    items = []
    for k in range(count):
        row = int(rng.integers(0, grid.height))
        col = int(rng.integers(0, grid.width))
        cls = int(rng.integers(0, grid.num_classes))
        score = float(rng.uniform(0.1, 0.5))
        w, l, h = DEFAULT_SIZES[_class_name(cls)] if _class_name(cls) in DEFAULT_SIZES else (1.0, 1.0, 1.0)
        items.append(
            RenderItem(
                track_id=-(k + 1),
                class_id=cls,
                kind=Kind.FALSE_POSITIVE,
                center=cell_center(grid, (row, col)),
                motion=(0.0, 0.0),
                regression=(h / 2.0, w, l, h, 0.0, 1.0),
                peak=score,
                radius=FP_RADIUS,
            )
        )
    return items


def _degrade(
    items: list[RenderItem],
    gt_cur: FrameGroundTruth,
    noise: NoiseConfig,
    rng: np.random.Generator,
) -> list[RenderItem]:
    vis = {b.track_id: b.visibility for b in gt_cur.boxes}
    out = []
    for item in items:
        # draw every variate for every object so streams stay aligned across configs
        dropped = rng.uniform() < noise.drop_prob
        score_noise = abs(rng.normal(0.0, noise.score_sigma)) if noise.score_sigma > 0 else 0.0
        jitter = rng.normal(0.0, noise.center_sigma, size=2) if noise.center_sigma > 0 else np.zeros(2)
        dmot = rng.normal(0.0, noise.motion_sigma, size=2) if noise.motion_sigma > 0 else np.zeros(2)
        v = min(1.0, max(noise.visibility_floor, vis.get(item.track_id, 1.0)))
        peak = 0.0 if dropped else v * max(0.0, 1.0 - score_noise)
        out.append(
            RenderItem(
                track_id=item.track_id,
                class_id=item.class_id,
                kind=item.kind,
                center=(item.center[0] + float(jitter[0]), item.center[1] + float(jitter[1])),
                motion=(item.motion[0] + float(dmot[0]), item.motion[1] + float(dmot[1])),
                regression=item.regression,
                peak=min(1.0, peak),
            )
        )
    return out


def _predict(
    gt_prev: FrameGroundTruth | None,
    gt_cur: FrameGroundTruth,
    grid: GridSpec,
    noise: NoiseConfig,
    rng: np.random.Generator,
    target_cfg: TargetConfig,
) -> HeadOutput:
    items = _degrade(plan_targets(gt_prev, gt_cur), gt_cur, noise, rng)
    fps = _fp_items(grid, noise, rng)
    maps = render_items(items + fps, grid, target_cfg)
    return HeadOutput(maps.centerness, maps.motion, maps.regression, grid, len(fps))


def predict_pair(
    gt_prev: FrameGroundTruth,
    gt_cur: FrameGroundTruth,
    grid: GridSpec,
    noise: NoiseConfig,
    rng: np.random.Generator,
    target_cfg: TargetConfig = TargetConfig(),
) -> HeadOutput:
    """Head output for frames (t-1, t); ``gt_prev`` must be in the ego frame of t."""
    return _predict(gt_prev, gt_cur, grid, noise, rng, target_cfg)


def predict_single(
    gt_0: FrameGroundTruth,
    grid: GridSpec,
    noise: NoiseConfig,
    rng: np.random.Generator,
    target_cfg: TargetConfig = TargetConfig(),
) -> HeadOutput:
    return _predict(None, gt_0, grid, noise, rng, target_cfg)


# ---------------------------------------------------------------------------
# tensor file: MAGIC, u32 header length, JSON header, little-endian float32 (C, H, W)


def dumps_head(out: HeadOutput) -> bytes:
    stack = np.concatenate([out.centerness, out.motion, out.regression], axis=0)
    header = {
        "dims": list(stack.shape),
        "channels": out.channel_names(),
        "num_classes": int(out.centerness.shape[0]),
        "grid": out.grid.to_dict(),
        "dtype": "<f4",
        "order": "C",
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(hb)))
    buf.write(hb)
    buf.write(np.ascontiguousarray(stack, dtype="<f4").tobytes(order="C"))
    return buf.getvalue()


def loads_head(data: bytes) -> HeadOutput:
    if data[:4] != MAGIC:
        raise ValueError("not a head-output tensor file")
    (n,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + n].decode("utf-8"))
    dims = tuple(header["dims"])
    body = np.frombuffer(data[8 + n :], dtype="<f4")
    if body.size != int(np.prod(dims)):
        raise ValueError(f"payload holds {body.size} values, header promises {dims}")
    stack = body.reshape(dims).astype(np.float64)
    c = int(header["num_classes"])
    m = len(MOTION_CHANNELS)
    return HeadOutput(stack[:c], stack[c : c + m], stack[c + m :], GridSpec.from_dict(header["grid"]))


def save_head(out: HeadOutput, path: str | Path) -> None:
    Path(path).write_bytes(dumps_head(out))


def load_head(path: str | Path) -> HeadOutput:
    return loads_head(Path(path).read_bytes())
