"""Scenario -> head outputs -> tracks -> metrics, shared by the CLI and the tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .baselines import BaselineConfig, run_greedy, run_kalman
from .geometry import GridSpec, relative_pose
from .metrics import DEFAULT_GATE, DEFAULT_RECALLS, MetricsRow, Obs, evaluate, gt_to_obs, in_range, tracks_to_obs
from .oracle_head import HeadOutput, NoiseConfig, predict_pair, predict_single
from .scenario import CLASS_NAMES, STREAM_NOISE, FrameGroundTruth, Scenario, ground_truth_sequence, substream
from .targets import TargetConfig
from .tracker import FrameTracks, TrackerConfig, run_sequence

TRACKERS = ("simtrack", "greedy", "kalman")


@dataclass(frozen=True)
class MetricConfig:
    gate: float = DEFAULT_GATE
    n_recalls: int = DEFAULT_RECALLS
    score_thresh: float = 0.1

    def __post_init__(self) -> None:
        if not self.gate > 0:
            raise ValueError("gate must be positive")
        if self.n_recalls < 1:
            raise ValueError("n_recalls must be at least 1")


def head_outputs(
    s: Scenario,
    grid: GridSpec,
    noise: NoiseConfig,
    seed: int,
    gts: Sequence[FrameGroundTruth] | None = None,
    target_cfg: TargetConfig = TargetConfig(),
) -> list[HeadOutput]:
    """Oracle head output for every frame; the first frame sees a single sweep."""
    gts = list(gts) if gts is not None else ground_truth_sequence(s)
    rng = substream(seed, STREAM_NOISE)
    outs = []
    for t, gt in enumerate(gts):
        if t == 0:
            outs.append(predict_single(gt, grid, noise, rng, target_cfg))
        else:
            prev = gts[t - 1].transformed(relative_pose(s.ego[t - 1], s.ego[t]))
            outs.append(predict_pair(prev, gt, grid, noise, rng, target_cfg))
    return outs


def run_tracker(
    name: str,
    outputs: Sequence[HeadOutput],
    s: Scenario,
    tracker_cfg: TrackerConfig = TrackerConfig(),
    baseline_cfg: BaselineConfig = BaselineConfig(),
) -> list[FrameTracks]:
    if name == "simtrack":
        return run_sequence(outputs, s.ego, tracker_cfg)
    if name == "greedy":
        return run_greedy(outputs, s.ego, baseline_cfg, tracker_cfg.tau, s.dt)
    if name == "kalman":
        return run_kalman(outputs, s.ego, baseline_cfg, tracker_cfg.tau, s.dt)
    raise ValueError(f"unknown tracker {name!r}; choose from {', '.join(TRACKERS)}")


def eval_frames(
    tracks: Sequence[FrameTracks], gts: Sequence[FrameGroundTruth], grid: GridSpec, frame_dt: float
) -> tuple[list[list[Obs]], list[list[Obs]]]:
    """Both sides as Obs, restricted to the grid range."""
    preds = [in_range(tracks_to_obs(f, frame_dt), grid) for f in tracks]
    gt = [in_range(gt_to_obs(g), grid) for g in gts]
    return preds, gt


def evaluate_tracks(
    tracks: Sequence[FrameTracks],
    gts: Sequence[FrameGroundTruth],
    grid: GridSpec,
    frame_dt: float,
    metric_cfg: MetricConfig = MetricConfig(),
) -> list[MetricsRow]:
    preds, gt = eval_frames(tracks, gts, grid, frame_dt)
    return evaluate(preds, gt, CLASS_NAMES[: grid.num_classes], metric_cfg.gate, metric_cfg.n_recalls, metric_cfg.score_thresh)
