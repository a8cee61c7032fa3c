"""Tracking-by-detection baselines fed by the same head output as the tracker.

``greedy`` follows the common CenterPoint recipe: detections are pushed back by
their predicted velocity and matched, closest pair first, to the previous track
positions inside a class-specific gate. ``kalman`` runs a constant-velocity
filter per track and solves the assignment optimally. Both expose the track-life
heuristics (``max_age``, ``min_hits``) the sensitivity sweep varies.

Everything lives in the current ego frame. ``ego_rel`` moves the previous state
into it before matching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .assignment import GATED, greedy_assignment, hungarian
from .geometry import Box3D, GridSpec, Pose2D, cell_center, relative_pose, rotate_vector, transform_point
from .oracle_head import HeadOutput
from .tracker import FrameTracks, TrackerConfig, TrackOutput, _motion_at, box_at, extract_peaks

__all__ = [
    "BaselineConfig",
    "Detection",
    "KfState",
    "BaselineState",
    "detections_from_head",
    "greedy_step",
    "kf_predict",
    "kf_update",
    "kf_step",
    "hungarian",
    "run_greedy",
    "run_kalman",
]


@dataclass(frozen=True)
class Detection:
    box: Box3D
    score: float
    class_id: int
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")

    @property
    def xy(self) -> tuple[float, float]:
        return self.box.xy


@dataclass(frozen=True)
class BaselineConfig:
    max_dist: tuple[float, ...] = (4.0, 1.0, 2.5)  # car, pedestrian, bicycle
    max_age: int = 3
    min_hits: int = 1
    kf_q_pos: float = 0.1
    kf_q_vel: float = 1.0
    kf_r: float = 0.25
    kf_init_vel_var: float = 10.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "max_dist", tuple(float(d) for d in self.max_dist))
        if not self.max_dist or any(not d > 0 for d in self.max_dist):
            raise ValueError("every max_dist gate must be positive")
        if self.max_age < 0 or self.min_hits < 0:
            raise ValueError("max_age and min_hits must be non-negative")
        if self.kf_q_pos < 0 or self.kf_q_vel < 0 or self.kf_r < 0 or self.kf_init_vel_var <= 0:
            raise ValueError("Kalman noise scales must be non-negative")

    def gate(self, class_id: int) -> float:
        return self.max_dist[class_id] if class_id < len(self.max_dist) else self.max_dist[-1]


@dataclass(frozen=True)
class KfState:
    mean: np.ndarray  # (x, y, vx, vy)
    covariance: np.ndarray  # 4 x 4

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64).reshape(4))
        object.__setattr__(self, "covariance", np.asarray(self.covariance, dtype=np.float64).reshape(4, 4))

    @property
    def xy(self) -> tuple[float, float]:
        return (float(self.mean[0]), float(self.mean[1]))

    @property
    def velocity(self) -> tuple[float, float]:
        return (float(self.mean[2]), float(self.mean[3]))


@dataclass(frozen=True)
class Track:
    track_id: int
    class_id: int
    box: Box3D
    score: float
    velocity: tuple[float, float]
    age: int = 0  # frames since the last match
    hits: int = 1  # consecutive matched frames
    confirmed: bool = False
    kf: KfState | None = None

    @property
    def xy(self) -> tuple[float, float]:
        return self.box.xy


@dataclass
class BaselineState:
    tracks: list[Track] = field(default_factory=list)
    next_id: int = 0
    frame: int = -1


def detections_from_head(out: HeadOutput, grid: GridSpec, tau: float, frame_dt: float) -> list[Detection]:
    """Peaks of the centerness map, moved by the motion map to their current-frame location."""
    if frame_dt <= 0:
        raise ValueError("frame_dt must be positive")
    dets = []
    for p in extract_peaks(out.centerness, TrackerConfig(tau=tau)):
        m = _motion_at(out, p.cell)
        base = cell_center(grid, p.cell)
        center = (base[0] + m[0], base[1] + m[1])
        vel = (m[0] / frame_dt, m[1] / frame_dt)
        box = box_at(out, p.cell, center, p.class_id)
        dets.append(Detection(replace(box, velocity=vel), min(1.0, p.score), p.class_id, vel))
    return dets


def _to_current(track: Track, ego_rel: Pose2D | None) -> Track:
    if ego_rel is None:
        return track
    box = track.box.transformed(ego_rel)
    vel = rotate_vector(ego_rel.yaw, track.velocity)
    kf = None if track.kf is None else _kf_transform(track.kf, ego_rel)
    return replace(track, box=box, velocity=vel, kf=kf)


def _moved(box: Box3D, dx: float, dy: float, velocity=None) -> Box3D:
    x, y, z = box.center
    return replace(box, center=(x + dx, y + dy, z), velocity=velocity if velocity is not None else box.velocity)


def _lifecycle(
    tracks: list[Track],
    dets: Sequence[Detection],
    pairs: list[tuple[int, int]],
    cfg: BaselineConfig,
    state: BaselineState,
    frame_dt: float,
    coast,
    update,
    spawn,
) -> tuple[BaselineState, FrameTracks]:
    matched_t = {ti: di for ti, di in pairs}
    matched_d = {di for _, di in pairs}
    frame = state.frame + 1
    survivors: list[Track] = []
    for ti, trk in enumerate(tracks):
        if ti in matched_t:
            survivors.append(update(trk, dets[matched_t[ti]]))
        elif trk.age + 1 <= cfg.max_age:
            survivors.append(coast(trk))
    next_id = state.next_id
    for di, det in enumerate(dets):
        if di not in matched_d:
            survivors.append(spawn(next_id, det))
            next_id += 1
    out: FrameTracks = []
    for trk in survivors:
        if trk.age == 0 and trk.confirmed:
            motion = (trk.velocity[0] * frame_dt, trk.velocity[1] * frame_dt)
            out.append(TrackOutput(frame, trk.track_id, trk.class_id, trk.box, trk.score, motion))
    return BaselineState(survivors, next_id, frame), out


def _hit(trk: Track, cfg: BaselineConfig, **changes) -> Track:
    hits = trk.hits + 1
    return replace(trk, age=0, hits=hits, confirmed=trk.confirmed or hits >= cfg.min_hits, **changes)


def greedy_step(
    state: BaselineState,
    dets: Sequence[Detection],
    cfg: BaselineConfig = BaselineConfig(),
    frame_dt: float = 0.5,
    ego_rel: Pose2D | None = None,
) -> tuple[BaselineState, FrameTracks]:
    """One frame of closest-distance greedy association with velocity back-propagation."""
    tracks = [_to_current(t, ego_rel) for t in state.tracks]
    cost = np.full((len(tracks), len(dets)), np.inf)
    for i, trk in enumerate(tracks):
        for j, det in enumerate(dets):
            if det.class_id != trk.class_id:
                continue
            bx = det.xy[0] - det.velocity[0] * frame_dt
            by = det.xy[1] - det.velocity[1] * frame_dt
            d = math.hypot(bx - trk.xy[0], by - trk.xy[1])
            if d <= cfg.gate(trk.class_id):
                cost[i, j] = d
    pairs = greedy_assignment(cost, gate=np.finfo(float).max)

    def coast(trk: Track) -> Track:
        dx, dy = trk.velocity[0] * frame_dt, trk.velocity[1] * frame_dt
        return replace(trk, box=_moved(trk.box, dx, dy), age=trk.age + 1, hits=0)

    def update(trk: Track, det: Detection) -> Track:
        return _hit(trk, cfg, box=det.box, score=det.score, velocity=det.velocity)

    def spawn(tid: int, det: Detection) -> Track:
        return Track(tid, det.class_id, det.box, det.score, det.velocity, 0, 1, cfg.min_hits <= 1)

    return _lifecycle(tracks, dets, pairs, cfg, state, frame_dt, coast, update, spawn)


# ---------------------------------------------------------------------------
# constant-velocity Kalman filter


def _check_psd(p: np.ndarray, tol: float = 1e-9) -> None:
    if not np.allclose(p, p.T, atol=tol, rtol=0.0):
        raise ValueError("covariance is not symmetric")
    if np.linalg.eigvalsh(0.5 * (p + p.T)).min() < -tol:
        raise ValueError("covariance is not positive semi-definite")


def kf_init(xy: Sequence[float], velocity: Sequence[float] = (0.0, 0.0), cfg: BaselineConfig = BaselineConfig()) -> KfState:
    cov = np.diag([cfg.kf_r, cfg.kf_r, cfg.kf_init_vel_var, cfg.kf_init_vel_var])
    return KfState(np.array([xy[0], xy[1], velocity[0], velocity[1]], dtype=np.float64), cov)


def kf_predict(s: KfState, dt: float, q_pos: float = 0.1, q_vel: float = 1.0) -> KfState:
    """Constant-velocity prediction; process noise diag(q_pos, q_pos, q_vel, q_vel) * dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    _check_psd(s.covariance)
    f = np.eye(4)
    f[0, 2] = f[1, 3] = dt
    q = np.diag([q_pos, q_pos, q_vel, q_vel]) * dt
    p = f @ s.covariance @ f.T + q
    return KfState(f @ s.mean, 0.5 * (p + p.T))


_H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


def kf_update(s: KfState, z: Sequence[float], r: float = 0.25) -> KfState:
    """Position measurement update, innovation form with a Joseph-form covariance."""
    _check_psd(s.covariance)
    rm = np.eye(2) * r
    innov = np.asarray(z, dtype=np.float64).reshape(2) - _H @ s.mean
    sm = _H @ s.covariance @ _H.T + rm
    k = np.linalg.solve(sm.T, (s.covariance @ _H.T).T).T
    ikh = np.eye(4) - k @ _H
    p = ikh @ s.covariance @ ikh.T + k @ rm @ k.T
    return KfState(s.mean + k @ innov, 0.5 * (p + p.T))


def _kf_transform(s: KfState, pose: Pose2D) -> KfState:
    c, sn = math.cos(pose.yaw), math.sin(pose.yaw)
    rot = np.array([[c, -sn], [sn, c]])
    big = np.zeros((4, 4))
    big[:2, :2] = rot
    big[2:, 2:] = rot
    x, y = transform_point(pose, s.mean[:2])
    vx, vy = rot @ s.mean[2:]
    p = big @ s.covariance @ big.T
    return KfState(np.array([x, y, vx, vy]), 0.5 * (p + p.T))


def kf_step(
    state: BaselineState,
    dets: Sequence[Detection],
    cfg: BaselineConfig = BaselineConfig(),
    frame_dt: float = 0.5,
    ego_rel: Pose2D | None = None,
) -> tuple[BaselineState, FrameTracks]:
    """One frame of Kalman prediction, gated Hungarian assignment and update."""
    tracks = []
    for t in state.tracks:
        t = _to_current(t, ego_rel)
        kf = kf_predict(t.kf, frame_dt, cfg.kf_q_pos, cfg.kf_q_vel)
        x, y = kf.xy
        tracks.append(replace(t, kf=kf, box=_moved(t.box, x - t.xy[0], y - t.xy[1]), velocity=kf.velocity))
    cost = np.full((len(tracks), len(dets)), GATED)
    for i, trk in enumerate(tracks):
        for j, det in enumerate(dets):
            if det.class_id != trk.class_id:
                continue
            d = math.hypot(det.xy[0] - trk.xy[0], det.xy[1] - trk.xy[1])
            if d <= cfg.gate(trk.class_id):
                cost[i, j] = d
    pairs = [(i, j) for i, j in hungarian(cost) if cost[i, j] < GATED]

    def coast(trk: Track) -> Track:
        return replace(trk, age=trk.age + 1, hits=0)

    def update(trk: Track, det: Detection) -> Track:
        kf = kf_update(trk.kf, det.xy, cfg.kf_r)
        x, y = kf.xy
        box = replace(det.box, center=(x, y, det.box.center[2]), velocity=kf.velocity)
        return _hit(trk, cfg, kf=kf, box=box, score=det.score, velocity=kf.velocity)

    def spawn(tid: int, det: Detection) -> Track:
        kf = kf_init(det.xy, det.velocity, cfg)
        return Track(tid, det.class_id, det.box, det.score, det.velocity, 0, 1, cfg.min_hits <= 1, kf)

    return _lifecycle(tracks, dets, pairs, cfg, state, frame_dt, coast, update, spawn)


# ---------------------------------------------------------------------------


def _run(step, outputs, ego_poses, cfg, tau, frame_dt) -> list[FrameTracks]:
    if len(outputs) != len(ego_poses):
        raise ValueError("need one ego pose per head output")
    state = BaselineState()
    result = []
    for t, out in enumerate(outputs):
        ego_rel = None if t == 0 else relative_pose(ego_poses[t - 1], ego_poses[t])
        dets = detections_from_head(out, out.grid, tau, frame_dt)
        state, tracks = step(state, dets, cfg, frame_dt, ego_rel)
        result.append(tracks)
    return result


def run_greedy(
    outputs: Sequence[HeadOutput],
    ego_poses: Sequence[Pose2D],
    cfg: BaselineConfig = BaselineConfig(),
    tau: float = 0.1,
    frame_dt: float = 0.5,
) -> list[FrameTracks]:
    return _run(greedy_step, outputs, ego_poses, cfg, tau, frame_dt)


def run_kalman(
    outputs: Sequence[HeadOutput],
    ego_poses: Sequence[Pose2D],
    cfg: BaselineConfig = BaselineConfig(),
    tau: float = 0.1,
    frame_dt: float = 0.5,
) -> list[FrameTracks]:
    return _run(kf_step, outputs, ego_poses, cfg, tau, frame_dt)
