"""Deterministic synthetic driving scenes.

Objects move along piecewise-linear waypoint paths in a world frame while the ego
vehicle drives its own trajectory. Ground truth is reported in the ego frame of each
frame. A 2D bearing-bin ray caster supplies LiDAR-like points and per-object
visibility, with the nearest footprint along each bearing winning.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Box3D, Point5D, Pose2D, compose, invert, normalize_angle, rotate_vector, transform_point

CLASS_NAMES: tuple[str, ...] = ("car", "pedestrian", "bicycle")

DEFAULT_SIZES: dict[str, tuple[float, float, float]] = {
    "car": (1.9, 4.5, 1.7),
    "pedestrian": (0.7, 0.7, 1.8),
    "bicycle": (0.6, 1.8, 1.4),
}

DEFAULT_SPEEDS: dict[str, tuple[float, float]] = {
    "car": (0.0, 10.0),
    "pedestrian": (0.0, 1.5),
    "bicycle": (0.0, 5.0),
}

# parked trucks used as occluders: class car, long and tall
OCCLUDER_SIZE = (2.5, 10.0, 3.5)

STREAM_SCENARIO = 0
STREAM_NOISE = 1
STREAM_LIDAR = 2
STREAM_SWEEP = 3


def substream(seed: int, stream: int) -> np.random.Generator:
    """Named RNG sub-stream derived from a single top-level seed."""
    return np.random.default_rng([int(seed), int(stream)])


@dataclass
class ScenarioConfig:
    frames: int = 40
    dt: float = 0.5
    num_objects: tuple[int, int] = (8, 15)
    class_mix: dict[str, float] = field(default_factory=lambda: {"car": 0.6, "pedestrian": 0.25, "bicycle": 0.15})
    class_sizes: dict[str, tuple[float, float, float]] = field(default_factory=lambda: dict(DEFAULT_SIZES))
    speed_ranges: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_SPEEDS))
    birth_prob: float = 0.25
    death_prob: float = 0.25
    max_turn: float = 0.4
    occluders: int = 0
    ego_speed: float = 5.0
    ego_yaw_rate: float = 0.0
    spawn_range: float = 45.0
    min_ego_distance: float = 4.0
    min_gap: float = 1.0
    lifetime_margin: int = 4
    max_tries: int = 200

    def validate(self) -> None:
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not self.class_mix or sum(self.class_mix.values()) <= 0:
            raise ValueError("class_mix must contain at least one class with positive weight")
        for name, weight in self.class_mix.items():
            if name not in CLASS_NAMES:
                raise ValueError(f"unknown class {name!r} in class_mix")
            if weight < 0:
                raise ValueError(f"class_mix weight for {name!r} is negative")
        lo, hi = self.num_objects
        if lo < 0 or hi < lo:
            raise ValueError("num_objects must be an ordered non-negative range")
        for p in (self.birth_prob, self.death_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("birth_prob and death_prob must lie in [0, 1]")


@dataclass
class ObjectSpec:
    """One object's lifetime and world-frame path.

    ``waypoints`` are (frame, x, y, yaw) rows; position and yaw interpolate linearly.
    The object exists on frames birth_frame..death_frame inclusive.
    """

    track_id: int
    class_id: int
    size: tuple[float, float, float]
    birth_frame: int
    death_frame: int
    waypoints: list[tuple[float, float, float, float]]

    def alive(self, t: int) -> bool:
        return self.birth_frame <= t <= self.death_frame

    def pose_at(self, t: float) -> Pose2D:
        wps = self.waypoints
        if t <= wps[0][0]:
            return Pose2D(wps[0][1], wps[0][2], wps[0][3])
        for (f0, x0, y0, a0), (f1, x1, y1, a1) in zip(wps, wps[1:]):
            if t <= f1:
                u = (t - f0) / (f1 - f0) if f1 > f0 else 1.0
                da = normalize_angle(a1 - a0)
                return Pose2D(x0 + u * (x1 - x0), y0 + u * (y1 - y0), a0 + u * da)
        last = wps[-1]
        return Pose2D(last[1], last[2], last[3])


@dataclass
class Scenario:
    frames: int
    dt: float
    ego: list[Pose2D]
    objects: list[ObjectSpec]
    seed: int = 0
    config: ScenarioConfig | None = None

    def __post_init__(self) -> None:
        if len(self.ego) != self.frames:
            raise ValueError("ego trajectory length must equal frame count")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def object(self, track_id: int) -> ObjectSpec:
        for obj in self.objects:
            if obj.track_id == track_id:
                return obj
        raise KeyError(track_id)

    def to_json(self) -> str:
        doc = {
            "frames": self.frames,
            "dt": self.dt,
            "seed": self.seed,
            "ego": [list(p.as_tuple()) for p in self.ego],
            "objects": [
                {
                    "track_id": o.track_id,
                    "class_id": o.class_id,
                    "size": list(o.size),
                    "birth_frame": o.birth_frame,
                    "death_frame": o.death_frame,
                    "waypoints": [list(w) for w in o.waypoints],
                }
                for o in self.objects
            ],
            "config": None if self.config is None else asdict(self.config),
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> Scenario:
        doc = json.loads(text)
        cfg = None
        if doc.get("config") is not None:
            raw = dict(doc["config"])
            raw["num_objects"] = tuple(raw["num_objects"])
            raw["class_sizes"] = {k: tuple(v) for k, v in raw["class_sizes"].items()}
            raw["speed_ranges"] = {k: tuple(v) for k, v in raw["speed_ranges"].items()}
            cfg = ScenarioConfig(**raw)
        objects = [
            ObjectSpec(
                track_id=int(o["track_id"]),
                class_id=int(o["class_id"]),
                size=tuple(o["size"]),
                birth_frame=int(o["birth_frame"]),
                death_frame=int(o["death_frame"]),
                waypoints=[tuple(w) for w in o["waypoints"]],
            )
            for o in doc["objects"]
        ]
        return cls(
            frames=int(doc["frames"]),
            dt=float(doc["dt"]),
            ego=[Pose2D(*p) for p in doc["ego"]],
            objects=objects,
            seed=int(doc["seed"]),
            config=cfg,
        )


@dataclass(frozen=True)
class GtObject:
    track_id: int
    box: Box3D
    velocity: tuple[float, float]
    visibility: float = 1.0


@dataclass(frozen=True)
class FrameGroundTruth:
    frame: int
    boxes: tuple[GtObject, ...]

    def by_id(self) -> dict[int, GtObject]:
        return {b.track_id: b for b in self.boxes}

    def transformed(self, p: Pose2D, frame: int | None = None) -> FrameGroundTruth:
        """Re-express every box via ``p`` (e.g. a relative pose between ego frames)."""
        boxes = tuple(
            GtObject(b.track_id, b.box.transformed(p), rotate_vector(p.yaw, b.velocity), b.visibility)
            for b in self.boxes
        )
        return FrameGroundTruth(self.frame if frame is None else frame, boxes)


@dataclass
class SensorConfig:
    num_beams: int = 720
    max_range: float = 80.0
    points_per_hit: int = 2
    noise_sigma: float = 0.02

    def __post_init__(self) -> None:
        if self.num_beams < 1:
            raise ValueError("num_beams must be >= 1")


# ---------------------------------------------------------------------------
# generation


def _ego_trajectory(cfg: ScenarioConfig) -> list[Pose2D]:
    poses = [Pose2D()]
    step = Pose2D(cfg.ego_speed * cfg.dt, 0.0, cfg.ego_yaw_rate * cfg.dt)
    for _ in range(1, cfg.frames):
        poses.append(compose(poses[-1], step))
    return poses


def _path_positions(obj: ObjectSpec, frames: np.ndarray) -> np.ndarray:
    wps = np.asarray(obj.waypoints, dtype=np.float64)
    f = np.asarray(frames, dtype=np.float64)
    return np.stack([np.interp(f, wps[:, 0], wps[:, 1]), np.interp(f, wps[:, 0], wps[:, 2])], axis=1)


def _clearance(obj: ObjectSpec) -> float:
    return 0.5 * math.hypot(obj.size[0], obj.size[1])


def _fits(
    obj: ObjectSpec,
    placed: list[ObjectSpec],
    ego: np.ndarray,
    cfg: ScenarioConfig,
    check_range: bool = True,
) -> bool:
    frames = np.arange(obj.birth_frame, obj.death_frame + 1)
    pos = _path_positions(obj, frames)
    r = _clearance(obj)
    # into the ego frame of each frame
    d = pos - ego[frames, :2]
    c, s = np.cos(ego[frames, 2]), np.sin(ego[frames, 2])
    ex = c * d[:, 0] + s * d[:, 1]
    ey = -s * d[:, 0] + c * d[:, 1]
    if check_range and np.any(np.maximum(np.abs(ex), np.abs(ey)) + r > cfg.spawn_range):
        return False
    if np.any(np.hypot(ex, ey) < cfg.min_ego_distance + r):
        return False
    m = cfg.lifetime_margin
    for other in placed:
        lo = max(obj.birth_frame, other.birth_frame - m)
        hi = min(obj.death_frame, other.death_frame + m)
        if lo > hi:
            continue
        need = r + _clearance(other) + cfg.min_gap
        fr = np.arange(lo, hi + 1)
        a = pos[fr - obj.birth_frame]
        # outside its own lifetime the other object is held at its nearest endpoint
        b = _path_positions(other, np.clip(fr, other.birth_frame, other.death_frame))
        if np.min(np.hypot(*(a - b).T)) < need:
            return False
    return True


def _sample_object(
    track_id: int,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    ego: list[Pose2D],
    birth: int,
    death: int,
) -> ObjectSpec:
    names = [n for n in CLASS_NAMES if cfg.class_mix.get(n, 0.0) > 0]
    weights = np.array([cfg.class_mix[n] for n in names], dtype=np.float64)
    name = names[int(rng.choice(len(names), p=weights / weights.sum()))]
    class_id = CLASS_NAMES.index(name)
    size = tuple(float(v) for v in cfg.class_sizes[name])
    lo, hi = cfg.speed_ranges[name]
    speed = float(rng.uniform(lo, hi))
    heading = float(rng.uniform(-math.pi, math.pi))
    # spawn in the ego frame of the birth frame
    local = (float(rng.uniform(-cfg.spawn_range, cfg.spawn_range)), float(rng.uniform(-cfg.spawn_range, cfg.spawn_range)))
    x0, y0 = transform_point(ego[birth], local)
    yaw0 = heading
    waypoints = [(float(birth), x0, y0, yaw0)]
    if death > birth:
        span = death - birth
        mid = birth + span // 2 if span >= 2 else death
        step = speed * cfg.dt
        x1 = x0 + math.cos(yaw0) * step * (mid - birth)
        y1 = y0 + math.sin(yaw0) * step * (mid - birth)
        turn = float(rng.uniform(-cfg.max_turn, cfg.max_turn))
        # a parked object keeps its heading
        yaw1 = normalize_angle(yaw0 + turn) if step > 0 else yaw0
        if mid == death:
            waypoints.append((float(death), x1, y1, yaw0))
        else:
            waypoints.append((float(mid), x1, y1, yaw0))
            x2 = x1 + math.cos(yaw1) * step * (death - mid)
            y2 = y1 + math.sin(yaw1) * step * (death - mid)
            waypoints.append((float(death), x2, y2, yaw1))
    return ObjectSpec(track_id, class_id, size, birth, death, waypoints)


def _sample_occluder(track_id: int, cfg: ScenarioConfig, rng: np.random.Generator, ego: list[Pose2D]) -> ObjectSpec:
    # parked beside the ego route, anywhere along it; it drifts in and out of range
    k = int(rng.integers(0, len(ego)))
    side = 1.0 if rng.uniform() < 0.5 else -1.0
    local = (float(rng.uniform(-10.0, 25.0)), side * float(rng.uniform(7.0, 14.0)))
    x, y = transform_point(ego[k], local)
    yaw = ego[k].yaw + float(rng.uniform(-0.2, 0.2))
    size = OCCLUDER_SIZE
    last = float(cfg.frames - 1)
    return ObjectSpec(track_id, CLASS_NAMES.index("car"), size, 0, cfg.frames - 1, [(0.0, x, y, yaw), (last, x, y, yaw)])


def generate(cfg: ScenarioConfig, seed: int) -> Scenario:
    """Build a scenario; identical (cfg, seed) gives an identical scenario."""
    cfg.validate()
    rng = substream(seed, STREAM_SCENARIO)
    ego = _ego_trajectory(cfg)
    ego_arr = np.array([p.as_tuple() for p in ego])
    n_frames = cfg.frames
    placed: list[ObjectSpec] = []
    next_id = 0

    for _ in range(cfg.occluders):
        for _ in range(cfg.max_tries):
            occ = _sample_occluder(next_id, cfg, rng, ego)
            if _fits(occ, placed, ego_arr, cfg, check_range=False):
                placed.append(occ)
                next_id += 1
                break

    target = int(rng.integers(cfg.num_objects[0], cfg.num_objects[1] + 1))
    n_occ = len(placed)
    for _ in range(target):
        for _ in range(cfg.max_tries):
            birth = 0
            death = n_frames - 1
            if n_frames >= 2 and rng.uniform() < cfg.birth_prob:
                birth = int(rng.integers(1, n_frames))
            if n_frames >= 2 and rng.uniform() < cfg.death_prob and birth < n_frames - 1:
                death = int(rng.integers(birth, n_frames - 1))
            obj = _sample_object(next_id, cfg, rng, ego, birth, death)
            if _fits(obj, placed, ego_arr, cfg):
                placed.append(obj)
                next_id += 1
                break

    # guarantee requested lifecycle events by shortening lifetimes, which keeps every
    # placement constraint satisfied
    movers = placed[n_occ:]
    if cfg.birth_prob > 0 and n_frames >= 2 and movers and not any(o.birth_frame > 0 for o in movers):
        cand = [o for o in movers if o.death_frame >= 1]
        if cand:
            o = cand[0]
            o.birth_frame = int(rng.integers(1, o.death_frame + 1))
    if cfg.death_prob > 0 and n_frames >= 2 and movers and not any(o.death_frame < n_frames - 1 for o in movers):
        cand = [o for o in movers if o.birth_frame < n_frames - 1]
        if cand:
            o = cand[-1]
            o.death_frame = int(rng.integers(o.birth_frame, n_frames - 1))
    return Scenario(frames=n_frames, dt=cfg.dt, ego=ego, objects=placed, seed=int(seed), config=cfg)


# ---------------------------------------------------------------------------
# ground truth


def world_box(obj: ObjectSpec, t: int) -> Box3D:
    p = obj.pose_at(float(t))
    w, l, h = obj.size
    return Box3D((p.x, p.y, h / 2.0), obj.size, p.yaw, obj.class_id)


def world_velocity(obj: ObjectSpec, t: int, dt: float) -> tuple[float, float]:
    """Backward finite difference, forward at the birth frame, zero for one-frame objects."""
    if t - 1 >= obj.birth_frame:
        a, b = obj.pose_at(t - 1.0), obj.pose_at(float(t))
    elif t + 1 <= obj.death_frame:
        a, b = obj.pose_at(float(t)), obj.pose_at(t + 1.0)
    else:
        return (0.0, 0.0)
    return ((b.x - a.x) / dt, (b.y - a.y) / dt)


def ground_truth_at(s: Scenario, t: int, sensor: SensorConfig | None = None) -> FrameGroundTruth:
    """Alive objects at frame ``t`` in the ego frame of ``t``, with visibility."""
    if not 0 <= t < s.frames:
        raise IndexError(f"frame {t} outside [0, {s.frames})")
    inv = invert(s.ego[t])
    alive = [o for o in s.objects if o.alive(t)]
    vis = _visibilities(s, t, alive, sensor or SensorConfig())
    boxes = []
    for obj, v in zip(alive, vis):
        box = world_box(obj, t).transformed(inv)
        vel = rotate_vector(inv.yaw, world_velocity(obj, t, s.dt))
        boxes.append(GtObject(obj.track_id, Box3D(box.center, box.size, box.yaw, box.class_id, vel), vel, float(v)))
    return FrameGroundTruth(t, tuple(boxes))


def ground_truth_sequence(s: Scenario, sensor: SensorConfig | None = None) -> list[FrameGroundTruth]:
    return [ground_truth_at(s, t, sensor) for t in range(s.frames)]


# ---------------------------------------------------------------------------
# ray casting


def beam_angles(num_beams: int) -> np.ndarray:
    """Bin-centre bearings of ``num_beams`` equal bins covering (-pi, pi]."""
    return -math.pi + (np.arange(num_beams) + 0.5) * (2.0 * math.pi / num_beams)


def _ray_box_hits(boxes: Sequence[Box3D], angles: np.ndarray) -> np.ndarray:
    """Entry distance of each ray from the origin into each footprint; inf on a miss.

    Returns an array shaped (len(boxes), len(angles)).
    """
    out = np.full((len(boxes), len(angles)), np.inf)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    for i, box in enumerate(boxes):
        w, l, _ = box.size
        c, s = math.cos(box.yaw), math.sin(box.yaw)
        cx, cy = box.xy
        # ray origin and directions in the box frame
        ox, oy = -(c * cx + s * cy), -(-s * cx + c * cy)
        dx = c * dirs[:, 0] + s * dirs[:, 1]
        dy = -s * dirs[:, 0] + c * dirs[:, 1]
        half = (l / 2.0, w / 2.0)
        t_lo = np.zeros(len(angles))
        t_hi = np.full(len(angles), np.inf)
        ok = np.ones(len(angles), dtype=bool)
        for o, d, h in ((ox, dx, half[0]), (oy, dy, half[1])):
            par = np.abs(d) < 1e-15
            ok &= ~par | (np.abs(o) <= h)
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (-h - o) / d
                t2 = (h - o) / d
            near = np.where(par, -np.inf, np.minimum(t1, t2))
            far = np.where(par, np.inf, np.maximum(t1, t2))
            t_lo = np.maximum(t_lo, near)
            t_hi = np.minimum(t_hi, far)
        hit = ok & (t_lo <= t_hi) & (t_hi > 0)
        out[i, hit] = t_lo[hit]
    return out


def _ego_frame_boxes(s: Scenario, t: int, objs: Sequence[ObjectSpec]) -> list[Box3D]:
    inv = invert(s.ego[t])
    return [world_box(o, t).transformed(inv) for o in objs]


def _visibilities(s: Scenario, t: int, alive: Sequence[ObjectSpec], sensor: SensorConfig) -> list[float]:
    if not alive:
        return []
    boxes = _ego_frame_boxes(s, t, alive)
    angles = beam_angles(sensor.num_beams)
    dist = _ray_box_hits(boxes, angles)
    nearest = np.argmin(dist, axis=0)
    nearest_d = dist[nearest, np.arange(len(angles))]
    out = []
    for i, box in enumerate(boxes):
        covered = np.isfinite(dist[i])
        if not covered.any():
            # footprint narrower than one bin: judge it at the bin holding its centre bearing
            bearing = math.atan2(box.xy[1], box.xy[0])
            k = int(min(sensor.num_beams - 1, (bearing + math.pi) / (2 * math.pi) * sensor.num_beams))
            rng_c = math.hypot(*box.xy)
            blocked = nearest_d[k] < rng_c and np.isfinite(nearest_d[k])
            out.append(0.0 if blocked or rng_c > sensor.max_range else 1.0)
            continue
        seen = covered & (nearest == i) & (dist[i] <= sensor.max_range)
        out.append(float(seen.sum()) / float(covered.sum()))
    return out


def visibility(s: Scenario, t: int, track_id: int, sensor: SensorConfig | None = None) -> float:
    """Fraction of an object's subtended bearing bins in which it is the nearest surface."""
    obj = s.object(track_id)
    if not obj.alive(t):
        raise ValueError(f"object {track_id} is not alive at frame {t}")
    alive = [o for o in s.objects if o.alive(t)]
    vis = _visibilities(s, t, alive, sensor or SensorConfig())
    return vis[alive.index(obj)]


def sample_lidar(
    s: Scenario, t: int, sensor: SensorConfig, rng: np.random.Generator
) -> list[Point5D]:
    """One sweep of ego-frame points at frame ``t`` (dt = 0 for every point)."""
    if not 0 <= t < s.frames:
        raise IndexError(f"frame {t} outside [0, {s.frames})")
    alive = [o for o in s.objects if o.alive(t)]
    if not alive:
        return []
    boxes = _ego_frame_boxes(s, t, alive)
    angles = beam_angles(sensor.num_beams)
    dist = _ray_box_hits(boxes, angles)
    nearest = np.argmin(dist, axis=0)
    nearest_d = dist[nearest, np.arange(len(angles))]
    struck = np.flatnonzero(np.isfinite(nearest_d) & (nearest_d <= sensor.max_range))
    points: list[Point5D] = []
    for k in struck:
        box = boxes[nearest[k]]
        hx = nearest_d[k] * math.cos(angles[k])
        hy = nearest_d[k] * math.sin(angles[k])
        z_lo = box.center[2] - box.size[2] / 2.0
        for _ in range(sensor.points_per_hit):
            n = rng.normal(0.0, sensor.noise_sigma, size=2) if sensor.noise_sigma > 0 else np.zeros(2)
            norm = float(np.hypot(*n))
            cap = 3.0 * sensor.noise_sigma
            if norm > cap:
                # keep every point within the 3-sigma dilated footprint
                n *= cap / norm
            z = float(rng.uniform(z_lo, z_lo + box.size[2]))
            points.append(Point5D(hx + float(n[0]), hy + float(n[1]), z, float(rng.uniform()), 0.0))
    return points
