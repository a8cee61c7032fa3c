"""Experiment configuration: a JSON document with a fixed schema.

Unknown keys are rejected with the line they appear on, so a typo in a
hyper-parameter name cannot silently fall back to a default.

Schema (every section optional)::

    {
      "seeds": [0, 1, 2],
      "tracker": "simtrack" | "greedy" | "kalman",
      "grid":     {"range_min": [x, y], "range_max": [x, y], "cell_size": 0.8, "num_classes": 3},
      "scenario": {ScenarioConfig fields},
      "noise":    {NoiseConfig fields},
      "simtrack": {"tau": 0.1, "nms_window": 3, "read_radius": 1.5, "emit_coasting": true},
      "baseline": {"max_dist": 4 | [4, 1, 2.5] | {"car": 4, ...}, "max_age": 3, "min_hits": 1, "kf_q_pos": ...},
      "metrics":  {"gate": 2.0, "n_recalls": 40, "score_thresh": 0.1}
    }

Gates accept ``"inf"`` for an unbounded distance.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .baselines import BaselineConfig
from .geometry import GridSpec
from .oracle_head import NoiseConfig
from .pipeline import TRACKERS, MetricConfig
from .scenario import CLASS_NAMES, ScenarioConfig
from .tracker import TrackerConfig

SECTIONS = ("seeds", "tracker", "grid", "scenario", "noise", "simtrack", "baseline", "metrics")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    seeds: list[int] = field(default_factory=lambda: [0])
    tracker: str = "simtrack"
    grid: GridSpec = field(default_factory=GridSpec)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    simtrack: TrackerConfig = field(default_factory=TrackerConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    metrics: MetricConfig = field(default_factory=MetricConfig)

    def to_dict(self) -> dict:
        d = {
            "seeds": list(self.seeds),
            "tracker": self.tracker,
            "grid": self.grid.to_dict(),
            "scenario": asdict(self.scenario),
            "noise": asdict(self.noise),
            "simtrack": asdict(self.simtrack),
            "baseline": asdict(self.baseline),
            "metrics": asdict(self.metrics),
        }
        d["baseline"]["max_dist"] = [_gate_out(v) for v in self.baseline.max_dist]
        return _jsonable(d)

    def hash(self) -> str:
        """Short digest of the canonical config, seeds excluded."""
        d = self.to_dict()
        d.pop("seeds")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _gate_out(v: float) -> float | str:
    return "inf" if math.isinf(v) else v


def _gate_in(v: Any, where: str) -> float:
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    raise ConfigError(f"{where}: expected a number or \"inf\", got {v!r}")


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(text: str | None, path: str) -> str:
    line = _line_of(text, path.rsplit(".", 1)[-1])
    return f"line {line}: {path}" if line else path


def _section(raw: Any, cls, name: str, text: str | None, convert=None):
    if not isinstance(raw, dict):
        raise ConfigError(f"{_where(text, name)}: expected an object")
    known = {f.name for f in fields(cls)}
    for k in raw:
        if k not in known:
            raise ConfigError(f"{_where(text, name + '.' + k)}: unknown key {k!r} (allowed: {', '.join(sorted(known))})")
    kwargs = dict(raw)
    if convert:
        kwargs = convert(kwargs)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{_where(text, name)}: {exc}") from None


def _scenario_kwargs(d: dict) -> dict:
    if "num_objects" in d:
        d["num_objects"] = tuple(d["num_objects"])
    for k in ("class_sizes", "speed_ranges"):
        if k in d:
            d[k] = {n: tuple(v) for n, v in d[k].items()}
    return d


def _grid_kwargs(d: dict) -> dict:
    for k in ("range_min", "range_max"):
        if k in d:
            d[k] = tuple(float(v) for v in d[k])
    return d


def _baseline_kwargs(text):
    def convert(d: dict) -> dict:
        if "max_dist" in d:
            v = d["max_dist"]
            where = _where(text, "baseline.max_dist")
            if isinstance(v, dict):
                bad = [k for k in v if k not in CLASS_NAMES]
                if bad:
                    raise ConfigError(f"{where}: unknown class {bad[0]!r}")
                default = BaselineConfig().max_dist
                d["max_dist"] = tuple(
                    _gate_in(v[n], where) if n in v else default[i] for i, n in enumerate(CLASS_NAMES)
                )
            elif isinstance(v, list):
                d["max_dist"] = tuple(_gate_in(x, where) for x in v)
            else:
                d["max_dist"] = (_gate_in(v, where),) * len(CLASS_NAMES)
        return d

    return convert


def from_dict(raw: dict, text: str | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for k in raw:
        if k not in SECTIONS:
            raise ConfigError(f"{_where(text, k)}: unknown key {k!r} (allowed: {', '.join(SECTIONS)})")
    cfg = ExperimentConfig()
    if "seeds" in raw:
        seeds = raw["seeds"]
        if isinstance(seeds, int) and not isinstance(seeds, bool):
            seeds = [seeds]
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
            raise ConfigError(f"{_where(text, 'seeds')}: expected a non-empty list of integers")
        cfg.seeds = list(seeds)
    if "tracker" in raw:
        if raw["tracker"] not in TRACKERS:
            raise ConfigError(f"{_where(text, 'tracker')}: unknown tracker {raw['tracker']!r}; choose from {', '.join(TRACKERS)}")
        cfg.tracker = raw["tracker"]
    if "grid" in raw:
        cfg.grid = _section(raw["grid"], GridSpec, "grid", text, _grid_kwargs)
    if "scenario" in raw:
        cfg.scenario = _section(raw["scenario"], ScenarioConfig, "scenario", text, _scenario_kwargs)
        try:
            cfg.scenario.validate()
        except ValueError as exc:
            raise ConfigError(f"{_where(text, 'scenario')}: {exc}") from None
    if "noise" in raw:
        cfg.noise = _section(raw["noise"], NoiseConfig, "noise", text)
    if "simtrack" in raw:
        cfg.simtrack = _section(raw["simtrack"], TrackerConfig, "simtrack", text)
    if "baseline" in raw:
        cfg.baseline = _section(raw["baseline"], BaselineConfig, "baseline", text, _baseline_kwargs(text))
    if "metrics" in raw:
        cfg.metrics = _section(raw["metrics"], MetricConfig, "metrics", text)
    return cfg


def loads(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_dict(raw, text)


def load(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        return loads(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def with_override(cfg: ExperimentConfig, path: str, value: Any) -> ExperimentConfig:
    """Copy of ``cfg`` with one dotted key (e.g. ``baseline.max_age``) replaced."""
    d = copy.deepcopy(cfg.to_dict())
    parts = path.split(".")
    node = d
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config path {path!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config path {path!r}")
    node[parts[-1]] = value
    return from_dict(d)
