"""Command-line front end: ``gen``, ``track``, ``eval`` and ``sweep``.

Exit codes: 0 on success, 1 for usage or configuration errors, 2 for runtime
failures (unreadable inputs, frame mismatches, ...).
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import config as cfgmod
from .config import ConfigError, ExperimentConfig
from .geometry import GridSpec
from .metrics import recall_curves
from .pipeline import TRACKERS, eval_frames, evaluate_tracks, head_outputs, run_tracker
from .records import (
    read_ground_truth,
    read_tracks,
    write_csv,
    write_ground_truth,
    write_json,
    write_tracks,
)
from .oracle_head import save_head
from .scenario import CLASS_NAMES, Scenario, generate, ground_truth_sequence

log = logging.getLogger("simtrack")

METRIC_COLUMNS = ["amota", "amotp", "mota", "motp", "ids", "frags", "fp", "fn", "tp", "gt_count", "mave"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_config(path: str | None) -> ExperimentConfig:
    return cfgmod.load(path) if path else ExperimentConfig()


def _meta(cfg: ExperimentConfig, seed: int, **extra) -> dict:
    return dict({"config_hash": cfg.hash(), "seed": int(seed)}, **extra)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------


def cmd_gen(config_path: str | None, out_dir: str, seed: int | None = None) -> list[Path]:
    cfg = _load_config(config_path)
    out = _out_dir(out_dir)
    seeds = [seed] if seed is not None else cfg.seeds
    written = []
    for s in seeds:
        scen = generate(cfg.scenario, s)
        doc = json.loads(scen.to_json())
        doc["_meta"] = _meta(cfg, s)
        spath = out / f"scenario_{s:04d}.json"
        spath.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        gpath = out / f"gt_{s:04d}.jsonl"
        write_ground_truth(gpath, ground_truth_sequence(scen), _meta(cfg, s, dt=scen.dt, grid=cfg.grid.to_dict()))
        written += [spath, gpath]
        log.info("seed %d: %d objects -> %s", s, len(scen.objects), spath)
    return written


def cmd_track(
    scenario_path: str,
    tracker_name: str | None,
    config_path: str | None,
    out_dir: str,
    seed: int | None = None,
    save_heads: bool = False,
) -> Path:
    cfg = _load_config(config_path)
    name = tracker_name or cfg.tracker
    if name not in TRACKERS:
        raise UsageError(f"unknown tracker {name!r}; choose from {', '.join(TRACKERS)}")
    scen = Scenario.from_json(Path(scenario_path).read_text(encoding="utf-8"))
    seed = scen.seed if seed is None else seed
    gts = ground_truth_sequence(scen)
    outs = head_outputs(scen, cfg.grid, cfg.noise, seed, gts)
    tracks = run_tracker(name, outs, scen, cfg.simtrack, cfg.baseline)
    out = _out_dir(out_dir)
    if save_heads:
        hdir = _out_dir(str(out / f"heads_{seed:04d}"))
        for t, o in enumerate(outs):
            save_head(o, hdir / f"frame_{t:04d}.bin")
    path = out / f"tracks_{name}_{seed:04d}.jsonl"
    write_tracks(path, tracks, _meta(cfg, seed, tracker=name, dt=scen.dt, grid=cfg.grid.to_dict()))
    log.info("%s: %d track reports over %d frames -> %s", name, sum(map(len, tracks)), len(tracks), path)
    return path


def _rows_as_dicts(rows) -> list[dict]:
    out = []
    for r in rows:
        d = {"class": r.name}
        d.update({k: getattr(r, k) for k in METRIC_COLUMNS})
        out.append(d)
    return out


def cmd_eval(tracks_path: str, gt_path: str, out_dir: str, config_path: str | None = None) -> list[Path]:
    cfg = _load_config(config_path)
    tmeta, tracks = read_tracks(tracks_path)
    gmeta, gts = read_ground_truth(gt_path)
    if len(tracks) != len(gts):
        raise RuntimeError(f"frame mismatch: {len(tracks)} track frames vs {len(gts)} ground-truth frames")
    grid = GridSpec.from_dict(tmeta["grid"]) if "grid" in tmeta else cfg.grid
    dt = float(tmeta.get("dt", gmeta.get("dt", 0.5)))
    rows = _rows_as_dicts(evaluate_tracks(tracks, gts, grid, dt, cfg.metrics))
    meta = {
        "config_hash": tmeta.get("config_hash", cfg.hash()),
        "seed": tmeta.get("seed", gmeta.get("seed")),
        "tracker": tmeta.get("tracker", "unknown"),
        "gate": cfg.metrics.gate,
    }
    out = _out_dir(out_dir)
    mpath, jpath, cpath = out / "metrics.csv", out / "metrics.json", out / "curves.csv"
    write_csv(mpath, rows, meta, ["class"] + METRIC_COLUMNS)
    preds, gt = eval_frames(tracks, gts, grid, dt)
    curve_rows = []
    for c, name in enumerate(CLASS_NAMES[: grid.num_classes]):
        p = [[o for o in f if o.class_id == c] for f in preds]
        g = [[o for o in f if o.class_id == c] for f in gt]
        if not any(g):
            continue
        for pt in recall_curves(p, g, cfg.metrics.gate, cfg.metrics.n_recalls):
            curve_rows.append({"class": name, "threshold": pt.threshold, "recall": pt.recall, "mota": pt.mota, "ids": pt.ids})
    write_csv(cpath, curve_rows, meta, ["class", "threshold", "recall", "mota", "ids"])
    write_json(jpath, {"_meta": meta, "rows": rows})
    overall = rows[-1]
    log.info("AMOTA %.4f MOTA %.4f IDS %d FRAGS %d", overall["amota"], overall["mota"], overall["ids"], overall["frags"])
    return [mpath, jpath, cpath]


# ---------------------------------------------------------------------------
# sweep


def parse_grid(spec: str) -> dict[str, list]:
    """A JSON object mapping dotted config paths to value lists, inline or in a file."""
    text = spec
    p = Path(spec)
    if not spec.lstrip().startswith("{") and p.exists():
        text = p.read_text(encoding="utf-8")
    try:
        grid = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parameter grid, line {exc.lineno}: {exc.msg}") from None
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("parameter grid must be a non-empty JSON object of path -> list")
    for k, v in grid.items():
        if not isinstance(v, list) or not v:
            raise ConfigError(f"parameter grid axis {k!r} must be a non-empty list")
    return grid


def _cell_configs(base: ExperimentConfig, grid: dict[str, list]) -> list[tuple[dict, ExperimentConfig]]:
    axes = list(grid)
    cells = []
    for values in itertools.product(*(grid[a] for a in axes)):
        cfg = base
        for a, v in zip(axes, values):
            cfg = cfgmod.with_override(cfg, a, v)
        cells.append((dict(zip(axes, values)), cfg))
    return cells


def _sweep_seed(args: tuple[int, list[ExperimentConfig]]) -> list[dict]:
    seed, cfgs = args
    cache: dict[str, tuple] = {}
    rows = []
    for k, cfg in enumerate(cfgs):
        key = json.dumps([cfg.to_dict()[s] for s in ("scenario", "noise", "grid")], sort_keys=True)
        if key not in cache:
            scen = generate(cfg.scenario, seed)
            gts = ground_truth_sequence(scen)
            cache[key] = (scen, gts, head_outputs(scen, cfg.grid, cfg.noise, seed, gts))
        scen, gts, outs = cache[key]
        tracks = run_tracker(cfg.tracker, outs, scen, cfg.simtrack, cfg.baseline)
        overall = evaluate_tracks(tracks, gts, cfg.grid, scen.dt, cfg.metrics)[-1]
        rows.append({"cell": k, "seed": seed, **{c: getattr(overall, c) for c in METRIC_COLUMNS}})
    return rows


def cmd_sweep(config_path: str | None, param_grid: str, out_dir: str, jobs: int = 1, seed: int | None = None) -> Path:
    base = _load_config(config_path)
    grid = parse_grid(param_grid)
    cells = _cell_configs(base, grid)
    seeds = [seed] if seed is not None else base.seeds
    work = [(s, [c for _, c in cells]) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            per_seed = list(ex.map(_sweep_seed, work))
    else:
        per_seed = [_sweep_seed(w) for w in work]
    axes = list(grid)
    rows = []
    for k, (values, _) in enumerate(cells):
        cell_rows = sorted((r for rs in per_seed for r in rs if r["cell"] == k), key=lambda r: r["seed"])
        for r in cell_rows:
            rows.append({**{a: _show(values[a]) for a in axes}, **r})
        mean = {"cell": k, "seed": "mean"}
        for c in METRIC_COLUMNS:
            vals = [r[c] for r in cell_rows if r[c] is not None and not (isinstance(r[c], float) and math.isnan(r[c]))]
            mean[c] = float(np.mean(vals)) if vals else None
        rows.append({**{a: _show(values[a]) for a in axes}, **mean})
    out = _out_dir(out_dir)
    path = out / "sweep.csv"
    write_csv(path, rows, {"config_hash": base.hash(), "seeds": ",".join(map(str, seeds))}, axes + ["cell", "seed"] + METRIC_COLUMNS)
    log.info("%d cells x %d seeds -> %s", len(cells), len(seeds), path)
    return path


def _show(v: Any) -> str:
    return json.dumps(v) if isinstance(v, (list, dict)) else str(v)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="simtrack", description="Synthetic joint detection-and-tracking experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate scenarios and ground truth")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)

    t = sub.add_parser("track", help="run a tracker on a scenario")
    t.add_argument("scenario")
    t.add_argument("--tracker", help=f"one of {', '.join(TRACKERS)}")
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, help="noise seed (default: the scenario's seed)")
    t.add_argument("--save-heads", action="store_true", help="also write the head outputs as tensor files")

    e = sub.add_parser("eval", help="score a tracks file against ground truth")
    e.add_argument("tracks")
    e.add_argument("gt")
    e.add_argument("--config")
    e.add_argument("--out", required=True)

    s = sub.add_parser("sweep", help="cross-product hyper-parameter sweep")
    s.add_argument("--config")
    s.add_argument("--grid", required=True, help="JSON object (inline or file) of dotted path -> values")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "gen":
            cmd_gen(args.config, args.out, args.seed)
        elif args.command == "track":
            cmd_track(args.scenario, args.tracker, args.config, args.out, args.seed, args.save_heads)
        elif args.command == "eval":
            cmd_eval(args.tracks, args.gt, args.out, args.config)
        elif args.command == "sweep":
            if args.jobs < 1:
                raise UsageError("--jobs must be at least 1")
            cmd_sweep(args.config, args.grid, args.out, args.jobs, args.seed)
    except (ConfigError, UsageError) as exc:
        print(f"simtrack: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"simtrack: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
