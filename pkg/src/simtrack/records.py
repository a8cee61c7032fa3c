"""On-disk formats: JSON-lines tracks and ground truth, metric CSV/JSON.

Every JSON-lines file starts with a ``{"_meta": {...}}`` line carrying the config
hash, seed and frame count (frames without records would otherwise vanish).
CSV files start with a ``#`` comment line holding the same provenance.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

from .geometry import Box3D
from .scenario import CLASS_NAMES, FrameGroundTruth, GtObject
from .tracker import FrameTracks, TrackOutput


def _num(x: float) -> float | None:
    return None if x is None or not math.isfinite(x) else float(x)


def track_record(t: TrackOutput) -> dict:
    b = t.box
    return {
        "frame": t.frame,
        "track_id": t.track_id,
        "class": CLASS_NAMES[t.class_id],
        "center": list(b.center),
        "size": list(b.size),
        "yaw": b.yaw,
        "score": t.score,
        "motion": list(t.motion),
        "coasting": t.coasting,
    }


def gt_record(frame: int, g: GtObject) -> dict:
    b = g.box
    return {
        "frame": frame,
        "track_id": g.track_id,
        "class": CLASS_NAMES[b.class_id],
        "center": list(b.center),
        "size": list(b.size),
        "yaw": b.yaw,
        "velocity": list(g.velocity),
        "visibility": g.visibility,
    }


def write_jsonl(path: str | Path, meta: dict, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> tuple[dict, list[dict]]:
    meta: dict = {}
    records = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{n}: {exc.msg}") from None
            if "_meta" in doc:
                meta = doc["_meta"]
            else:
                records.append(doc)
    return meta, records


def _frames(meta: dict, records: list[dict]) -> int:
    if "frames" in meta:
        return int(meta["frames"])
    return 1 + max((int(r["frame"]) for r in records), default=-1)


def _box(r: dict) -> Box3D:
    return Box3D(tuple(r["center"]), tuple(r["size"]), float(r["yaw"]), CLASS_NAMES.index(r["class"]))


def write_tracks(path: str | Path, tracks: Sequence[FrameTracks], meta: dict) -> None:
    meta = dict(meta, frames=len(tracks))
    write_jsonl(path, meta, (track_record(t) for frame in tracks for t in frame))


def read_tracks(path: str | Path) -> tuple[dict, list[FrameTracks]]:
    meta, records = read_jsonl(path)
    frames: list[FrameTracks] = [[] for _ in range(_frames(meta, records))]
    for r in records:
        t = TrackOutput(
            int(r["frame"]),
            int(r["track_id"]),
            CLASS_NAMES.index(r["class"]),
            _box(r),
            float(r["score"]),
            tuple(r["motion"]),
            bool(r.get("coasting", False)),
        )
        frames[t.frame].append(t)
    return meta, frames


def write_ground_truth(path: str | Path, gts: Sequence[FrameGroundTruth], meta: dict) -> None:
    meta = dict(meta, frames=len(gts))
    write_jsonl(path, meta, (gt_record(g.frame, o) for g in gts for o in g.boxes))


def read_ground_truth(path: str | Path) -> tuple[dict, list[FrameGroundTruth]]:
    meta, records = read_jsonl(path)
    frames: list[list[GtObject]] = [[] for _ in range(_frames(meta, records))]
    for r in records:
        box = _box(r)
        vel = tuple(r["velocity"])
        frames[int(r["frame"])].append(GtObject(int(r["track_id"]), Box3D(box.center, box.size, box.yaw, box.class_id, vel), vel, float(r["visibility"])))
    return meta, [FrameGroundTruth(t, tuple(objs)) for t, objs in enumerate(frames)]


def provenance_line(meta: dict) -> str:
    return "# " + " ".join(f"{k}={meta[k]}" for k in sorted(meta))


def csv_text(rows: Sequence[dict], meta: dict, columns: Sequence[str] | None = None) -> str:
    """CSV with a leading provenance comment; floats printed with repr for exact round trips."""
    buf = io.StringIO()
    buf.write(provenance_line(meta) + "\n")
    cols = list(columns) if columns is not None else (list(rows[0]) if rows else [])
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(r.get(k)) for k in cols})
    return buf.getvalue()


def _cell(v: Any) -> Any:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path: str | Path, rows: Sequence[dict], meta: dict, columns: Sequence[str] | None = None) -> None:
    Path(path).write_text(csv_text(rows, meta, columns), encoding="utf-8")


def read_csv(path: str | Path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(_clean(doc), sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _clean(x: Any) -> Any:
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, float):
        return _num(x)
    return x
