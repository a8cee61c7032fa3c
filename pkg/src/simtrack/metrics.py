"""CLEAR-MOT accumulation, recall-averaged MOTA (AMOTA/AMOTP), mAVE and IDS-recall tables.

All matching is done per frame in that frame's ego coordinates, by BEV centre
distance under a metric gate, and only between objects of the same class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .assignment import GATED, hungarian
from .geometry import GridSpec

DEFAULT_GATE = 2.0
DEFAULT_RECALLS = 40
LINEAR_SCAN_LIMIT = 64


@dataclass(frozen=True)
class Obs:
    """A box reduced to what evaluation needs."""

    track_id: int
    class_id: int
    xy: tuple[float, float]
    score: float = 1.0
    velocity: tuple[float, float] | None = None


Frame = Sequence[Obs]


def tracks_to_obs(tracks: Iterable, frame_dt: float) -> list[Obs]:
    """TrackOutput-like records to Obs; velocity is the reported motion over the frame interval."""
    out = []
    for t in tracks:
        vel = (t.motion[0] / frame_dt, t.motion[1] / frame_dt)
        out.append(Obs(t.track_id, t.class_id, t.box.xy, float(t.score), vel))
    return out


def gt_to_obs(gt) -> list[Obs]:
    """FrameGroundTruth to Obs."""
    return [Obs(o.track_id, o.box.class_id, o.box.xy, 1.0, tuple(o.velocity)) for o in gt.boxes]


def in_range(frame: Frame, grid: GridSpec) -> list[Obs]:
    return [o for o in frame if grid.contains(o.xy)]


def _dist(a: Obs, b: Obs) -> float:
    return math.hypot(a.xy[0] - b.xy[0], a.xy[1] - b.xy[1])


def match_frame(
    preds: Frame, gts: Frame, gate: float = DEFAULT_GATE, prev: dict[int, int] | None = None
) -> list[tuple[int, int, float]]:
    """One-to-one (gt index, pred index, distance) pairs for a single frame.

    Pairings from ``prev`` (gt id -> track id) that are still within the gate are
    kept first; the rest are solved optimally on centre distance.
    """
    if not gate > 0:
        raise ValueError("gate must be positive")
    prev = prev or {}
    pairs = []
    used_g, used_p = set(), set()
    by_id = {}
    for j, p in enumerate(preds):
        by_id.setdefault(p.track_id, j)
    for i, g in enumerate(gts):
        tid = prev.get(g.track_id)
        j = by_id.get(tid) if tid is not None else None
        if j is None or j in used_p or preds[j].class_id != g.class_id:
            continue
        d = _dist(g, preds[j])
        if d <= gate:
            pairs.append((i, j, d))
            used_g.add(i)
            used_p.add(j)
    gi = [i for i in range(len(gts)) if i not in used_g]
    pj = [j for j in range(len(preds)) if j not in used_p]
    if gi and pj:
        cost = np.full((len(gi), len(pj)), GATED)
        for a, i in enumerate(gi):
            for b, j in enumerate(pj):
                if gts[i].class_id != preds[j].class_id:
                    continue
                d = _dist(gts[i], preds[j])
                if d <= gate:
                    cost[a, b] = d
        for a, b in hungarian(cost):
            if cost[a, b] < GATED:
                pairs.append((gi[a], pj[b], float(cost[a, b])))
    return sorted(pairs)


@dataclass
class MotStats:
    mota: float
    motp: float
    fp: int
    fn: int
    ids: int
    frags: int
    gt_count: int
    tp: int
    matches: list[list[tuple[int, int, float]]] = field(default_factory=list, repr=False)

    @property
    def recall(self) -> float:
        return self.tp / self.gt_count if self.gt_count else float("nan")


def _mota(fp: int, fn: int, ids: int, gt_count: int) -> float:
    return 1.0 - (fp + fn + ids) / gt_count if gt_count else float("nan")


def clear_mot(pred_seq: Sequence[Frame], gt_seq: Sequence[Frame], gate: float = DEFAULT_GATE) -> MotStats:
    """CLEAR-MOT counts over a sequence. ``matches`` holds (gt id, track id, distance) per frame."""
    if len(pred_seq) != len(gt_seq):
        raise ValueError(f"frame count mismatch: {len(pred_seq)} predicted vs {len(gt_seq)} ground truth")
    last: dict[int, int] = {}  # gt id -> last matched track id, kept across gaps
    lost: set[int] = set()  # gt ids tracked once and currently uncovered
    fp = fn = ids = frags = tp = gt_count = 0
    dists: list[float] = []
    matches = []
    for preds, gts in zip(pred_seq, gt_seq):
        pairs = match_frame(preds, gts, gate, last)
        matched_g = {i for i, _, _ in pairs}
        frame_matches = []
        for i, j, d in pairs:
            gid, tid = gts[i].track_id, preds[j].track_id
            if gid in last and last[gid] != tid:
                ids += 1
            if gid in lost:
                frags += 1
                lost.discard(gid)
            last[gid] = tid
            dists.append(d)
            frame_matches.append((gid, tid, d))
        for i, g in enumerate(gts):
            if i not in matched_g and g.track_id in last:
                lost.add(g.track_id)
        tp += len(pairs)
        fp += len(preds) - len(pairs)
        fn += len(gts) - len(pairs)
        gt_count += len(gts)
        matches.append(frame_matches)
    motp = math.fsum(dists) / len(dists) if dists else float("nan")
    return MotStats(_mota(fp, fn, ids, gt_count), motp, fp, fn, ids, frags, gt_count, tp, matches)


def above(pred_seq: Sequence[Frame], threshold: float) -> list[list[Obs]]:
    return [[p for p in frame if p.score >= threshold] for frame in pred_seq]


@dataclass
class AmotaReport:
    amota: float
    amotp: float
    recalls: list[float]
    motar: list[float]
    thresholds: list[float | None]


class _Sweep:
    """clear_mot evaluated at score thresholds, cached."""

    def __init__(self, pred_seq, gt_seq, gate):
        self.pred_seq, self.gt_seq, self.gate = pred_seq, gt_seq, gate
        self.cache: dict[float, MotStats] = {}

    def __call__(self, th: float) -> MotStats:
        if th not in self.cache:
            self.cache[th] = clear_mot(above(self.pred_seq, th), self.gt_seq, self.gate)
        return self.cache[th]


def _pick(sweep: _Sweep, scores: list[float], target: int) -> float | None:
    """Highest threshold (among ``scores``, descending) whose TP count reaches ``target``."""
    if len(scores) <= LINEAR_SCAN_LIMIT:
        for th in scores:
            if sweep(th).tp >= target:
                return th
        return None
    # TP count grows as the threshold falls; binary search the first qualifying index
    lo, hi = 0, len(scores) - 1
    if sweep(scores[hi]).tp < target:
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if sweep(scores[mid]).tp >= target:
            hi = mid
        else:
            lo = mid + 1
    return scores[lo]


def amota(
    pred_seq: Sequence[Frame], gt_seq: Sequence[Frame], gate: float = DEFAULT_GATE, n_recalls: int = DEFAULT_RECALLS
) -> AmotaReport:
    """Mean MOTAR over the recall grid 1/n, 2/n, ..., 1.

    At each target recall the highest score threshold reaching it is used and
    MOTAR = max(0, 1 - (IDS + FP + FN - (1 - R) P) / (R P)) with R the recall
    actually achieved there, which reduces to 1 - (IDS + FP) / TP. Unreachable
    recalls score 0 and count the gate as their MOTP.
    """
    if n_recalls < 1:
        raise ValueError("n_recalls must be at least 1")
    recalls = [k / n_recalls for k in range(1, n_recalls + 1)]
    p_total = sum(len(g) for g in gt_seq)
    if p_total == 0:
        return AmotaReport(float("nan"), float("nan"), recalls, [float("nan")] * n_recalls, [None] * n_recalls)
    scores = sorted({p.score for frame in pred_seq for p in frame}, reverse=True)
    sweep = _Sweep(pred_seq, gt_seq, gate)
    motar, motp, thresholds = [], [], []
    for r in recalls:
        target = math.ceil(r * p_total - 1e-9)
        th = _pick(sweep, scores, target) if scores else None
        thresholds.append(th)
        if th is None:
            motar.append(0.0)
            motp.append(gate)
            continue
        st = sweep(th)
        achieved = st.tp / p_total
        nominator = st.ids + st.fp + st.fn - (1.0 - achieved) * p_total
        motar.append(max(0.0, 1.0 - nominator / (achieved * p_total)))
        motp.append(st.motp)
    return AmotaReport(float(np.mean(motar)), float(np.mean(motp)), recalls, motar, thresholds)


def mave(
    pred_seq: Sequence[Frame], gt_seq: Sequence[Frame], gate: float = DEFAULT_GATE, score_thresh: float = 0.1
) -> float | None:
    """Class-mean of the mean L2 velocity error over true positives; None without any."""
    preds = above(pred_seq, score_thresh)
    st = clear_mot(preds, gt_seq, gate)
    per_class: dict[int, list[float]] = {}
    for frame_p, frame_g, frame_m in zip(preds, gt_seq, st.matches):
        gid_to = {g.track_id: g for g in frame_g}
        tid_to = {p.track_id: p for p in frame_p}
        for gid, tid, _ in frame_m:
            g, p = gid_to[gid], tid_to[tid]
            if g.velocity is None or p.velocity is None:
                continue
            err = math.hypot(p.velocity[0] - g.velocity[0], p.velocity[1] - g.velocity[1])
            per_class.setdefault(g.class_id, []).append(err)
    if not per_class:
        return None
    return float(np.mean([math.fsum(v) / len(v) for _, v in sorted(per_class.items())]))


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    recall: float
    mota: float
    ids: int


def recall_curves(
    pred_seq: Sequence[Frame], gt_seq: Sequence[Frame], gate: float = DEFAULT_GATE, n: int = DEFAULT_RECALLS
) -> list[CurvePoint]:
    """(recall, MOTA, IDS) at up to ``n`` score thresholds, ascending threshold.

    Thresholds are the distinct prediction scores when there are at most ``n`` of
    them, otherwise ``n`` evenly spaced quantiles of those scores.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    scores = sorted({p.score for frame in pred_seq for p in frame})
    if not scores:
        return []
    if len(scores) > n:
        idx = np.unique(np.round(np.linspace(0, len(scores) - 1, n)).astype(int))
        scores = [scores[i] for i in idx]
    sweep = _Sweep(pred_seq, gt_seq, gate)
    out = []
    for th in scores:
        st = sweep(th)
        out.append(CurvePoint(th, st.recall, st.mota, st.ids))
    return out


# ---------------------------------------------------------------------------
# per-class report


@dataclass
class MetricsRow:
    name: str
    amota: float
    amotp: float
    mota: float
    motp: float
    ids: int
    frags: int
    fp: int
    fn: int
    tp: int
    gt_count: int
    mave: float | None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _only(seq: Sequence[Frame], class_id: int) -> list[list[Obs]]:
    return [[o for o in frame if o.class_id == class_id] for frame in seq]


def evaluate(
    pred_seq: Sequence[Frame],
    gt_seq: Sequence[Frame],
    class_names: Sequence[str],
    gate: float = DEFAULT_GATE,
    n_recalls: int = DEFAULT_RECALLS,
    score_thresh: float = 0.1,
) -> list[MetricsRow]:
    """One row per class with ground truth, plus an ``overall`` row.

    Overall AMOTA/AMOTP/mAVE are class means; the CLEAR-MOT counts are summed and
    MOTA/MOTP recomputed from the sums.
    """
    rows = []
    for c, name in enumerate(class_names):
        gts = _only(gt_seq, c)
        if not any(gts):
            continue
        preds = _only(pred_seq, c)
        st = clear_mot(above(preds, score_thresh), gts, gate)
        am = amota(preds, gts, gate, n_recalls)
        rows.append(
            MetricsRow(name, am.amota, am.amotp, st.mota, st.motp, st.ids, st.frags, st.fp, st.fn, st.tp, st.gt_count,
                       mave(preds, gts, gate, score_thresh))
        )
    fp = sum(r.fp for r in rows)
    fn = sum(r.fn for r in rows)
    ids = sum(r.ids for r in rows)
    tp = sum(r.tp for r in rows)
    gt_count = sum(r.gt_count for r in rows)
    # predictions of classes without any ground truth are all false positives
    stray = sum(len(f) for c in range(len(class_names)) if not any(_only(gt_seq, c)) for f in above(_only(pred_seq, c), score_thresh))
    fp += stray
    tp_motp = [(r.motp, r.tp) for r in rows if r.tp]
    motp = math.fsum(m * t for m, t in tp_motp) / tp if tp else float("nan")
    maves = [r.mave for r in rows if r.mave is not None]
    rows.append(
        MetricsRow(
            "overall",
            float(np.mean([r.amota for r in rows])) if rows else float("nan"),
            float(np.mean([r.amotp for r in rows])) if rows else float("nan"),
            _mota(fp, fn, ids, gt_count),
            motp,
            ids,
            sum(r.frags for r in rows),
            fp,
            fn,
            tp,
            gt_count,
            float(np.mean(maves)) if maves else None,
        )
    )
    return rows
