import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import blank_head, head_with_peaks

from simtrack.baselines import (
    BaselineConfig,
    BaselineState,
    Detection,
    KfState,
    Track,
    detections_from_head,
    greedy_step,
    kf_init,
    kf_predict,
    kf_step,
    kf_update,
    run_greedy,
)
from simtrack.geometry import Box3D, GridSpec, Pose2D, cell_center
from simtrack.metrics import clear_mot
from simtrack.oracle_head import NoiseConfig
from simtrack.pipeline import eval_frames, head_outputs, run_tracker
from simtrack.scenario import ScenarioConfig, generate, ground_truth_sequence

GRID = GridSpec()


def det(x, y, cls=0, vel=(0.0, 0.0), score=0.9):
    return Detection(Box3D((x, y, 0.8), (1.9, 4.5, 1.6), 0.0, cls, vel), score, cls, vel)


def one_track(x=0.0, y=0.0, cls=0, vel=(0.0, 0.0), kf=None):
    t = Track(0, cls, Box3D((x, y, 0.8), (1.9, 4.5, 1.6), 0.0, cls), 0.9, vel, 0, 1, True, kf)
    return BaselineState([t], 1, 0)


# -- detections ------------------------------------------------------------------


def test_detection_velocity_from_motion():
    out = head_with_peaks(GRID, [(0, (64, 64), 0.9, (2.0, 0.0))])
    (d,) = detections_from_head(out, GRID, 0.1, 0.5)
    assert d.velocity == (4.0, 0.0)
    assert d.xy == pytest.approx((cell_center(GRID, (64, 64))[0] + 2.0, cell_center(GRID, (64, 64))[1]))
    assert detections_from_head(blank_head(GRID), GRID, 0.1, 0.5) == []


def test_detection_score_validated():
    with pytest.raises(ValueError):
        det(0, 0, score=1.2)


# -- greedy ----------------------------------------------------------------------


def test_greedy_matches_inside_gate():
    # back-propagated centre is (0.5, 0)
    state, tracks = greedy_step(one_track(), [det(2.5, 0.0, vel=(4.0, 0.0))], BaselineConfig())
    assert [t.track_id for t in tracks] == [0]


def test_greedy_outside_gate_spawns_new_id():
    cfg = BaselineConfig(max_dist=(0.1, 0.1, 0.1))
    state, tracks = greedy_step(one_track(), [det(2.5, 0.0, vel=(4.0, 0.0))], cfg)
    assert [t.track_id for t in tracks] == [1]
    coasting = [t for t in state.tracks if t.track_id == 0]
    assert coasting and coasting[0].age == 1


def test_greedy_never_crosses_classes():
    state, tracks = greedy_step(one_track(cls=0), [det(0.0, 0.0, cls=1)])
    assert [t.track_id for t in tracks] == [1]


def test_max_age_zero_loses_identity_after_one_miss():
    cfg = BaselineConfig(max_age=0)
    s, _ = greedy_step(one_track(), [], cfg)
    assert s.tracks == []
    _, tracks = greedy_step(s, [det(0.0, 0.0)], cfg)
    assert [t.track_id for t in tracks] == [1]
    keep = BaselineConfig(max_age=1)
    s, _ = greedy_step(one_track(), [], keep)
    _, tracks = greedy_step(s, [det(0.0, 0.0)], keep)
    assert [t.track_id for t in tracks] == [0]


def test_coasting_moves_at_constant_velocity():
    s, out = greedy_step(one_track(vel=(2.0, 0.0)), [], BaselineConfig(), frame_dt=0.5)
    assert out == [] and s.tracks[0].xy == pytest.approx((1.0, 0.0))


def test_min_hits_delays_reporting():
    cfg = BaselineConfig(min_hits=3)
    s = BaselineState()
    reported = []
    for _ in range(4):
        s, out = greedy_step(s, [det(5.0, 5.0)], cfg)
        reported.append([t.track_id for t in out])
    assert reported == [[], [], [0], [0]]


def test_ego_rel_applied_before_matching():
    # ego drives 3 m forward; parked object appears 3 m closer
    s, out = greedy_step(one_track(10.0, 0.0), [det(7.0, 0.0)], ego_rel=Pose2D(-3.0, 0.0, 0.0))
    assert [t.track_id for t in out] == [0]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_greedy_gate_and_class_invariant(seed):
    rng = np.random.default_rng(seed)
    cfg = BaselineConfig()
    tracks = [
        Track(i, int(rng.integers(0, 3)), Box3D((*rng.uniform(-10, 10, 2), 0.5), (1, 1, 1), 0, 0), 0.5, (0.0, 0.0))
        for i in range(int(rng.integers(0, 6)))
    ]
    dets = [det(*rng.uniform(-10, 10, 2), cls=int(rng.integers(0, 3))) for _ in range(int(rng.integers(0, 6)))]
    state = BaselineState(tracks, len(tracks), 0)
    new, _ = greedy_step(state, dets, cfg)
    before = {t.track_id: t for t in tracks}
    for t in new.tracks:
        if t.track_id in before and t.age == 0:
            old = before[t.track_id]
            assert old.class_id == t.class_id
            assert math.dist(old.xy, t.xy) <= cfg.gate(t.class_id)


# -- Kalman ----------------------------------------------------------------------


def test_predict_zero_noise_zero_velocity():
    s = KfState([1.0, 2.0, 0.0, 0.0], np.diag([0.5, 0.5, 2.0, 2.0]))
    p = kf_predict(s, 0.5, 0.0, 0.0)
    assert p.xy == (1.0, 2.0)
    assert p.covariance[0, 0] == pytest.approx(0.5 + 2.0 * 0.25)
    assert p.covariance[0, 2] == pytest.approx(2.0 * 0.5)


def test_update_exact_measurement_limit():
    s = KfState([0.0, 0.0, 1.0, 1.0], np.diag([4.0, 4.0, 1.0, 1.0]))
    u = kf_update(s, (3.0, -2.0), r=1e-12)
    assert u.xy == pytest.approx((3.0, -2.0), abs=1e-9)


def test_kf_converges_on_constant_velocity_truth():
    rng = np.random.default_rng(0)
    cfg = BaselineConfig()
    vel = np.array([4.0, -1.0])
    pos = np.array([0.0, 0.0])
    s = kf_init(pos + rng.normal(0, 0.5, 2), cfg=cfg)
    errs = []
    for _ in range(20):
        pos = pos + vel * 0.5
        s = kf_predict(s, 0.5, cfg.kf_q_pos, cfg.kf_q_vel)
        s = kf_update(s, pos + rng.normal(0, 0.02, 2), cfg.kf_r)
        errs.append(math.dist(s.xy, pos))
    assert errs[-1] < 0.05
    assert np.allclose(s.velocity, vel, atol=0.3)


def test_non_psd_rejected():
    bad = KfState([0, 0, 0, 0], np.diag([1.0, -1.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        kf_predict(bad, 0.5)
    with pytest.raises(ValueError):
        kf_update(KfState([0, 0, 0, 0], np.array([[1, 2, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])), (0, 0))
    with pytest.raises(ValueError):
        kf_predict(KfState([0, 0, 0, 0], np.eye(4)), 0.0)


def test_covariance_stays_psd_over_1000_cycles():
    rng = np.random.default_rng(1)
    s = kf_init((0.0, 0.0))
    for _ in range(1000):
        s = kf_predict(s, float(rng.uniform(0.05, 1.0)), float(rng.uniform(0, 1)), float(rng.uniform(0, 2)))
        s = kf_update(s, rng.normal(0, 10, 2), float(rng.uniform(1e-4, 2.0)))
        p = s.covariance
        assert np.array_equal(p, p.T)
        assert np.linalg.eigvalsh(p).min() >= -1e-9


def test_kf_step_single_match():
    s = one_track(kf=kf_init((0.0, 0.0)))
    _, out = kf_step(s, [det(0.3, 0.0)])
    assert [t.track_id for t in out] == [0]


def test_kf_step_gate_excludes_everything():
    s = one_track(kf=kf_init((0.0, 0.0)))
    new, out = kf_step(s, [det(30.0, 0.0)])
    assert [t.track_id for t in out] == [1]
    assert {t.track_id: t.age for t in new.tracks} == {0: 1, 1: 0}


def test_kf_step_three_by_three_matches_permutations():
    rng = np.random.default_rng(3)
    starts = rng.uniform(-2, 2, size=(3, 2)) + np.array([[0, 0], [6, 0], [0, 6]])
    state = BaselineState(
        [Track(i, 0, Box3D((*starts[i], 0.5), (1, 1, 1), 0, 0), 0.9, (0.0, 0.0), 0, 1, True, kf_init(starts[i])) for i in range(3)],
        3,
        0,
    )
    dets = [det(*(starts[k] + rng.normal(0, 0.5, 2))) for k in (2, 0, 1)]
    cfg = BaselineConfig(max_dist=(50.0, 50.0, 50.0))
    new, _ = kf_step(state, dets, cfg)
    pred = [kf_predict(t.kf, 0.5, cfg.kf_q_pos, cfg.kf_q_vel).xy for t in state.tracks]
    cost = np.array([[math.dist(p, d.xy) for d in dets] for p in pred])
    best = min(itertools.permutations(range(3)), key=lambda p: sum(cost[i, p[i]] for i in range(3)))
    got = {}
    for t in new.tracks:
        j = min(range(3), key=lambda j: math.dist(t.box.xy, dets[j].xy))
        got[t.track_id] = j
    assert tuple(got[i] for i in range(3)) == best


# -- end to end ------------------------------------------------------------------

SANE = BaselineConfig(max_dist=(7.0, 2.5, 4.0))


@pytest.mark.parametrize("name", ["greedy", "kalman"])
@pytest.mark.parametrize("seed", range(3))
def test_sane_gates_no_identity_switches(name, seed):
    s = generate(ScenarioConfig(frames=20), seed)
    gts = ground_truth_sequence(s)
    outs = head_outputs(s, GRID, NoiseConfig(), seed, gts)
    tracks = run_tracker(name, outs, s, baseline_cfg=SANE)
    preds, gt = eval_frames(tracks, gts, GRID, s.dt)
    assert clear_mot(preds, gt).ids == 0


def test_runs_are_deterministic():
    s = generate(ScenarioConfig(frames=10), 5)
    outs = head_outputs(s, GRID, NoiseConfig(fp_rate=1.0, center_sigma=0.3), 5)
    assert run_greedy(outs, s.ego) == run_greedy(outs, s.ego)


def test_invalid_config():
    with pytest.raises(ValueError):
        BaselineConfig(max_dist=(0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        BaselineConfig(max_age=-1)
    assert BaselineConfig().gate(7) == 2.5
