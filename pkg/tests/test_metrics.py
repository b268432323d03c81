import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glottisgate.backends import ReplayDetector
from glottisgate.core import BBox, ConfusionCounts, confusion_counts
from glottisgate.errors import InvalidConfigError, InvalidInputError
from glottisgate.gate import GateConfig, GateStatus
from glottisgate.metrics import (
    aggregate,
    dsc,
    evaluate,
    hold_sweep,
    hold_window_for,
    iou,
    parse_floats,
    parse_holds,
    score_frames,
    tau_sweep,
    write_rows_csv,
)
from glottisgate.pipelines import FrameResult, PipelineKind, RunConfig, process_video
from glottisgate.synth import SynthConfig, generate, oracle_detector, oracle_segmenter, uniform_confidence

from oracles import dice_iou


def result(i, mask, detected=True, status=GateStatus.DETECTED, excluded=False):
    det = BBox(0, 0, 1, 1, 0.9) if detected else None
    return FrameResult(i, mask, det, status, int(mask.sum()), excluded)


def test_dsc_iou_examples():
    assert (dsc(ConfusionCounts(100, 0, 0, 0)), iou(ConfusionCounts(100, 0, 0, 0))) == (1.0, 1.0)
    assert dsc(ConfusionCounts(2, 2, 2, 10)) == 0.5
    assert iou(ConfusionCounts(2, 2, 2, 10)) == pytest.approx(1 / 3)
    assert (dsc(ConfusionCounts(0, 0, 0, 9)), iou(ConfusionCounts(0, 0, 0, 9))) == (1.0, 1.0)


@settings(max_examples=200)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_dsc_at_least_iou(tp, fp, fn):
    c = ConfusionCounts(tp, fp, fn, 0)
    d, j = dsc(c), iou(c)
    assert d >= j - 1e-15
    if d in (0.0, 1.0):
        assert d == j
    else:
        assert d > j


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_per_frame_scores_match_pixel_oracle(seed):
    rng = np.random.default_rng(seed)
    p = rng.random((9, 7)) < rng.uniform(0, 1)
    g = rng.random((9, 7)) < rng.uniform(0, 1)
    c = confusion_counts(p, g)
    od, oj = dice_iou(p.tolist(), g.tolist())
    assert dsc(c) == pytest.approx(od, abs=1e-15)
    assert iou(c) == pytest.approx(oj, abs=1e-15)


def test_evaluate_examples():
    gts = [np.eye(4, dtype=bool)] * 4
    row = evaluate([result(i, gts[i]) for i in range(4)], gts)
    assert (row.det_recall, row.mean_dsc, row.mean_iou, row.pass_rate_dsc_ge_05) == (1.0, 1.0, 1.0, 1.0)
    empty = np.zeros((4, 4), dtype=bool)
    half = [result(0, empty), result(1, gts[1])]
    row = evaluate(half, gts[:2])
    assert row.mean_dsc == 0.5 and row.pass_rate_dsc_ge_05 == 0.5


def test_det_recall_nineteen_of_twenty():
    gts = [np.zeros((2, 2), dtype=bool)] * 20
    results = [result(i, gts[i], detected=i != 7) for i in range(20)]
    assert evaluate(results, gts).det_recall == 0.95


def test_ungated_reports_full_recall():
    gts = [np.zeros((2, 2), dtype=bool)] * 3
    results = [result(i, gts[i], detected=False, status=GateStatus.UNGATED) for i in range(3)]
    assert evaluate(results, gts).det_recall == 1.0


def test_excluded_frames_skipped():
    gt = np.ones((2, 2), dtype=bool)
    empty = np.zeros((2, 2), dtype=bool)
    results = [result(0, empty, excluded=True), result(1, gt), result(2, gt)]
    row = evaluate(results, [gt] * 3)
    assert row.n_frames == 2 and row.n_excluded == 1 and row.mean_dsc == 1.0
    scores = score_frames(results, [gt] * 3)
    assert scores[0] is None
    assert scores[1:] == score_frames(results[1:], [gt] * 2)


def test_evaluate_errors():
    gt = np.ones((2, 2), dtype=bool)
    with pytest.raises(InvalidInputError):
        evaluate([result(0, gt)], [gt, gt])
    with pytest.raises(InvalidInputError):
        evaluate([result(0, gt, excluded=True)], [gt])


def test_mean_dsc_order_invariant():
    rng = np.random.default_rng(9)
    masks = [rng.random((6, 6)) < 0.5 for _ in range(30)]
    gts = [rng.random((6, 6)) < 0.5 for _ in range(30)]
    scores = score_frames([result(i, m) for i, m in enumerate(masks)], gts)
    perm = rng.permutation(30)
    assert aggregate(scores).mean_dsc == aggregate([scores[i] for i in perm]).mean_dsc


# tau sweep ------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tau_setup():
    frames, truth = generate(SynthConfig(n_frames=120))
    det = oracle_detector(truth, confidence_fn=uniform_confidence(seed=4))
    records = [det.detect(f, i) for i, f in enumerate(frames)]
    raw = list(truth.masks)
    return frames, truth, records, raw


def test_tau_sweep_recall_matches_counting(tau_setup):
    frames, truth, records, raw = tau_setup
    taus = [0.0, 0.02, 0.25, 0.35, 1.01]
    rows = dict(tau_sweep(records, raw, truth.masks, taus))
    for tau in taus:
        expected = sum(1 for dets in records if any(d.confidence >= tau for d in dets)) / len(records)
        assert rows[tau].det_recall == expected
    assert rows[1.01].det_recall == 0.0
    empties = sum(1 for g in truth.masks if not g.any()) / len(truth.masks)
    assert rows[1.01].mean_dsc == pytest.approx(empties)


def test_tau_sweep_equals_direct_run(tau_setup):
    frames, truth, records, raw = tau_setup
    for tau in (0.001, 0.3):
        (_, swept), = tau_sweep(records, raw, truth.masks, [tau])
        direct = process_video(
            RunConfig(tau=tau), frames, ReplayDetector(dict(enumerate(records))), oracle_segmenter(truth)
        )
        row = evaluate(direct, truth.masks, "localizer-segmenter")
        assert swept == row


def test_tau_sweep_recall_monotone(tau_setup):
    frames, truth, records, raw = tau_setup
    taus = np.linspace(0, 1, 41).tolist()
    recalls = [row.det_recall for _, row in tau_sweep(records, raw, truth.masks, taus)]
    assert all(a >= b for a, b in zip(recalls, recalls[1:]))


def test_tau_below_floor_warns(tau_setup, caplog):
    frames, truth, records, raw = tau_setup
    tau_sweep(records, raw, truth.masks, [0.0])
    assert "capture floor" in caplog.text


def test_tau_sweep_misaligned():
    with pytest.raises(InvalidInputError):
        tau_sweep([[]], [], [], [0.5])


# hold sweep -----------------------------------------------------------------------------

class Isolated:
    def __init__(self, every, box=BBox(0, 0, 256, 256)):
        self.every, self.box = every, box

    def detect(self, frame, frame_id):
        return [self.box] if frame_id % self.every == 0 else []


@pytest.fixture(scope="module")
def hold_video():
    return generate(SynthConfig(n_frames=80))


def test_hold_one_only_outputs_on_detections(hold_video):
    frames, truth = hold_video
    cfg = RunConfig()
    seg = oracle_segmenter(truth)
    direct = process_video(RunConfig(gate=GateConfig(hold_window=1)), frames, Isolated(5), seg)
    assert all((r.gate_status == GateStatus.DETECTED) == (r.frame_id % 5 == 0) for r in direct)
    (_, row), = hold_sweep(cfg, frames, truth.masks, [1], Isolated(5), seg)
    assert row.active_rate == pytest.approx(16 / 80)


def test_hold_infinite_never_zeroes_after_first(hold_video):
    frames, truth = hold_video
    (_, row), = hold_sweep(RunConfig(), frames, truth.masks, [math.inf], Isolated(1000), oracle_segmenter(truth))
    assert row.active_rate == 1.0


def test_hold_sweep_plateaus_at_gap_length(hold_video):
    frames, truth = hold_video
    holds = list(range(0, 12)) + [math.inf]
    rows = hold_sweep(RunConfig(), frames, truth.masks, holds, Isolated(6), oracle_segmenter(truth))
    dscs = [row.mean_dsc for _, row in rows]
    assert all(b >= a for a, b in zip(dscs, dscs[1:]))
    # detections every 6 frames: the window covers every gap from 6 onwards
    assert len(set(dscs[6:])) == 1
    assert dscs[5] < dscs[6]
    # hold 0 gates per frame, same as a window of 1
    assert rows[0][1].mean_dsc == rows[1][1].mean_dsc and rows[0][1].active_rate == rows[1][1].active_rate


def test_hold_sweep_needs_video_mode(hold_video):
    frames, truth = hold_video
    with pytest.raises(InvalidConfigError):
        hold_sweep(RunConfig(temporal=False), frames, truth.masks, [1], Isolated(2), oracle_segmenter(truth))


def test_hold_window_for():
    assert hold_window_for(0) == 1 and hold_window_for(3) == 3 and hold_window_for(math.inf) == math.inf
    for bad in (-1, 2.5):
        with pytest.raises(InvalidConfigError):
            hold_window_for(bad)


def test_parsers():
    assert parse_holds("0..3, 8,inf") == [0, 1, 2, 3, 8, math.inf]
    assert parse_floats("0.1,0.25") == [0.1, 0.25]
    for bad in ("3..1", "x"):
        with pytest.raises(InvalidConfigError):
            parse_holds(bad)
    with pytest.raises(InvalidConfigError):
        parse_floats("a,b")


def test_rows_csv(tmp_path):
    gt = [np.ones((2, 2), dtype=bool)]
    row = evaluate([result(0, gt[0])], gt, "m")
    write_rows_csv(tmp_path / "r.csv", [row], key="tau", keys=[0.25])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].startswith("tau,method,det_recall,mean_dsc")
    assert lines[1].startswith("0.25,m,1.0,1.0")


def test_motion_pipeline_evaluation_excludes_init(hold_video):
    frames, truth = hold_video
    results = process_video(RunConfig(pipeline=PipelineKind.MOTION), frames, Isolated(1))
    assert evaluate(results, truth.masks).n_excluded == 10
