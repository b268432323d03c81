"""The twelve acceptance criteria, each at its stated tolerance.

Every test records a one-line verdict that the terminal summary prints under
"acceptance criteria", whether the assertion passed or not.
"""

import itertools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from glottisgate import backends, gate
from glottisgate.backends import ReplayDetector, ReplaySegmenter, otsu_level
from glottisgate.cli import main as cli_main
from glottisgate.core import BBox, confusion_counts
from glottisgate.gate import GateConfig, GateState, GateStatus, gate_step
from glottisgate.gaw import FEATURE_NAMES, GawSeries, extract_waveform, features
from glottisgate.metrics import dsc, evaluate, hold_sweep, iou, tau_sweep
from glottisgate.pipelines import PipelineKind, RunConfig, process_video
from glottisgate.stats import fisher_exact_2x2, mann_whitney_u
from glottisgate.synth import (
    Corruption,
    OracleDetector,
    OracleSegmenter,
    SynthConfig,
    generate,
    uniform_confidence,
)
from oracles import dice_iou, features_brute, otsu_brute, window_statuses

BY_CODE = (GateStatus.ZEROED, GateStatus.HELD, GateStatus.DETECTED)


def _window_codes(B: np.ndarray, hold: int) -> np.ndarray:
    """Vectorized window-sum oracle over a batch of 0/1 rows."""
    c = np.concatenate((np.zeros((B.shape[0], 1), np.int64), np.cumsum(B, axis=1)), axis=1)
    idx = np.arange(1, B.shape[1] + 1)
    win = c[:, idx] - c[:, np.maximum(0, idx - hold)]
    return np.where(B == 1, 2, np.where(win > 0, 1, 0))


def test_c01_gate_matches_window_oracle(acceptance):
    cfg = GateConfig(hold_window=4)
    raw = np.ones((2, 2), dtype=bool)
    box = BBox(0, 0, 2, 2)
    rng = np.random.default_rng(0)

    def check(B, lengths):
        expected = _window_codes(B, 4).tolist()
        frames = mismatches = 0
        for row, exp, n in zip(B.tolist(), expected, lengths):
            state = GateState()
            for t in range(n):
                state, out = gate_step(state, cfg, box if row[t] else None, raw)
                if out.status is not BY_CODE[exp[t]]:
                    mismatches += 1
            frames += n
        return frames, mismatches

    start = time.perf_counter()
    frames = mismatches = 0
    for length in range(1, 13):
        B = np.array(list(itertools.product((0, 1), repeat=length)), dtype=np.int64)
        f, m = check(B, [length] * len(B))
        frames, mismatches = frames + f, mismatches + m
    n_random = 100_000
    lengths = rng.integers(1, 51, n_random)
    density = rng.random((n_random, 1))
    B = (rng.random((n_random, 50)) < density).astype(np.int64)
    f, m = check(B, lengths.tolist())
    frames, mismatches = frames + f, mismatches + m
    elapsed = time.perf_counter() - start

    ok = mismatches == 0 and elapsed < 10.0
    acceptance(1, ok, f"{frames} gate steps, {mismatches} mismatches vs window-sum oracle, {elapsed:.2f} s (< 10 s)")
    assert mismatches == 0
    assert elapsed < 10.0


def test_c01_window_oracle_is_itself_sane():
    # the vectorized oracle used above agrees with the plain-loop one
    rng = np.random.default_rng(1)
    B = (rng.random((200, 30)) < 0.3).astype(np.int64)
    codes = _window_codes(B, 4)
    for row, c in zip(B.tolist(), codes.tolist()):
        assert [BY_CODE[x].value for x in c] == window_statuses(row, 4)


def test_c02_single_detection_holds_four_frames(acceptance):
    seq = [0, 0, 0, 1] + [0] * 12
    raw = np.ones((4, 4), dtype=bool)
    box = BBox(0, 0, 4, 4)
    state, nonzero, statuses = GateState(), 0, []
    for b in seq:
        state, out = gate_step(state, GateConfig(), box if b else None, raw)
        statuses.append(out.status)
        nonzero += bool(out.gated_mask.any())
    eligible = sum(s is not GateStatus.ZEROED for s in statuses)
    ok = eligible == 4 and nonzero == 4 and statuses[3:8] == [
        GateStatus.DETECTED, GateStatus.HELD, GateStatus.HELD, GateStatus.HELD, GateStatus.ZEROED
    ]
    acceptance(2, ok, f"isolated detection -> {eligible} non-zero-eligible frames (expected 4 = 1 ms at 4000 fps)")
    assert eligible == 4
    assert nonzero == 4


def test_c03_metrics_match_pixel_counting(acceptance):
    rng = np.random.default_rng(3)
    worst, dsc_ge_iou = 0.0, True
    for _ in range(1000):
        h, w = rng.integers(1, 25, 2)
        pred = rng.random((h, w)) < rng.random()
        gt = rng.random((h, w)) < rng.random()
        if rng.random() < 0.05:
            pred[:] = False
            gt[:] = False
        c = confusion_counts(pred, gt)
        d, j = dsc(c), iou(c)
        od, oj = dice_iou(pred.tolist(), gt.tolist())
        worst = max(worst, abs(d - od), abs(j - oj))
        dsc_ge_iou &= d >= j
    ok = worst <= 1e-12 and dsc_ge_iou
    acceptance(3, ok, f"1000 mask pairs, max |impl - oracle| = {worst:.1e} (<= 1e-12), DSC >= IoU on all: {dsc_ge_iou}")
    assert worst <= 1e-12
    assert dsc_ge_iou


def test_c04_otsu_matches_brute_force(acceptance):
    rng = np.random.default_rng(4)
    mismatches = 0
    for i in range(1000):
        kind = i % 4
        if kind == 0:
            hist = rng.integers(0, 1000, 256)
        elif kind == 1:
            hist = np.zeros(256, dtype=np.int64)
            hist[rng.choice(256, rng.integers(1, 6), replace=False)] = rng.integers(1, 500, 1)[0]
        elif kind == 2:
            hist = np.zeros(256, dtype=np.int64)
            idx = rng.choice(256, rng.integers(2, 20), replace=False)
            hist[idx] = rng.integers(1, 5000, idx.size)
        else:
            lo, hi = sorted(rng.integers(0, 256, 2))
            x = np.concatenate([rng.normal(lo, 8, 300), rng.normal(hi, 8, 200)])
            hist = np.bincount(np.clip(np.rint(x), 0, 255).astype(int), minlength=256)
        if hist.sum() == 0:
            hist[rng.integers(0, 256)] = 1
        mismatches += otsu_level(hist) != otsu_brute(hist.tolist())
    acceptance(4, mismatches == 0, f"1000 random histograms, {mismatches} mismatches vs exact 256-threshold brute force")
    assert mismatches == 0


def test_c05_fisher_reproduces_cohort_imbalance(acceptance):
    p_cohort = fisher_exact_2x2([[12, 3], [11, 14]])
    p_one_sided = fisher_exact_2x2([[12, 3], [11, 14]], alternative="greater")
    p_perfect = fisher_exact_2x2([[5, 0], [0, 5]])
    ok_cohort = abs(p_cohort - 0.025) <= 0.005
    ok_perfect = abs(p_perfect - 2 / 252) <= 1e-12
    acceptance(
        5,
        ok_cohort and ok_perfect,
        f"[[12,3],[11,14]] two-sided p = {p_cohort:.5f} (target 0.025 +- 0.005; one-sided 'greater' = {p_one_sided:.5f}); "
        f"[[5,0],[0,5]] p = {p_perfect:.10f} (2/252 = {2 / 252:.10f})",
    )
    assert ok_perfect
    assert ok_cohort, f"two-sided Fisher p for [[12,3],[11,14]] is {p_cohort}, not within 0.005 of 0.025"


def test_c06_mann_whitney_approximation_vs_exact(acceptance):
    rng = np.random.default_rng(0)
    worst, violations = 0.0, 0
    for _ in range(1000):
        n1, n2 = rng.integers(8, 16, 2)
        a, b = rng.standard_normal(n1), rng.standard_normal(n2)
        assert np.unique(np.concatenate([a, b])).size == n1 + n2
        diff = abs(mann_whitney_u(a, b, "asymptotic").pvalue - mann_whitney_u(a, b, "exact").pvalue)
        worst = max(worst, diff)
        violations += diff > 0.01
    p_small = mann_whitney_u([1, 2], [3, 4], "exact").pvalue
    p_small_enum = mann_whitney_u([1, 2], [3, 4], "enumerate").pvalue
    ok_small = abs(p_small - 1 / 3) <= 1e-12 and abs(p_small_enum - 1 / 3) <= 1e-12
    acceptance(
        6,
        violations == 0 and ok_small,
        f"1000 tie-free instances n1,n2 in [8,15]: {violations} exceed 0.01, max |asymptotic - exact| = {worst:.4f}; "
        f"a={{1,2}} vs b={{3,4}} exact p = {p_small!r}",
    )
    assert ok_small
    assert violations == 0, f"{violations} of 1000 instances differ by more than 0.01 (max {worst:.4f})"


def test_c07_feature_recovery(acceptance):
    start = time.perf_counter()
    frames, truth = generate(SynthConfig(n_frames=502, fps=4000.0, f_vib=200.0, noise_sigma=0.0))
    results = process_video(RunConfig(), frames, OracleDetector(truth), OracleSegmenter(truth))
    fv = features(extract_waveform(results, 4000.0))
    gt = features(GawSeries(truth.areas, 4000.0))
    pipeline_s = time.perf_counter() - start

    bin_hz = 4000.0 / 502
    ok_f0 = abs(fv.f0 - 200.0) <= bin_hz
    ok_oq = abs(fv.open_quotient - gt.open_quotient) <= 0.02
    ok_cv = abs(fv.cv - gt.cv) <= 0.02 * gt.cv

    rng = np.random.default_rng(7)
    worst = 0.0
    t_impl = 0.0
    for i in range(100):
        n = int(rng.integers(4, 160))
        if i % 3 == 0:
            x = np.maximum(0.0, rng.normal(0, 50, n)).round()
        elif i % 3 == 1:
            t = np.arange(n)
            x = np.maximum(0.0, 100 * np.sin(2 * np.pi * rng.uniform(0.02, 0.2) * t + rng.uniform(0, 6)))
        else:
            x = rng.uniform(0, 500, n)
        fps = float(rng.choice([2000.0, 4000.0, 10000.0]))
        t0 = time.perf_counter()
        got = features(GawSeries(x, fps)).as_dict()
        t_impl += time.perf_counter() - t0
        want = features_brute(x.tolist(), fps)
        for name in FEATURE_NAMES:
            err = abs(got[name] - want[name]) / max(1.0, abs(want[name]))
            worst = max(worst, err)
    elapsed = pipeline_s + t_impl
    ok = ok_f0 and ok_oq and ok_cv and worst <= 1e-9 and elapsed < 5.0
    acceptance(
        7,
        ok,
        f"f0 {fv.f0:.2f} Hz (200 +- {bin_hz:.2f}), OQ {fv.open_quotient:.4f} vs GT {gt.open_quotient:.4f}, "
        f"cv {fv.cv:.4f} vs GT {gt.cv:.4f}, 100 series max rel err {worst:.1e}, {elapsed:.2f} s",
    )
    assert ok_f0 and ok_oq and ok_cv
    assert worst <= 1e-9
    assert elapsed < 5.0


def test_c08_gating_robustness(acceptance, synth_default):
    frames, truth = synth_default
    blob = Corruption("blob", x=8, y=8, size=12)
    seg = OracleSegmenter(truth, blob)
    det = OracleDetector(truth)
    loc = evaluate(process_video(RunConfig(pipeline="localizer-segmenter"), frames, det, seg), truth.masks)
    only = evaluate(process_video(RunConfig(pipeline="segmenter-only"), frames, det, seg), truth.masks)

    outage = range(201, 213)
    res = process_video(
        RunConfig(pipeline="localizer-segmenter"), frames, OracleDetector(truth, miss_pattern=outage), OracleSegmenter(truth)
    )
    areas = [r.area_px2 for r in res]
    zeroed = areas[outage.start + 3:outage.stop]
    open_in_outage = int(sum(truth.areas[outage.start + 3:outage.stop] > 0))
    ok = loc.mean_dsc > only.mean_dsc and all(a == 0 for a in zeroed) and open_in_outage > 0
    acceptance(
        8,
        ok,
        f"blob corruption: LocSeg DSC {loc.mean_dsc:.4f} > SegOnly {only.mean_dsc:.4f}; "
        f"12-frame outage: GAW zero on frames {outage.start + 3}..{outage.stop - 1} ({open_in_outage} with open glottis)",
    )
    assert loc.mean_dsc > only.mean_dsc
    assert all(a == 0 for a in zeroed)
    assert open_in_outage > 0


def test_c09_tau_sweep_consistency(acceptance, synth_default):
    frames, truth = synth_default
    rng = np.random.default_rng(9)
    conf = uniform_confidence(seed=9, low=0.001, high=1.0)
    records = {}
    for t, box in enumerate(truth.boxes):
        dets = []
        if box is not None and rng.random() < 0.9:
            dets.append(BBox(box.x0, box.y0, box.x1, box.y1, conf(t)))
        for _ in range(int(rng.integers(0, 3))):
            x, y = int(rng.integers(0, 200)), int(rng.integers(0, 200))
            dets.append(BBox(x, y, x + 20, y + 20, float(rng.uniform(0.001, 0.4))))
        if dets:
            records[t] = dets
    seg = OracleSegmenter(truth, Corruption("dilate", k=2))
    raw = [backends.binarize(seg.predict(f, t)) for t, f in enumerate(frames)]
    recs = [records.get(t, []) for t in range(len(frames))]
    taus = [0.001, 0.01, 0.02, 0.05, 0.1, 0.25, 0.35, 0.5, 0.75, 0.9, 0.99, 1.0, 1.01]
    rows = tau_sweep(recs, raw, truth.masks, taus)
    recall = [r.det_recall for _, r in rows]
    monotone = all(a >= b for a, b in zip(recall, recall[1:]))

    direct = evaluate(
        process_video(RunConfig(tau=0.001), frames, ReplayDetector(records), seg),
        truth.masks,
        "localizer-segmenter",
    )
    identical = rows[0][1] == direct
    ok = monotone and identical
    acceptance(
        9,
        ok,
        f"det_recall over {len(taus)} taus {recall[0]:.3f} -> {recall[-1]:.3f} monotone: {monotone}; "
        f"sweep at floor == direct evaluation: {identical}",
    )
    assert monotone
    assert identical


def test_c10_hold_sweep_rise_then_plateau(acceptance):
    cfg = SynthConfig(n_frames=502)
    frames, truth = generate(cfg)
    # 3-frame detector dropouts while the glottis is open
    gap_starts = [t for t in range(0, 502, 20) if t % 40 == 0 and t + 4 < 502]
    misses = [t + 2 + k for t in gap_starts for k in range(3)]
    det = OracleDetector(truth, miss_pattern=misses)
    seg = OracleSegmenter(truth)
    holds = list(range(1, 21))
    rows = hold_sweep(RunConfig(), frames, truth.masks, holds, det, seg)
    d = [r.mean_dsc for _, r in rows]
    rising = all(b >= a for a, b in zip(d[:4], d[1:4]))
    flat = all(abs(x - d[3]) <= 1e-6 for x in d[3:])

    occ_cfg = SynthConfig(n_frames=502, occlusions=tuple((t, 3) for t in range(50, 500, 60)))
    oframes, otruth = generate(occ_cfg)
    orows = hold_sweep(RunConfig(), oframes, otruth.masks, holds, OracleDetector(otruth), OracleSegmenter(otruth))
    od = [r.mean_dsc for _, r in orows]
    o_ok = all(b >= a for a, b in zip(od[:4], od[1:4])) and all(abs(x - od[3]) <= 1e-6 for x in od[3:])

    ok = rising and flat and d[3] > d[0] and o_ok
    acceptance(
        10,
        ok,
        f"3-frame dropouts: DSC hold1..4 = {', '.join(f'{x:.4f}' for x in d[:4])}, "
        f"max |DSC(h) - DSC(4)| for h=4..20 = {max(abs(x - d[3]) for x in d[3:]):.1e}; occlusion variant ok: {o_ok}",
    )
    assert rising and d[3] > d[0]
    assert flat
    assert o_ok


def test_c11_classical_throughput(acceptance, synth_default):
    frames, truth = synth_default
    det = OracleDetector(truth)
    records = {t: det.detect(None, t) for t in range(len(frames))}
    replay = ReplayDetector(records)
    start = time.perf_counter()
    results = process_video(RunConfig(pipeline=PipelineKind.OTSU), frames, replay)
    row = evaluate(results, truth.masks, "otsu")
    elapsed = time.perf_counter() - start
    fps = len(frames) / elapsed
    acceptance(
        11,
        fps >= 500,
        f"replay detector + gate + Otsu + metrics at 256x256: {fps:.0f} frames/s "
        f"(>= 500; {fps / 35:.0f}x the ~35 frames/s neural figure), DSC {row.mean_dsc:.3f}, kernels={gate.kernels.BACKEND}",
    )
    assert fps >= 500


def _tree(path: Path) -> dict:
    out = {}
    for p in sorted(path.rglob("*")):
        if not p.is_file():
            continue
        rel = p.relative_to(path).as_posix()
        if p.name == "manifest.json":
            data = json.loads(p.read_text())
            data.pop("timestamp")
            out[rel] = json.dumps(data, sort_keys=True).encode()
        else:
            out[rel] = p.read_bytes()
    return out


def test_c12_cli_determinism(acceptance, tmp_path, monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    monkeypatch.chdir(tmp_path)
    syn = ["--n-frames", "60", "--width", "96", "--height", "80", "--a-max", "6", "--b-max", "18",
           "--noise-sigma", "4", "--seed", "5", "--occlusion", "30:6", "--oracle-confidence", "uniform"]
    assert cli_main(["synth", "--out", "rec", *syn]) == 0
    assert cli_main(["synth", "--out", "rec_b", "--seed", "6", "--n-frames", "60", "--width", "96", "--height", "80"]) == 0
    Path("meta.csv").write_text("patient_id,status,sex\nrec,Healthy,F\nrec_b,Pathological,M\nx1,Healthy,M\nx2,Pathological,F\n")
    pipe = ["--frames", "rec/frames", "--detector", "replay:rec/detections.csv", "--segmenter", "replay:rec/masks"]
    commands = {
        "synth": lambda o: ["synth", "--out", f"{o}/rec", *syn],
        "prep-labels": lambda o: ["prep-labels", "--masks", "rec/masks", "--out", o],
        "letterbox": lambda o: ["letterbox", "--images", "rec/frames", "--out", o, "--size", "64"],
        "run": lambda o: ["run", *pipe, "--out", o, "--save-masks", "--gt", "rec/masks"],
        "run-otsu": lambda o: ["run", "--frames", "rec/frames", "--detector", "oracle", "--segmenter", "otsu", "--out", o],
        "run-motion": lambda o: ["run", "--frames", "rec/frames", "rec_b/frames", "--detector", "oracle",
                                 "--segmenter", "motion", "--out", o, "--workers", "2"],
        "eval": lambda o: ["eval", "--pred", "base_run", "--gt", "rec/masks", "--out", o],
        "sweep-tau": lambda o: ["sweep-tau", *pipe, "--out", o],
        "sweep-hold": lambda o: ["sweep-hold", *pipe, "--holds", "0..6,inf", "--out", o],
        "features": lambda o: ["features", "base_run", "--out", o],
        "compare": lambda o: ["compare", "--features", "feats", "--meta", "meta.csv", "--out", o],
        "montage": lambda o: ["montage", "--frames", "rec/frames", "--pred", "base_run", "--out", o],
    }
    assert cli_main(commands["run"]("base_run")) == 0
    feats = Path("feats")
    feats.mkdir()
    rng = np.random.default_rng(12)
    for name in ("rec", "rec_b", "x1", "x2"):
        fv = features(GawSeries(np.maximum(0, rng.normal(100, 80, 200)), 4000.0)).as_dict()
        (feats / f"{name}.json").write_text(json.dumps({"recording": name, "fps": 4000.0, **fv}))

    differing = []
    for name, build in commands.items():
        trees = []
        for run in ("first", "second"):
            out = f"{run}_{name}"
            code = cli_main(build(out))
            assert code == 0, f"{name} exited {code}"
            root = Path(out)
            trees.append(_tree(root))
        if trees[0] != trees[1] or not trees[0]:
            differing.append(name)
    ok = not differing
    acceptance(12, ok, f"{len(commands)} CLI invocations over all 10 commands run twice: "
                       f"{'all bit-identical (manifest timestamp aside)' if ok else 'differ: ' + ', '.join(differing)}")
    assert not differing
