"""Command-line entry point: ``glottisgate <command> [flags]``.

Every command writes into ``--out`` together with a ``manifest.json`` that
records the command, the effective configuration, SHA-256 hashes of the
inputs, the tool version and the output files. Set ``SOURCE_DATE_EPOCH`` to
pin the manifest timestamp; everything else is a pure function of the inputs.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import cv2
import numpy as np

from . import __version__
from .backends import (
    CAPTURE_FLOOR,
    IOSpec,
    ReplayDetector,
    ReplaySegmenter,
    binarize,
    model_backend,
    write_detection_records,
)
from .core import (
    BBox,
    bbox_to_label_record,
    format_label_record,
    frame_filename,
    letterbox,
    list_images,
    mask_to_bbox,
    read_frame,
    read_mask,
    write_frame,
    write_mask,
)
from .errors import GlottisGateError, InvalidConfigError, InvalidInputError, MissingInputError
from .gate import GateConfig, GateStatus
from .gaw import (
    FEATURE_NAMES,
    STD_CONVENTION,
    FeatureVector,
    GawSeries,
    extract_waveform,
    features,
    read_gaw_csv,
    write_gaw_csv,
)
from .metrics import (
    EMPTY_FRAME_CONVENTION,
    evaluate,
    format_hold,
    hold_sweep,
    parse_floats,
    parse_holds,
    tau_sweep,
    write_json,
    write_rows_csv,
)
from .pipelines import FrameResult, PipelineKind, RunConfig, annotate_montage, process_video
from .stats import build_records, format_report, group_report, read_meta_csv, write_report_csv
from .svgplot import dual_axis_plot, waveform_panels
from .synth import (
    OracleDetector,
    OracleSegmenter,
    SynthConfig,
    constant_confidence,
    generate,
    read_truth_csv,
    uniform_confidence,
    write_truth_csv,
)

log = logging.getLogger("glottisgate")

DEFAULT_FPS = 4000.0
MANIFEST = "manifest.json"
FRAME_FIELDS = ["frame_id", "area_px2", "status", "conf", "x0", "y0", "x1", "y1", "excluded"]
DEFAULT_TAUS = "0.001,0.02,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.5,0.6,0.7,0.8,0.9"
CONVENTIONS = {
    "empty_frame_dsc": EMPTY_FRAME_CONVENTION,
    "area_std": STD_CONVENTION,
    "det_recall": "fraction of non-excluded frames with a raw detector firing at confidence >= tau; 1.0 for ungated pipelines",
    "frames_csv": "conf is the raw detection confidence (blank = no detection); x0..y1 is the active (gated) box",
}


# helpers ------------------------------------------------------------------------

def _setup_logging() -> None:
    level = getattr(logging, os.environ.get("GLOTTISGATE_LOG", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    # basicConfig is a no-op when the host already configured logging
    logging.getLogger("glottisgate").setLevel(level)


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_input(path) -> str:
    """SHA-256 of a file, or of the sorted (name, hash) list of a directory tree."""
    path = Path(path)
    if path.is_file():
        return _sha256_file(path)
    if path.is_dir():
        h = hashlib.sha256()
        for p in sorted(q for q in path.rglob("*") if q.is_file()):
            h.update(p.relative_to(path).as_posix().encode())
            h.update(_sha256_file(p).encode())
        return h.hexdigest()
    raise MissingInputError(f"no such input: {path}")


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (
        dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc)
        if epoch
        else dt.datetime.now(dt.timezone.utc).replace(microsecond=0)
    )
    return when.isoformat()


def write_manifest(out: Path, command: str, config: dict, inputs: Sequence, conventions: Optional[dict] = None) -> None:
    outputs = sorted(p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file() and p != out / MANIFEST)
    payload = {
        "command": command,
        "config": config,
        "inputs": {str(p): _hash_input(p) for p in inputs if p is not None},
        "version": __version__,
        "timestamp": _timestamp(),
        "outputs": outputs,
        "conventions": conventions or {},
    }
    write_json(out / MANIFEST, payload)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _recording_name(frames_dir: Path) -> str:
    frames_dir = Path(frames_dir).resolve()
    return frames_dir.parent.name if frames_dir.name == "frames" else frames_dir.name


def _recording_root(frames_dir: Path) -> Path:
    frames_dir = Path(frames_dir)
    return frames_dir.parent if frames_dir.resolve().name == "frames" else frames_dir


def _meta_fps(root: Path) -> Optional[float]:
    meta = root / "meta.csv"
    if not meta.is_file():
        return None
    with meta.open(newline="") as fh:
        for row in csv.DictReader(fh):
            value = (row.get("fps") or "").strip()
            if value:
                return float(value)
    return None


def resolve_fps(explicit: Optional[float], frames_dir: Path) -> float:
    if explicit is not None:
        return explicit
    fps = _meta_fps(_recording_root(frames_dir))
    if fps is not None:
        return fps
    log.warning(
        "no --fps given and no fps in %s/meta.csv; ASSUMING %g frames/s. "
        "Frequency features scale with this value.",
        _recording_root(frames_dir), DEFAULT_FPS,
    )
    return DEFAULT_FPS


def load_frames(frames_dir) -> tuple[list[int], list[np.ndarray]]:
    items = list_images(frames_dir)
    if not items:
        raise MissingInputError(f"no images in {frames_dir}")
    return [fid for fid, _ in items], [read_frame(p) for _, p in items]


def load_gt(gt_dir, frame_ids: Sequence[int]) -> list[np.ndarray]:
    found = dict(list_images(gt_dir))
    missing = [fid for fid in frame_ids if fid not in found]
    if missing:
        raise MissingInputError(f"{gt_dir}: no ground-truth mask for frames {missing[:5]}")
    return [read_mask(found[fid]) for fid in frame_ids]


def _default_gt(args, frames_dir: Path) -> Optional[Path]:
    if getattr(args, "gt", None):
        return Path(args.gt)
    candidate = _recording_root(frames_dir) / "masks"
    return candidate if candidate.is_dir() else None


def _truth(args, frames_dir: Path, fps: float):
    root = _recording_root(frames_dir)
    truth_path = Path(args.truth) if getattr(args, "truth", None) else root / "truth.csv"
    gt_dir = _default_gt(args, frames_dir)
    if gt_dir is None:
        raise MissingInputError(f"oracle backends need ground-truth masks (no {root}/masks and no --gt)")
    ids = [fid for fid, _ in list_images(gt_dir)]
    if ids != list(range(len(ids))):
        raise InvalidInputError("oracle backends need masks numbered 0..N-1")
    return read_truth_csv(truth_path, load_gt(gt_dir, ids), fps), truth_path


def _model_spec(args, kind: str) -> IOSpec:
    data = {}
    if getattr(args, "model_config", None):
        path = Path(args.model_config)
        if not path.is_file():
            raise MissingInputError(f"no such model config: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InvalidConfigError(f"{path}: {exc}") from None
        data = data.get(kind, data)
    return IOSpec.from_mapping({**data, "kind": kind})


def _oracle_confidence(args):
    text = str(getattr(args, "oracle_confidence", "0.9"))
    if text == "uniform":
        return uniform_confidence(args.seed)
    try:
        value = float(text)
    except ValueError:
        raise InvalidConfigError(f"--oracle-confidence must be a number or 'uniform', got {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise InvalidConfigError("--oracle-confidence must lie in [0, 1]")
    return constant_confidence(value)


def build_backends(args, frames_dir: Path, fps: float, kind: PipelineKind):
    """Returns (detector, segmenter, extra input paths to hash)."""
    inputs: list[Path] = []
    truth = None

    def get_truth():
        nonlocal truth
        if truth is None:
            truth, path = _truth(args, frames_dir, fps)
            inputs.append(path)
        return truth

    detector = None
    spec = args.detector
    if kind.gated:
        if spec is None:
            raise InvalidConfigError(f"pipeline {kind} needs --detector")
        if spec == "oracle":
            detector = OracleDetector(get_truth(), confidence_fn=_oracle_confidence(args))
        elif spec.startswith("replay:"):
            path = Path(spec[len("replay:"):])
            detector = ReplayDetector.from_csv(path)
            inputs.append(path)
        elif spec.startswith("model:"):
            path = Path(spec[len("model:"):])
            detector = model_backend(path, _model_spec(args, "detector"))
            inputs.append(path)
        else:
            raise InvalidConfigError(f"unknown --detector {spec!r}")

    segmenter = None
    seg = args.segmenter
    if kind.needs_segmenter:
        if seg is None:
            raise InvalidConfigError(f"pipeline {kind} needs --segmenter")
        if seg == "oracle":
            segmenter = OracleSegmenter(get_truth())
        elif seg.startswith("replay:"):
            path = Path(seg[len("replay:"):])
            segmenter = ReplaySegmenter.from_dir(path)
            inputs.append(path)
        elif seg.startswith("model:"):
            path = Path(seg[len("model:"):])
            segmenter = model_backend(path, _model_spec(args, "segmenter"))
            inputs.append(path)
        elif seg in ("otsu", "motion"):
            raise InvalidConfigError(f"--segmenter {seg} implies --pipeline {seg}")
        else:
            raise InvalidConfigError(f"unknown --segmenter {seg!r}")
    return detector, segmenter, inputs


def _pipeline_kind(args) -> PipelineKind:
    if args.segmenter in ("otsu", "motion"):
        implied = PipelineKind(args.segmenter)
        if args.pipeline is not None and PipelineKind(args.pipeline) is not implied:
            raise InvalidConfigError(f"--segmenter {args.segmenter} conflicts with --pipeline {args.pipeline}")
        return implied
    return PipelineKind(args.pipeline or PipelineKind.LOCALIZER_SEGMENTER.value)


def _hold(value: str) -> float:
    v = value.strip().lower()
    if v in ("inf", "infinity"):
        return math.inf
    try:
        return int(v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"hold must be an integer or 'inf', got {value!r}") from None


def run_config(args, fps: float) -> RunConfig:
    return RunConfig(
        pipeline=_pipeline_kind(args),
        tau=args.tau,
        gate=GateConfig(args.hold_frames, args.drift_clamp_px),
        fps=fps,
        temporal=not args.frame_mode,
    )


def _float_cell(v: float) -> str:
    return repr(float(v))


def write_frames_csv(path: Path, results: Sequence[FrameResult]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRAME_FIELDS)
        for r in results:
            conf = _float_cell(r.detection.confidence) if r.detection is not None else ""
            box = r.active_box.as_tuple() if r.active_box is not None else ("", "", "", "")
            w.writerow([r.frame_id, r.area_px2, r.gate_status.value, conf, *box, int(r.excluded)])


def read_frames_csv(path: Path) -> list[dict]:
    if not path.is_file():
        raise MissingInputError(f"no such per-frame file: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if not set(FRAME_FIELDS[:-1]) <= set(reader.fieldnames or []):
            raise InvalidInputError(f"{path}: expected columns {','.join(FRAME_FIELDS)}")
        return list(reader)


def load_run_results(run_dir: Path) -> tuple[list[FrameResult], dict]:
    """Rebuild FrameResults from a ``run --save-masks`` output directory."""
    run_dir = Path(run_dir)
    rows = read_frames_csv(run_dir / "frames.csv")
    masks = dict(list_images(run_dir / "masks")) if (run_dir / "masks").is_dir() else {}
    manifest = json.loads((run_dir / MANIFEST).read_text()) if (run_dir / MANIFEST).is_file() else {}
    results = []
    for row in rows:
        fid = int(row["frame_id"])
        if fid not in masks:
            raise MissingInputError(f"{run_dir}: no mask for frame {fid}; rerun `run` with --save-masks")
        mask = read_mask(masks[fid])
        box = None
        if row["x0"] != "":
            box = BBox(int(row["x0"]), int(row["y0"]), int(row["x1"]), int(row["y1"]))
        det = None
        if row["conf"] != "":
            base = box or BBox(0, 0, 1, 1)
            det = BBox(base.x0, base.y0, base.x1, base.y1, float(row["conf"]))
        results.append(
            FrameResult(fid, mask, det, GateStatus(row["status"]), int(row["area_px2"]), row.get("excluded") == "1", box)
        )
    return results, manifest


def features_payload(name: str, fps: float, fv: FeatureVector) -> dict:
    return {"recording": name, "fps": fps, **fv.as_dict()}


def _eval_payload(row, extra: Optional[dict] = None) -> dict:
    return {**row.as_dict(), **(extra or {}), "conventions": CONVENTIONS}


# commands -----------------------------------------------------------------------

def cmd_synth(args) -> int:
    out = _out_dir(args.out)
    occl = tuple(_parse_span(o, "--occlusion") for o in args.occlusion)
    misses = sorted({t for start, length in (_parse_span(m, "--miss") for m in args.miss) for t in range(start, start + length)})
    cfg = SynthConfig(
        width=args.width, height=args.height, n_frames=args.n_frames, fps=args.fps or DEFAULT_FPS,
        f_vib=args.f_vib, a_max=args.a_max, b_max=args.b_max,
        glottis_intensity=args.glottis_intensity, tissue_intensity=args.tissue_intensity,
        noise_sigma=args.noise_sigma, occlusions=occl, seed=args.seed,
        center=(args.width / 2.0, args.height / 2.0),
    )
    frames, truth = generate(cfg)
    for t, (frame, mask) in enumerate(zip(frames, truth.masks)):
        write_frame(out / "frames" / frame_filename(t), frame)
        write_mask(out / "masks" / frame_filename(t), mask)
    write_truth_csv(out / "truth.csv", truth)
    conf_fn = _oracle_confidence(args)
    det = OracleDetector(truth, miss_pattern=misses, confidence_fn=conf_fn)
    write_detection_records(out / "detections.csv", {t: det.detect(None, t) for t in range(len(frames))})
    with (out / "meta.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "status", "sex", "fps"])
        w.writerow([out.resolve().name, "", "", repr(cfg.fps)])
    config = {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.__dict__.items()}
    config["oracle_confidence"] = args.oracle_confidence
    config["detector_misses"] = [list(_parse_span(m, "--miss")) for m in args.miss]
    write_manifest(out, "synth", config, [])
    return 0


def _parse_span(text: str, flag: str) -> tuple[int, int]:
    try:
        start, length = text.split(":")
        start, length = int(start), int(length)
    except ValueError:
        raise InvalidConfigError(f"{flag} expects START:LENGTH, got {text!r}") from None
    if start < 0 or length < 0:
        raise InvalidConfigError(f"{flag} needs non-negative START and LENGTH")
    return start, length


def cmd_prep_labels(args) -> int:
    out = _out_dir(args.out)
    items = list_images(args.masks)
    for fid, path in items:
        mask = read_mask(path)
        box = mask_to_bbox(mask)
        h, w = mask.shape
        text = "" if box is None else format_label_record(bbox_to_label_record(box, w, h)) + "\n"
        (out / f"{path.stem}.txt").write_text(text)
    write_manifest(out, "prep-labels", {"n_masks": len(items)}, [Path(args.masks)])
    return 0


def cmd_letterbox(args) -> int:
    out = _out_dir(args.out)
    items = list_images(args.images)
    with (out / "transforms.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_id", "scale", "pad_left", "pad_top", "source_width", "source_height", "target"])
        for fid, path in items:
            if args.masks:
                canvas, tf = letterbox(read_mask(path), args.size)
                write_mask(out / "images" / f"{path.stem}.png", canvas)
            else:
                canvas, tf = letterbox(read_frame(path), args.size)
                write_frame(out / "images" / f"{path.stem}.png", canvas)
            w.writerow([fid, repr(tf.scale), tf.pad_left, tf.pad_top, tf.source_width, tf.source_height, tf.target])
    write_manifest(out, "letterbox", {"size": args.size, "masks": args.masks}, [Path(args.images)])
    return 0


def _run_one(args, frames_dir: Path, out: Path) -> dict:
    fps = resolve_fps(args.fps, frames_dir)
    cfg = run_config(args, fps)
    ids, frames = load_frames(frames_dir)
    detector, segmenter, extra_inputs = build_backends(args, frames_dir, fps, cfg.pipeline)
    results = process_video(cfg, frames, detector, segmenter, ids)
    out.mkdir(parents=True, exist_ok=True)
    write_frames_csv(out / "frames.csv", results)
    series = extract_waveform(results, fps)
    write_gaw_csv(out / "gaw.csv", series)
    name = _recording_name(frames_dir)
    summary = {"recording": name, "n_frames": len(results)}
    if len(results) >= 4:
        write_json(out / "features.json", features_payload(name, fps, features(series)))
    if args.save_masks:
        for r in results:
            write_mask(out / "masks" / frame_filename(r.frame_id), r.mask)
    gt_dir = Path(args.gt) if args.gt else None
    if gt_dir is not None:
        row = evaluate(results, load_gt(gt_dir, ids), str(cfg.pipeline))
        write_rows_csv(out / "eval.csv", [row])
        write_json(out / "eval.json", _eval_payload(row))
        extra_inputs.append(gt_dir)
        summary["mean_dsc"] = row.mean_dsc
    config = {**cfg.as_dict(), "detector": args.detector, "segmenter": args.segmenter, "recording": name}
    write_manifest(out, "run", config, [frames_dir, *extra_inputs], CONVENTIONS)
    return summary


def _run_worker(payload) -> dict:
    args, frames_dir, out = payload
    return _run_one(args, frames_dir, out)


def cmd_run(args) -> int:
    out = _out_dir(args.out)
    dirs = [Path(d) for d in args.frames]
    if len(dirs) == 1:
        _run_one(args, dirs[0], out)
        return 0
    names = [_recording_name(d) for d in dirs]
    if len(set(names)) != len(names):
        raise InvalidInputError("recording names must be unique in batch mode")
    jobs = [(args, d, out / n) for d, n in zip(dirs, names)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            summaries = list(pool.map(_run_worker, jobs))
    else:
        summaries = [_run_worker(j) for j in jobs]
    write_json(out / "batch.json", {"recordings": summaries})
    write_manifest(out, "run", {"recordings": names, "workers": args.workers}, dirs, CONVENTIONS)
    return 0


def cmd_eval(args) -> int:
    out = _out_dir(args.out)
    results, manifest = load_run_results(Path(args.pred))
    method = args.method or manifest.get("config", {}).get("pipeline", "")
    gts = load_gt(args.gt, [r.frame_id for r in results])
    row = evaluate(results, gts, method)
    write_rows_csv(out / "eval.csv", [row])
    write_json(out / "eval.json", _eval_payload(row))
    write_manifest(out, "eval", {"method": method}, [Path(args.pred), Path(args.gt)], CONVENTIONS)
    return 0


def _sweep_svg(path: Path, labels, rows, title: str, x_title: str) -> None:
    svg = dual_axis_plot(
        [str(x) for x in labels],
        {"mean DSC": [r.mean_dsc for r in rows], "DSC >= 0.5": [r.pass_rate_dsc_ge_05 for r in rows]},
        {"Det.Recall": [r.det_recall for r in rows], "active rate": [r.active_rate for r in rows]},
        title=title,
        x_title=x_title,
    )
    path.write_text(svg)


def _sweep_inputs(args):
    frames_dir = Path(args.frames)
    fps = resolve_fps(args.fps, frames_dir)
    cfg = run_config(args, fps)
    ids, frames = load_frames(frames_dir)
    gt_dir = _default_gt(args, frames_dir)
    if gt_dir is None:
        raise MissingInputError("sweeps need ground truth: pass --gt DIR")
    gts = load_gt(gt_dir, ids)
    detector, segmenter, extra = build_backends(args, frames_dir, fps, cfg.pipeline)
    return frames_dir, cfg, ids, frames, gts, detector, segmenter, [frames_dir, gt_dir, *extra]


def cmd_sweep_tau(args) -> int:
    out = _out_dir(args.out)
    if args.pipeline not in (None, PipelineKind.LOCALIZER_SEGMENTER.value):
        raise InvalidConfigError("sweep-tau re-gates full-frame masks: use --pipeline localizer-segmenter")
    args.pipeline = PipelineKind.LOCALIZER_SEGMENTER.value
    taus = parse_floats(args.taus)
    frames_dir, cfg, ids, frames, gts, detector, segmenter, inputs = _sweep_inputs(args)
    records = [[b for b in detector.detect(f, fid) if b.confidence >= CAPTURE_FLOOR] for fid, f in zip(ids, frames)]
    raw = [binarize(segmenter.predict(f, fid)) for fid, f in zip(ids, frames)]
    rows = tau_sweep(records, raw, gts, taus, cfg.gate, cfg.temporal, CAPTURE_FLOOR, str(cfg.pipeline))
    write_rows_csv(out / "sweep_tau.csv", [r for _, r in rows], "tau", [t for t, _ in rows])
    write_json(out / "sweep_tau.json", {
        "rows": [{"tau": t, **r.as_dict()} for t, r in rows],
        "capture_floor": CAPTURE_FLOOR,
        "conventions": CONVENTIONS,
    })
    _sweep_svg(out / "sweep_tau.svg", [f"{t:g}" for t, _ in rows], [r for _, r in rows], "Threshold sweep", "tau")
    config = {**cfg.as_dict(), "taus": taus, "detector": args.detector, "segmenter": args.segmenter}
    write_manifest(out, "sweep-tau", config, inputs, CONVENTIONS)
    return 0


def cmd_sweep_hold(args) -> int:
    out = _out_dir(args.out)
    holds = parse_holds(args.holds)
    frames_dir, cfg, ids, frames, gts, detector, segmenter, inputs = _sweep_inputs(args)
    rows = hold_sweep(cfg, frames, gts, holds, detector, segmenter, ids)
    labels = [format_hold(h) for h, _ in rows]
    write_rows_csv(out / "sweep_hold.csv", [r for _, r in rows], "hold", labels)
    write_json(out / "sweep_hold.json", {
        "rows": [{"hold": lab, **r.as_dict()} for lab, (_, r) in zip(labels, rows)],
        "conventions": CONVENTIONS,
    })
    _sweep_svg(out / "sweep_hold.svg", labels, [r for _, r in rows], "Hold-duration sweep", "hold (frames)")
    config = {**cfg.as_dict(), "holds": labels, "detector": args.detector, "segmenter": args.segmenter}
    write_manifest(out, "sweep-hold", config, inputs, CONVENTIONS)
    return 0


def _series_from_run(run_dir: Path, fps_flag: Optional[float]) -> tuple[str, GawSeries, Path]:
    gaw_path = run_dir / "gaw.csv"
    if not gaw_path.is_file():
        raise MissingInputError(f"no gaw.csv in {run_dir}")
    manifest = json.loads((run_dir / MANIFEST).read_text()) if (run_dir / MANIFEST).is_file() else {}
    config = manifest.get("config", {})
    fps = fps_flag if fps_flag is not None else config.get("fps")
    if fps is None:
        log.warning("no fps for %s; ASSUMING %g frames/s", run_dir, DEFAULT_FPS)
        fps = DEFAULT_FPS
    excluded = []
    if (run_dir / "frames.csv").is_file():
        excluded = [i for i, row in enumerate(read_frames_csv(run_dir / "frames.csv")) if row.get("excluded") == "1"]
    series = read_gaw_csv(gaw_path, float(fps), excluded)
    return config.get("recording", run_dir.name), series, gaw_path


def cmd_features(args) -> int:
    out = _out_dir(args.out)
    items = []
    for p in args.inputs:
        path = Path(p)
        if path.is_dir():
            items.append(_series_from_run(path, args.fps))
        elif path.is_file():
            fps = args.fps
            if fps is None:
                log.warning("no --fps for %s; ASSUMING %g frames/s", path, DEFAULT_FPS)
                fps = DEFAULT_FPS
            items.append((path.stem if path.stem != "gaw" else path.parent.name, read_gaw_csv(path, fps), path))
        else:
            raise MissingInputError(f"no such waveform input: {path}")
    names = [n for n, _, _ in items]
    if len(set(names)) != len(names):
        raise InvalidInputError(f"duplicate recording names: {names}")
    table = {}
    for name, series, _ in items:
        payload = features_payload(name, series.fps, features(series))
        write_json(out / f"{name}.json", payload)
        table[name] = payload
    with (out / "features.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recording", "fps", *FEATURE_NAMES])
        for name in sorted(table):
            w.writerow([name, repr(float(table[name]["fps"])), *(repr(table[name][f]) for f in FEATURE_NAMES)])
    fps0 = items[0][1].fps
    (out / "gaw.svg").write_text(waveform_panels({n: s.areas.tolist() for n, s, _ in items}, fps0, "Glottal area waveforms"))
    write_manifest(out, "features", {"fps": args.fps, "recordings": sorted(names)}, [p for _, _, p in items], CONVENTIONS)
    return 0


def _read_feature_json(path: Path) -> tuple[str, FeatureVector]:
    if not path.is_file():
        raise MissingInputError(f"no such features file: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None
    missing = [f for f in FEATURE_NAMES if f not in data]
    if missing:
        raise InvalidInputError(f"{path}: missing features {missing}")
    name = str(data.get("recording") or path.stem)
    return name, FeatureVector(**{f: float(data[f]) for f in FEATURE_NAMES})


def cmd_compare(args) -> int:
    out = _out_dir(args.out)
    paths = []
    for p in args.features:
        path = Path(p)
        paths.extend(sorted(path.glob("*.json")) if path.is_dir() else [path])
    feats = {}
    for path in paths:
        if path.name == MANIFEST:
            continue
        name, fv = _read_feature_json(path)
        if name in feats:
            raise InvalidInputError(f"duplicate recording {name!r}")
        feats[name] = fv
    if not feats:
        raise MissingInputError("no feature files given")
    meta = read_meta_csv(args.meta)
    report = group_report(build_records(feats, meta), alpha=args.alpha, method=args.method)
    (out / "report.txt").write_text(format_report(report))
    write_report_csv(out / "report.csv", report)
    write_json(out / "sex_balance.json", {"table": report.sex_table, "fisher_p_two_sided": report.sex_fisher_p})
    write_manifest(out, "compare", {"alpha": args.alpha, "method": args.method, "n_recordings": len(feats)}, [*paths, Path(args.meta)], CONVENTIONS)
    return 0


def cmd_montage(args) -> int:
    out = _out_dir(args.out)
    ids, frames = load_frames(args.frames)
    results, _ = load_run_results(Path(args.pred))
    by_id = {r.frame_id: r for r in results}
    missing = [fid for fid in ids if fid not in by_id]
    if missing:
        raise MissingInputError(f"{args.pred}: no results for frames {missing[:5]}")
    image = annotate_montage(frames, [by_id[fid] for fid in ids], args.panels, args.columns)
    if not cv2.imwrite(str(out / "montage.png"), image):
        raise InvalidInputError("cannot write montage.png")
    write_manifest(out, "montage", {"panels": args.panels, "columns": args.columns}, [Path(args.frames), Path(args.pred)])
    return 0


# parser -------------------------------------------------------------------------

def _add_pipeline_flags(p: argparse.ArgumentParser, frames_nargs=None) -> None:
    p.add_argument("--frames", required=True, nargs=frames_nargs, help="directory of frame images (<frame_id>.png)")
    p.add_argument("--pipeline", choices=[k.value for k in PipelineKind], default=None,
                   help="inference pipeline (default localizer-segmenter)")
    p.add_argument("--tau", type=float, default=0.25, help="detector confidence threshold (default 0.25)")
    p.add_argument("--hold-frames", type=_hold, default=4, help="gate hold window in frames, or 'inf' (default 4)")
    p.add_argument("--drift-clamp-px", type=float, default=30.0, help="maximum box-centre jump in px (default 30)")
    p.add_argument("--fps", type=float, default=None, help="frame rate; defaults to meta.csv, then 4000 with a warning")
    p.add_argument("--frame-mode", action="store_true", help="no temporal state: reset the gate on every frame")
    p.add_argument("--detector", default=None, help="replay:FILE | model:FILE | oracle")
    p.add_argument("--segmenter", default=None, help="replay:DIR | model:FILE | otsu | motion | oracle")
    p.add_argument("--model-config", default=None, help="JSON io-spec for model: backends")
    p.add_argument("--truth", default=None, help="truth CSV for oracle backends (default <recording>/truth.csv)")
    p.add_argument("--gt", default=None, help="ground-truth mask directory")
    p.add_argument("--oracle-confidence", default="0.9", help="oracle detector confidence: a number or 'uniform'")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized oracle confidences")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glottisgate", description="Gated glottis segmentation and area-waveform analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic recording with analytic ground truth")
    p.add_argument("--out", required=True, help="output recording directory")
    p.add_argument("--n-frames", type=int, default=502, help="number of frames (default 502)")
    p.add_argument("--width", type=int, default=256, help="frame width in px")
    p.add_argument("--height", type=int, default=256, help="frame height in px")
    p.add_argument("--fps", type=float, default=None, help="frame rate (default 4000)")
    p.add_argument("--f-vib", type=float, default=200.0, help="vibration frequency in Hz")
    p.add_argument("--a-max", type=float, default=14.0, help="maximum horizontal semi-axis in px")
    p.add_argument("--b-max", type=float, default=40.0, help="maximum vertical semi-axis in px")
    p.add_argument("--glottis-intensity", type=int, default=40, help="glottis grey level")
    p.add_argument("--tissue-intensity", type=int, default=200, help="tissue grey level")
    p.add_argument("--noise-sigma", type=float, default=0.0, help="Gaussian noise std in grey levels")
    p.add_argument("--occlusion", action="append", default=[], metavar="START:LEN", help="occluded frame span (repeatable)")
    p.add_argument("--miss", action="append", default=[], metavar="START:LEN",
                   help="detector dropout span in detections.csv, glottis stays visible (repeatable)")
    p.add_argument("--oracle-confidence", default="0.9", help="confidence written to detections.csv: number or 'uniform'")
    p.add_argument("--seed", type=int, default=0, help="noise / confidence seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prep-labels", help="convert binary masks to normalized detector labels")
    p.add_argument("--masks", required=True, help="mask directory")
    p.add_argument("--out", required=True, help="label output directory")
    p.set_defaults(func=cmd_prep_labels)

    p = sub.add_parser("letterbox", help="letterbox images to a square canvas")
    p.add_argument("--images", required=True, help="image directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int, default=256, help="canvas side in px (default 256)")
    p.add_argument("--masks", action="store_true", help="treat inputs as binary masks (nearest neighbour)")
    p.set_defaults(func=cmd_letterbox)

    p = sub.add_parser("run", help="run a pipeline over one or more recordings")
    _add_pipeline_flags(p, frames_nargs="+")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--save-masks", action="store_true", help="also write per-frame output masks")
    p.add_argument("--workers", type=int, default=1, help="parallel recordings in batch mode")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score a run directory against ground-truth masks")
    p.add_argument("--pred", required=True, help="output directory of `run --save-masks`")
    p.add_argument("--gt", required=True, help="ground-truth mask directory")
    p.add_argument("--method", default=None, help="method label (default: the run's pipeline)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-tau", help="post-hoc detector threshold sweep")
    _add_pipeline_flags(p)
    p.add_argument("--taus", default=DEFAULT_TAUS, help="comma-separated thresholds")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep_tau)

    p = sub.add_parser("sweep-hold", help="gate hold-duration sweep")
    _add_pipeline_flags(p)
    p.add_argument("--holds", default="0..20,inf", help="hold values, e.g. '0..20,inf'")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep_hold)

    p = sub.add_parser("features", help="kinematic features from area waveforms")
    p.add_argument("inputs", nargs="+", help="run output directories or gaw.csv files")
    p.add_argument("--fps", type=float, default=None, help="frame rate (overrides the run manifest)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("compare", help="Healthy vs Pathological group report")
    p.add_argument("--features", required=True, nargs="+", help="feature JSON files or directories of them")
    p.add_argument("--meta", required=True, help="CSV with patient_id,status,sex")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    p.add_argument("--method", choices=["asymptotic", "exact"], default="asymptotic", help="Mann-Whitney p-value method")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("montage", help="grid of annotated frames")
    p.add_argument("--frames", required=True, help="frame directory")
    p.add_argument("--pred", required=True, help="output directory of `run --save-masks`")
    p.add_argument("--panels", type=int, default=12, help="number of panels (default 12)")
    p.add_argument("--columns", type=int, default=4, help="panels per row (default 4)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_montage)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GlottisGateError as exc:
        log.error("%s", exc)
        if exc.exit_code == 4:
            log.error("hint: use --detector replay:FILE / --segmenter replay:DIR to run without a model runtime")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
