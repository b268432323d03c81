"""Segmentation scores, dataset aggregation and post-processing sweeps.

Frames where both prediction and ground truth are empty score DSC = IoU = 1,
so gated pipelines are credited for correctly reporting absence.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .backends import CAPTURE_FLOOR, CachingSegmenter, ReplayDetector, top_detection
from .core import BBox, ConfusionCounts, Mask, confusion_counts
from .errors import InvalidConfigError, InvalidInputError
from .gate import GateConfig, GateStatus, TemporalGate
from .pipelines import FrameResult, Pipeline, RunConfig

log = logging.getLogger(__name__)

EMPTY_FRAME_CONVENTION = "DSC = IoU = 1.0 when prediction and ground truth are both empty"
PASS_THRESHOLD = 0.5


def dsc(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    return 1.0 if denom == 0 else 2.0 * c.tp / denom


def iou(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp + c.fn
    return 1.0 if denom == 0 else c.tp / denom


@dataclass(frozen=True)
class FrameScore:
    frame_id: int
    dsc: float
    iou: float
    detected: bool
    active: bool


@dataclass(frozen=True)
class EvalRow:
    method: str
    det_recall: float
    mean_dsc: float
    mean_iou: float
    pass_rate_dsc_ge_05: float
    n_frames: int
    n_excluded: int
    active_rate: float

    def as_dict(self) -> dict:
        return asdict(self)


def score_frames(results: Sequence[FrameResult], gts: Sequence[Mask]) -> list[Optional[FrameScore]]:
    """Per-frame scores; excluded frames map to None."""
    if len(results) != len(gts):
        raise InvalidInputError(f"{len(results)} results but {len(gts)} ground-truth masks")
    scores: list[Optional[FrameScore]] = []
    for res, gt in zip(results, gts):
        if res.excluded:
            scores.append(None)
            continue
        c = confusion_counts(res.mask, gt)
        scores.append(
            FrameScore(
                res.frame_id,
                dsc(c),
                iou(c),
                res.detection is not None,
                res.gate_status is not GateStatus.ZEROED,
            )
        )
    return scores


def aggregate(scores: Sequence[Optional[FrameScore]], method: str = "", ungated: bool = False) -> EvalRow:
    kept = [s for s in scores if s is not None]
    n_excluded = len(scores) - len(kept)
    if not kept:
        raise InvalidInputError("no frames left to evaluate after exclusions")
    n = len(kept)
    d = math.fsum(s.dsc for s in kept) / n
    j = math.fsum(s.iou for s in kept) / n
    passed = sum(1 for s in kept if s.dsc >= PASS_THRESHOLD) / n
    if ungated:
        recall, active = 1.0, 1.0
    else:
        recall = sum(1 for s in kept if s.detected) / n
        active = sum(1 for s in kept if s.active) / n
    return EvalRow(method, recall, d, j, passed, n, n_excluded, active)


def evaluate(results: Sequence[FrameResult], gts: Sequence[Mask], method: str = "") -> EvalRow:
    ungated = bool(results) and all(r.gate_status is GateStatus.UNGATED for r in results)
    return aggregate(score_frames(results, gts), method, ungated)


# sweeps -----------------------------------------------------------------------

def tau_sweep(
    records: Sequence[Sequence[BBox]],
    raw_masks: Sequence[Mask],
    gts: Sequence[Mask],
    taus: Sequence[float],
    gate: GateConfig | None = None,
    temporal: bool = True,
    capture_floor: float = CAPTURE_FLOOR,
    method: str = "localizer-segmenter",
) -> list[tuple[float, EvalRow]]:
    """Re-gate stored detections at each threshold without re-running inference.

    ``records[i]`` holds every detection captured for frame ``i`` (at the
    capture floor) and ``raw_masks[i]`` the binarized full-frame segmenter
    output for the same frame.
    """
    if not (len(records) == len(raw_masks) == len(gts)):
        raise InvalidInputError("records, raw masks and ground truth must be aligned")
    gate = gate or GateConfig()
    ordered = [sorted(dets, key=lambda b: -b.confidence) for dets in records]
    out = []
    for tau in taus:
        if tau < capture_floor:
            log.warning("tau %.4g is below the capture floor %.4g; results saturate", tau, capture_floor)
        g = TemporalGate(gate)
        results = []
        for i, (dets, raw) in enumerate(zip(ordered, raw_masks)):
            det = top_detection(dets, tau)
            if not temporal:
                g.reset()
            o = g.step(det, raw)
            results.append(FrameResult(i, o.gated_mask, det, o.status, int(np.count_nonzero(o.gated_mask)), False, o.active_box))
        out.append((tau, evaluate(results, gts, method)))
    return out


def hold_window_for(hold: float) -> float:
    """Sweep value to gate window; 0 (no hold) behaves as per-frame gating."""
    if hold == math.inf:
        return math.inf
    if hold < 0 or not float(hold).is_integer():
        raise InvalidConfigError(f"hold values must be non-negative integers or inf, got {hold}")
    return max(1, int(hold))


def hold_sweep(
    cfg: RunConfig,
    frames: Sequence,
    gts: Sequence[Mask],
    holds: Sequence[float],
    detector,
    segmenter=None,
    frame_ids: Optional[Sequence[int]] = None,
) -> list[tuple[float, EvalRow]]:
    """Re-run gating per hold value; detector and segmenter outputs are cached."""
    if not cfg.temporal:
        raise InvalidConfigError("hold sweeps need video (temporal) mode")
    frames = list(frames)
    ids = list(frame_ids) if frame_ids is not None else list(range(len(frames)))
    cached_det = ReplayDetector({fid: detector.detect(f, fid) for fid, f in zip(ids, frames)})
    cached_seg = CachingSegmenter(segmenter) if segmenter is not None else None
    out = []
    for hold in holds:
        gate = GateConfig(hold_window_for(hold), cfg.gate.drift_clamp)
        run_cfg = RunConfig(**{**_cfg_kwargs(cfg), "gate": gate})
        results = Pipeline(run_cfg, cached_det, cached_seg).run(frames, ids)
        out.append((hold, evaluate(results, gts, f"{cfg.pipeline}@hold={format_hold(hold)}")))
    return out


def _cfg_kwargs(cfg: RunConfig) -> dict:
    return {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}


def format_hold(hold: float) -> str:
    return "inf" if hold == math.inf else str(int(hold))


def parse_holds(text: str) -> list[float]:
    """Parse ``"0..20,inf"`` style lists."""
    values: list[float] = []
    for part in text.split(","):
        part = part.strip().lower()
        if not part:
            continue
        if part in ("inf", "infinity", "∞"):
            values.append(math.inf)
            continue
        m = re.fullmatch(r"(\d+)\.\.(\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise InvalidConfigError(f"empty range {part}")
            values.extend(range(lo, hi + 1))
        elif part.isdigit():
            values.append(int(part))
        else:
            raise InvalidConfigError(f"cannot parse hold value {part!r}")
    return values


def parse_floats(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise InvalidConfigError(str(exc)) from None


# output -----------------------------------------------------------------------

ROW_FIELDS = list(EvalRow.__dataclass_fields__)


def write_rows_csv(path, rows: Sequence[EvalRow], key: Optional[str] = None, keys: Sequence = ()) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(([key] if key else []) + ROW_FIELDS)
        for i, row in enumerate(rows):
            d = row.as_dict()
            w.writerow(([_cell(keys[i])] if key else []) + [_cell(d[f]) for f in ROW_FIELDS])


def _cell(v):
    if isinstance(v, float):
        return "inf" if v == math.inf else repr(v)
    return v


def write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def json_float(v: float):
    return "inf" if v == math.inf else v
