"""The five inference pipelines and whole-video processing."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import cv2
import numpy as np

from .backends import (
    CAPTURE_FLOOR,
    Detector,
    MotionTracker,
    Segmenter,
    binarize,
    otsu_segment,
    top_detection,
)
from .core import BBox, Frame, Mask, as_frame, crop_resize, paste_back
from .errors import InvalidConfigError, InvalidInputError
from .gate import GateConfig, GateStatus, TemporalGate


class PipelineKind(str, enum.Enum):
    SEGMENTER_ONLY = "segmenter-only"
    LOCALIZER_SEGMENTER = "localizer-segmenter"
    LOCALIZER_CROP_SEGMENTER = "localizer-crop-segmenter"
    MOTION = "motion"
    OTSU = "otsu"

    def __str__(self) -> str:
        return self.value

    @property
    def gated(self) -> bool:
        return self is not PipelineKind.SEGMENTER_ONLY

    @property
    def needs_segmenter(self) -> bool:
        return self in (
            PipelineKind.SEGMENTER_ONLY,
            PipelineKind.LOCALIZER_SEGMENTER,
            PipelineKind.LOCALIZER_CROP_SEGMENTER,
        )


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineKind = PipelineKind.LOCALIZER_SEGMENTER
    tau: float = 0.25
    gate: GateConfig = field(default_factory=GateConfig)
    fps: float = 4000.0
    temporal: bool = True
    crop_pad: int = 8
    crop_size: int = 256
    motion_init_frames: int = 10
    motion_alpha: float = 0.05
    motion_delta: float = 25.0

    def __post_init__(self):
        object.__setattr__(self, "pipeline", PipelineKind(self.pipeline))
        if not 0.0 <= self.tau <= 1.0:
            raise InvalidConfigError(f"tau must lie in [0, 1], got {self.tau}")
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise InvalidConfigError(f"fps must be positive, got {self.fps}")
        if self.crop_pad < 0 or self.crop_size < 1:
            raise InvalidConfigError("crop_pad must be >= 0 and crop_size >= 1")

    def as_dict(self) -> dict:
        return {
            "pipeline": str(self.pipeline),
            "tau": self.tau,
            "hold_window": "inf" if self.gate.hold_window == math.inf else int(self.gate.hold_window),
            "drift_clamp_px": self.gate.drift_clamp,
            "fps": self.fps,
            "temporal": self.temporal,
            "crop_pad": self.crop_pad,
            "crop_size": self.crop_size,
            "motion_init_frames": self.motion_init_frames,
            "motion_alpha": self.motion_alpha,
            "motion_delta": self.motion_delta,
        }


@dataclass
class FrameResult:
    frame_id: int
    mask: Mask
    detection: Optional[BBox]
    gate_status: GateStatus
    area_px2: int
    excluded: bool = False
    active_box: Optional[BBox] = None


class Pipeline:
    """One pipeline instance per video; holds gate and tracker state."""

    def __init__(self, cfg: RunConfig, detector: Optional[Detector] = None, segmenter: Optional[Segmenter] = None):
        self.cfg = cfg
        kind = cfg.pipeline
        if kind.gated and detector is None:
            raise InvalidConfigError(f"pipeline {kind} needs a detector")
        if kind.needs_segmenter and segmenter is None:
            raise InvalidConfigError(f"pipeline {kind} needs a segmenter")
        self.detector = detector
        self.segmenter = segmenter
        self.gate = TemporalGate(cfg.gate)
        self.tracker = (
            MotionTracker(cfg.motion_init_frames, cfg.motion_alpha, cfg.motion_delta)
            if kind is PipelineKind.MOTION
            else None
        )
        self._shape: Optional[tuple[int, int]] = None

    def reset(self) -> None:
        self.gate.reset()
        if self.tracker is not None:
            self.tracker.reset()
        self._shape = None

    def process_frame(self, frame, frame_id: int) -> FrameResult:
        frame = as_frame(frame)
        if self._shape is None:
            self._shape = frame.shape
        elif frame.shape != self._shape:
            raise InvalidInputError(
                f"frame {frame_id} has shape {frame.shape}, video started with {self._shape}"
            )
        cfg, kind = self.cfg, self.cfg.pipeline

        if kind is PipelineKind.SEGMENTER_ONLY:
            mask = binarize(self.segmenter.predict(frame, frame_id))
            return _result(frame_id, mask, None, GateStatus.UNGATED, None)

        detection = top_detection(self.detector.detect(frame, frame_id), cfg.tau)
        if not cfg.temporal:
            self.gate.reset()

        if kind is PipelineKind.LOCALIZER_SEGMENTER:
            raw = binarize(self.segmenter.predict(frame, frame_id))
            outcome = self.gate.step(detection, raw)
            return _result(frame_id, outcome.gated_mask, detection, outcome.status, outcome.active_box)

        status, box = self.gate.advance(detection, frame.shape)
        h, w = frame.shape

        if kind is PipelineKind.LOCALIZER_CROP_SEGMENTER:
            if box is None:
                mask = np.zeros((h, w), dtype=bool)
            else:
                patch, crop_rect = crop_resize(frame, box, cfg.crop_pad, cfg.crop_size)
                patch_mask = binarize(self.segmenter.predict(patch, frame_id, region=crop_rect))
                mask = paste_back(patch_mask, crop_rect, w, h)
            return _result(frame_id, mask, detection, status, box)

        if kind is PipelineKind.OTSU:
            mask = otsu_segment(frame, box) if box is not None else np.zeros((h, w), dtype=bool)
            return _result(frame_id, mask, detection, status, box)

        # motion: the tracker sees every frame so its background keeps updating
        mask, excluded = self.tracker.feed(frame, box)
        return _result(frame_id, mask, detection, status, box, excluded)

    def run(self, frames: Iterable, frame_ids: Optional[Sequence[int]] = None) -> list[FrameResult]:
        self.reset()
        frames = list(frames)
        if not frames:
            raise InvalidInputError("video has no frames")
        ids = list(frame_ids) if frame_ids is not None else list(range(len(frames)))
        if len(ids) != len(frames):
            raise InvalidInputError("frame_ids and frames differ in length")
        return [self.process_frame(f, i) for i, f in zip(ids, frames)]


def _result(frame_id, mask, detection, status, box, excluded=False) -> FrameResult:
    return FrameResult(frame_id, mask, detection, status, int(np.count_nonzero(mask)), excluded, box)


def process_video(
    cfg: RunConfig,
    frames: Iterable,
    detector: Optional[Detector] = None,
    segmenter: Optional[Segmenter] = None,
    frame_ids: Optional[Sequence[int]] = None,
) -> list[FrameResult]:
    return Pipeline(cfg, detector, segmenter).run(frames, frame_ids)


# montage ----------------------------------------------------------------------

GREEN = (0, 255, 0)
YELLOW = (0, 255, 255)  # BGR


def panel_indices(n_frames: int, n_panels: int = 12) -> list[int]:
    if n_panels < 1 or n_panels > n_frames:
        raise InvalidInputError(f"cannot pick {n_panels} panels from {n_frames} frames")
    if n_panels == 1:
        return [0]
    return [int(math.floor(i * (n_frames - 1) / (n_panels - 1) + 0.5)) for i in range(n_panels)]


def annotate_frame(frame: Frame, result: FrameResult, alpha: float = 0.5) -> np.ndarray:
    img = cv2.cvtColor(as_frame(frame), cv2.COLOR_GRAY2BGR)
    if result.mask.any():
        overlay = img.copy()
        overlay[result.mask] = GREEN
        img = cv2.addWeighted(overlay, alpha, img, 1.0 - alpha, 0.0)
    if result.active_box is not None:
        b = result.active_box
        cv2.rectangle(img, (b.x0, b.y0), (b.x1 - 1, b.y1 - 1), YELLOW, 1)
    cv2.putText(img, str(result.area_px2), (4, 16), cv2.FONT_HERSHEY_SIMPLEX, 0.5, (255, 255, 255), 1, cv2.LINE_8)
    return img


def annotate_montage(frames: Sequence[Frame], results: Sequence[FrameResult], n_panels: int = 12, columns: int = 4) -> np.ndarray:
    """Grid of annotated, evenly spaced frames as a BGR ``uint8`` image."""
    if len(frames) != len(results):
        raise InvalidInputError("frames and results differ in length")
    idx = panel_indices(len(frames), n_panels)
    panels = [annotate_frame(frames[i], results[i]) for i in idx]
    cols = min(columns, len(panels))
    rows = math.ceil(len(panels) / cols)
    ph, pw = panels[0].shape[:2]
    grid = np.zeros((rows * ph, cols * pw, 3), dtype=np.uint8)
    for k, panel in enumerate(panels):
        r, c = divmod(k, cols)
        grid[r * ph:(r + 1) * ph, c * pw:(c + 1) * pw] = panel
    return grid


__all__ = [
    "CAPTURE_FLOOR",
    "FrameResult",
    "Pipeline",
    "PipelineKind",
    "RunConfig",
    "annotate_montage",
    "panel_indices",
    "process_video",
]
