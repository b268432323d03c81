"""Detection-gated glottal segmentation and glottal area waveform analysis."""

from .core import (
    BBox,
    ConfusionCounts,
    LetterboxTransform,
    bbox_to_label_record,
    confusion_counts,
    crop_resize,
    letterbox,
    mask_to_bbox,
    paste_back,
    restrict_mask,
)
from .gate import GateConfig, GateOutcome, GateState, GateStatus, clamp_drift, gate_step, reset
from .kernels import BACKEND as KERNEL_BACKEND
from .pipelines import FrameResult, Pipeline, PipelineKind, RunConfig, process_video

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "ConfusionCounts",
    "FrameResult",
    "GateConfig",
    "GateOutcome",
    "GateState",
    "GateStatus",
    "KERNEL_BACKEND",
    "LetterboxTransform",
    "Pipeline",
    "PipelineKind",
    "RunConfig",
    "bbox_to_label_record",
    "clamp_drift",
    "confusion_counts",
    "crop_resize",
    "gate_step",
    "letterbox",
    "mask_to_bbox",
    "paste_back",
    "process_video",
    "reset",
    "restrict_mask",
]
