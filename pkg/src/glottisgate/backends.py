"""Detector and segmenter backends.

Detectors map a frame to a list of :class:`~glottisgate.core.BBox` sorted by
confidence (highest first). Segmenters map a frame, or a crop patch together
with the ``region`` it was cut from, to a per-pixel probability map in [0, 1].
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Protocol, Sequence

import numpy as np

from . import kernels
from .core import (
    BBox,
    Frame,
    Mask,
    as_frame,
    letterbox,
    list_images,
    read_mask,
    resize_frame,
    resize_mask,
)
from .errors import (
    FeatureDisabledError,
    InvalidConfigError,
    InvalidInputError,
    InvalidStateError,
    MissingInputError,
    MissingPredictionError,
)

log = logging.getLogger(__name__)

CAPTURE_FLOOR = 0.001
SEGMENTER_THRESHOLD = 0.5
DETECTION_FIELDS = ["frame_id", "x0", "y0", "x1", "y1", "confidence"]


class Detector(Protocol):
    def detect(self, frame: Frame, frame_id: int) -> list[BBox]: ...


class Segmenter(Protocol):
    def predict(self, image: Frame, frame_id: int, region: Optional[BBox] = None) -> np.ndarray: ...


def binarize(prob: np.ndarray, threshold: float = SEGMENTER_THRESHOLD) -> Mask:
    return np.asarray(prob) >= threshold


def sort_detections(dets: Iterable[BBox]) -> list[BBox]:
    # stable: equal confidences keep input order
    return sorted(dets, key=lambda b: -b.confidence)


def top_detection(dets: Sequence[BBox], tau: float) -> Optional[BBox]:
    """Highest-confidence box at or above ``tau``; single-glottis assumption."""
    for det in dets:
        if det.confidence >= tau:
            return det
    return None


def _region_from_full(mask: Mask, image_shape, region: Optional[BBox]) -> Mask:
    """Crop a full-frame mask to ``region`` and resize it to the patch shape."""
    if region is None:
        return mask
    sub = mask[region.y0:region.y1, region.x0:region.x1]
    h, w = image_shape
    return resize_mask(sub, w, h)


# Otsu -------------------------------------------------------------------------

def otsu_level(histogram) -> int:
    """Level maximizing between-class variance, classes ``<= level`` and ``> level``.

    Ties go to the lowest level. A histogram with a single occupied bin
    returns that bin.
    """
    hist = np.asarray(histogram, dtype=np.int64)
    if hist.shape != (256,):
        raise InvalidInputError(f"histogram must have 256 bins, got {hist.shape}")
    if (hist < 0).any():
        raise InvalidInputError("histogram counts must be non-negative")
    level = kernels.otsu_level(hist)
    if level < 0:
        raise InvalidInputError("empty histogram")
    return int(level)


def otsu_segment(frame, box: BBox) -> Mask:
    """Dark-class Otsu segmentation restricted to ``box``."""
    frame = as_frame(frame)
    h, w = frame.shape
    box.validate(w, h)
    hist = kernels.box_histogram(frame, box.x0, box.y0, box.x1, box.y1)
    out = np.zeros((h, w), dtype=bool)
    if np.count_nonzero(hist) <= 1:
        # a zero-contrast region carries no glottis evidence
        return out
    level = kernels.otsu_level(hist)
    out[box.y0:box.y1, box.x0:box.x1] = frame[box.y0:box.y1, box.x0:box.x1] <= level
    return out


# motion baseline ----------------------------------------------------------------

@dataclass
class MotionTrackerState:
    background: np.ndarray
    frames_seen: int
    init_frames: int


def motion_init(frames: Sequence[Frame]) -> MotionTrackerState:
    if len(frames) < 1:
        raise InvalidInputError("motion tracker needs at least one initialization frame")
    stack = np.stack([as_frame(f).astype(np.float64) for f in frames])
    return MotionTrackerState(stack.mean(axis=0), len(frames), len(frames))


def motion_segment(
    state: Optional[MotionTrackerState],
    frame,
    box: Optional[BBox],
    alpha: float = 0.05,
    delta: float = 25.0,
) -> tuple[MotionTrackerState, Mask]:
    """Pixels inside ``box`` darker than the background by ``delta`` or more.

    The background is updated as an exponential running mean on every pixel
    not classified as glottis.
    """
    if state is None:
        raise InvalidStateError("motion_segment called before motion_init")
    frame = as_frame(frame)
    if frame.shape != state.background.shape:
        raise InvalidInputError("frame shape differs from the tracker background")
    mask = np.zeros(frame.shape, dtype=bool)
    if box is not None:
        sl = (slice(box.y0, box.y1), slice(box.x0, box.x1))
        mask[sl] = (state.background[sl] - frame[sl]) >= delta
    bg = state.background.copy()
    keep = ~mask
    bg[keep] = (1.0 - alpha) * bg[keep] + alpha * frame[keep]
    return MotionTrackerState(bg, state.frames_seen + 1, state.init_frames), mask


class MotionTracker:
    """Running-background tracker; the first ``init_frames`` frames only initialize."""

    def __init__(self, init_frames: int = 10, alpha: float = 0.05, delta: float = 25.0):
        if init_frames < 1:
            raise InvalidConfigError("init_frames must be >= 1")
        self.init_frames = init_frames
        self.alpha = alpha
        self.delta = delta
        self.reset()

    def reset(self) -> None:
        self._buffer: list[Frame] = []
        self.state: Optional[MotionTrackerState] = None

    @property
    def initializing(self) -> bool:
        return self.state is None

    def feed(self, frame: Frame, box: Optional[BBox]) -> tuple[Mask, bool]:
        """Returns (mask, excluded); excluded frames went into initialization."""
        frame = as_frame(frame)
        if self.state is None:
            self._buffer.append(frame)
            if len(self._buffer) == self.init_frames:
                self.state = motion_init(self._buffer)
                self._buffer = []
            return np.zeros(frame.shape, dtype=bool), True
        self.state, mask = motion_segment(self.state, frame, box, self.alpha, self.delta)
        return mask, False


# replay -----------------------------------------------------------------------

def read_detection_records(path) -> dict[int, list[BBox]]:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"no such detection records file: {path}")
    records: dict[int, list[BBox]] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(DETECTION_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise InvalidInputError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            try:
                fid = int(row["frame_id"])
                box = BBox(
                    int(row["x0"]), int(row["y0"]), int(row["x1"]), int(row["y1"]),
                    float(row["confidence"]),
                )
            except ValueError as exc:
                raise InvalidInputError(f"{path}: bad row {row}: {exc}") from None
            if not 0.0 <= box.confidence <= 1.0 or box.x1 <= box.x0 or box.y1 <= box.y0:
                raise InvalidInputError(f"{path}: invalid detection {row}")
            records.setdefault(fid, []).append(box)
    return {fid: sort_detections(dets) for fid, dets in records.items()}


def write_detection_records(path, records: Mapping[int, Sequence[BBox]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DETECTION_FIELDS)
        for fid in sorted(records):
            for b in records[fid]:
                writer.writerow([fid, b.x0, b.y0, b.x1, b.y1, repr(float(b.confidence))])


class ReplayDetector:
    """Returns stored detections; frames without rows have no detection."""

    def __init__(self, records: Mapping[int, Sequence[BBox]]):
        self.records = {int(k): sort_detections(v) for k, v in records.items()}

    @classmethod
    def from_csv(cls, path) -> "ReplayDetector":
        return cls(read_detection_records(path))

    def detect(self, frame: Frame, frame_id: int) -> list[BBox]:
        return list(self.records.get(frame_id, ()))


class ReplaySegmenter:
    """Returns stored full-frame masks, read lazily from ``<frame_id>.png`` files."""

    def __init__(self, masks: Mapping[int, object]):
        self._masks = dict(masks)

    @classmethod
    def from_dir(cls, directory) -> "ReplaySegmenter":
        return cls({fid: path for fid, path in list_images(directory)})

    def mask(self, frame_id: int) -> Mask:
        try:
            item = self._masks[frame_id]
        except KeyError:
            raise MissingPredictionError(f"no stored mask for frame {frame_id}") from None
        if isinstance(item, (str, Path)):
            item = read_mask(item)
            self._masks[frame_id] = item
        return item

    def predict(self, image: Frame, frame_id: int, region: Optional[BBox] = None) -> np.ndarray:
        full = self.mask(frame_id)
        return _region_from_full(full, np.asarray(image).shape, region).astype(np.float32)


class CachingSegmenter:
    """Memoizes a deterministic segmenter by (frame id, region)."""

    def __init__(self, inner: Segmenter):
        self.inner = inner
        self._cache: dict = {}

    def predict(self, image, frame_id, region=None):
        key = (frame_id, None if region is None else region.as_tuple())
        if key not in self._cache:
            self._cache[key] = self.inner.predict(image, frame_id, region)
        return self._cache[key]


# model adapter ----------------------------------------------------------------

@dataclass
class IOSpec:
    input_name: Optional[str] = None
    output_name: Optional[str] = None
    input_size: int = 256
    kind: str = "segmenter"  # or "detector"
    letterbox: bool = True
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, data: Mapping) -> "IOSpec":
        known = {k: data[k] for k in ("input_name", "output_name", "input_size", "kind", "letterbox") if k in data}
        extra = {k: v for k, v in data.items() if k not in known}
        spec = cls(**known, extra=extra)
        if spec.kind not in ("segmenter", "detector"):
            raise InvalidConfigError(f"io_spec kind must be 'segmenter' or 'detector', got {spec.kind!r}")
        return spec


def _load_session(model_file):
    try:
        import onnxruntime as ort
    except ImportError:
        raise FeatureDisabledError(
            "model backends need the optional 'onnxruntime' package; "
            "install it or use replay:FILE / replay:DIR backends instead"
        ) from None
    path = Path(model_file)
    if not path.is_file():
        raise MissingInputError(f"no such model file: {path}")
    opts = ort.SessionOptions()
    opts.intra_op_num_threads = 1
    opts.inter_op_num_threads = 1
    return ort.InferenceSession(str(path), sess_options=opts, providers=["CPUExecutionProvider"])


class _OnnxBase:
    def __init__(self, session, spec: IOSpec):
        self.session = session
        self.spec = spec
        self.input_name = spec.input_name or session.get_inputs()[0].name
        self.output_name = spec.output_name or session.get_outputs()[0].name

    def _prepare(self, image: Frame):
        image = as_frame(image)
        size = self.spec.input_size
        if self.spec.letterbox:
            canvas, tf = letterbox(image, size)
        else:
            canvas, tf = resize_frame(image, size, size), None
        tensor = (canvas.astype(np.float32) / 255.0)[None, None]
        return tensor, tf

    def _run(self, tensor):
        return np.asarray(self.session.run([self.output_name], {self.input_name: tensor})[0])


class OnnxSegmenter(_OnnxBase):
    """Single-channel probability output of shape (1, 1, S, S) or (S, S)."""

    def predict(self, image: Frame, frame_id: int, region: Optional[BBox] = None) -> np.ndarray:
        image = as_frame(image)
        tensor, tf = self._prepare(image)
        prob = self._run(tensor).reshape(self.spec.input_size, self.spec.input_size).astype(np.float32)
        h, w = image.shape
        if tf is not None:
            cw, ch = tf.content_size
            prob = prob[tf.pad_top:tf.pad_top + ch, tf.pad_left:tf.pad_left + cw]
        if prob.shape != (h, w):
            prob = resize_frame(prob, w, h)
        return np.clip(prob, 0.0, 1.0)


class OnnxDetector(_OnnxBase):
    """Output rows ``(x0, y0, x1, y1, confidence)`` in model-input pixels."""

    def __init__(self, session, spec: IOSpec, floor: float = CAPTURE_FLOOR):
        super().__init__(session, spec)
        self.floor = floor

    def detect(self, frame: Frame, frame_id: int) -> list[BBox]:
        frame = as_frame(frame)
        tensor, tf = self._prepare(frame)
        rows = self._run(tensor).reshape(-1, 5)
        h, w = frame.shape
        dets = []
        for x0, y0, x1, y1, conf in rows.tolist():
            if conf < self.floor:
                continue
            conf = float(min(max(conf, 0.0), 1.0))
            if tf is not None:
                (x0, y0), (x1, y1) = tf.inverse(x0, y0), tf.inverse(x1, y1)
            else:
                sx, sy = w / self.spec.input_size, h / self.spec.input_size
                x0, x1, y0, y1 = x0 * sx, x1 * sx, y0 * sy, y1 * sy
            bx0, by0 = max(0, int(np.floor(x0))), max(0, int(np.floor(y0)))
            bx1, by1 = min(w, int(np.ceil(x1))), min(h, int(np.ceil(y1)))
            if bx1 > bx0 and by1 > by0:
                dets.append(BBox(bx0, by0, bx1, by1, conf))
        return sort_detections(dets)


def model_backend(model_file, io_spec):
    spec = io_spec if isinstance(io_spec, IOSpec) else IOSpec.from_mapping(io_spec or {})
    session = _load_session(model_file)
    if spec.kind == "detector":
        return OnnxDetector(session, spec)
    return OnnxSegmenter(session, spec)
