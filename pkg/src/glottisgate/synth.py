"""Synthetic high-speed video with analytic ground truth.

Each frame shows uniform tissue with a dark elliptical glottis whose
semi-axes follow ``(a_max, b_max) * max(0, sin(2 pi f_vib t / fps))``.
Occluded frames show tissue only. The oracle backends built from the truth
make every pipeline stage checkable against exact expectations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import cv2
import numpy as np

from .backends import _region_from_full
from .core import BBox, Frame, Mask, mask_to_bbox
from .errors import InvalidConfigError, InvalidInputError, MissingInputError


@dataclass(frozen=True)
class SynthConfig:
    width: int = 256
    height: int = 256
    n_frames: int = 502
    fps: float = 4000.0
    f_vib: float = 200.0
    a_max: float = 14.0
    b_max: float = 40.0
    center: tuple[float, float] = (128.0, 128.0)
    glottis_intensity: int = 40
    tissue_intensity: int = 200
    noise_sigma: float = 0.0
    occlusions: tuple[tuple[int, int], ...] = ()
    seed: int = 0

    def validate(self) -> None:
        if self.width < 1 or self.height < 1 or self.n_frames < 1:
            raise InvalidConfigError("width, height and n_frames must be >= 1")
        if not self.fps > 0:
            raise InvalidConfigError("fps must be positive")
        if not 0 <= self.f_vib < self.fps / 2:
            raise InvalidConfigError(f"f_vib must lie in [0, fps/2), got {self.f_vib}")
        if self.a_max < 0 or self.b_max < 0 or self.noise_sigma < 0:
            raise InvalidConfigError("semi-axes and noise_sigma must be non-negative")
        for v in (self.glottis_intensity, self.tissue_intensity):
            if not 0 <= v <= 255:
                raise InvalidConfigError("intensities must lie in 0..255")
        if abs(self.glottis_intensity - self.tissue_intensity) < max(1.0, 2 * self.noise_sigma):
            raise InvalidConfigError("glottis and tissue intensities must differ by at least 2 * noise_sigma")
        for start, length in self.occlusions:
            if start < 0 or length < 0:
                raise InvalidConfigError("occlusions need non-negative start and length")


@dataclass
class SynthTruth:
    masks: list[Mask]
    areas: np.ndarray
    boxes: list[Optional[BBox]]
    occluded: np.ndarray
    fps: float

    def __len__(self) -> int:
        return len(self.masks)


def opening(cfg: SynthConfig, t: int) -> float:
    s = math.sin(2.0 * math.pi * cfg.f_vib * t / cfg.fps)
    # zero crossings come out as +-1e-14 and would draw a one-pixel glottis
    return s if s > 1e-9 else 0.0


def ellipse_mask(width: int, height: int, center, a: float, b: float) -> Mask:
    """Pixels whose centres fall inside the axis-aligned ellipse."""
    if a <= 0 or b <= 0:
        return np.zeros((height, width), dtype=bool)
    cx, cy = center
    ys, xs = np.ogrid[:height, :width]
    return ((xs - cx) / a) ** 2 + ((ys - cy) / b) ** 2 <= 1.0


def occluded_frames(cfg: SynthConfig) -> np.ndarray:
    occ = np.zeros(cfg.n_frames, dtype=bool)
    for start, length in cfg.occlusions:
        occ[start:start + length] = True
    return occ


def generate(cfg: SynthConfig) -> tuple[list[Frame], SynthTruth]:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    occ = occluded_frames(cfg)
    frames, masks, boxes = [], [], []
    for t in range(cfg.n_frames):
        s = opening(cfg, t)
        mask = ellipse_mask(cfg.width, cfg.height, cfg.center, cfg.a_max * s, cfg.b_max * s)
        if occ[t]:
            mask = np.zeros_like(mask)
        img = np.full((cfg.height, cfg.width), float(cfg.tissue_intensity))
        img[mask] = cfg.glottis_intensity
        if cfg.noise_sigma > 0:
            img += rng.normal(0.0, cfg.noise_sigma, img.shape)
        frames.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
        masks.append(mask)
        boxes.append(mask_to_bbox(mask))
    areas = np.array([int(m.sum()) for m in masks], dtype=np.int64)
    return frames, SynthTruth(masks, areas, boxes, occ, cfg.fps)


# oracle backends ----------------------------------------------------------------

def constant_confidence(value: float = 0.9) -> Callable[[int], float]:
    return lambda frame_id: value


def uniform_confidence(seed: int = 0, low: float = 0.0, high: float = 1.0) -> Callable[[int], float]:
    """Deterministic per-frame draw from U(low, high), independent of call order."""
    def conf(frame_id: int) -> float:
        rng = np.random.default_rng([seed, frame_id])
        return float(rng.uniform(low, high))
    return conf


class OracleDetector:
    """Fires with the ground-truth box unless the frame is missed, occluded or closed."""

    def __init__(
        self,
        truth: SynthTruth,
        miss_pattern: Iterable[int] = (),
        confidence_fn: Optional[Callable[[int], float]] = None,
    ):
        self.truth = truth
        self.misses = frozenset(int(i) for i in miss_pattern)
        self.confidence_fn = confidence_fn or constant_confidence()

    def detect(self, frame, frame_id: int) -> list[BBox]:
        if not 0 <= frame_id < len(self.truth):
            raise InvalidInputError(f"frame {frame_id} outside the synthetic truth")
        box = self.truth.boxes[frame_id]
        if box is None or frame_id in self.misses or self.truth.occluded[frame_id]:
            return []
        conf = float(self.confidence_fn(frame_id))
        return [BBox(box.x0, box.y0, box.x1, box.y1, conf)]


@dataclass(frozen=True)
class Corruption:
    """``dilate``/``erode`` by ``k`` px, or a spurious ``blob`` square at ``(x, y)``."""

    kind: str
    k: int = 1
    x: int = 8
    y: int = 8
    size: int = 12
    frames: Optional[frozenset] = None

    def applies(self, frame_id: int) -> bool:
        return self.frames is None or frame_id in self.frames


def corrupt(mask: Mask, c: Corruption) -> Mask:
    if c.kind in ("dilate", "erode"):
        kernel = np.ones((2 * c.k + 1, 2 * c.k + 1), dtype=np.uint8)
        op = cv2.dilate if c.kind == "dilate" else cv2.erode
        return op(mask.astype(np.uint8), kernel, borderValue=0).astype(bool)
    if c.kind == "blob":
        out = mask.copy()
        out[c.y:c.y + c.size, c.x:c.x + c.size] = True
        return out
    raise InvalidConfigError(f"unknown corruption {c.kind!r}")


class OracleSegmenter:
    """Returns ground-truth masks as probabilities, optionally corrupted."""

    def __init__(self, truth: SynthTruth, corruption: Optional[Corruption] = None):
        self.truth = truth
        self.corruption = corruption

    def full_mask(self, frame_id: int) -> Mask:
        mask = self.truth.masks[frame_id]
        if self.corruption is not None and self.corruption.applies(frame_id):
            mask = corrupt(mask, self.corruption)
        return mask

    def predict(self, image, frame_id: int, region: Optional[BBox] = None) -> np.ndarray:
        mask = _region_from_full(self.full_mask(frame_id), np.asarray(image).shape, region)
        return mask.astype(np.float32)


def oracle_detector(truth, miss_pattern=(), confidence_fn=None) -> OracleDetector:
    return OracleDetector(truth, miss_pattern, confidence_fn)


def oracle_segmenter(truth, corruption=None) -> OracleSegmenter:
    return OracleSegmenter(truth, corruption)


# truth files --------------------------------------------------------------------

TRUTH_FIELDS = ["frame_id", "area", "occluded", "x0", "y0", "x1", "y1"]


def write_truth_csv(path, truth: SynthTruth) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_FIELDS)
        for i, (area, occ, box) in enumerate(zip(truth.areas.tolist(), truth.occluded.tolist(), truth.boxes)):
            coords = box.as_tuple() if box is not None else ("", "", "", "")
            w.writerow([i, area, int(occ), *coords])


def read_truth_csv(path, masks: Sequence[Mask], fps: float) -> SynthTruth:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"no such truth file: {path}")
    areas, occ, boxes = [], [], []
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            areas.append(int(row["area"]))
            occ.append(bool(int(row["occluded"])))
            boxes.append(
                BBox(int(row["x0"]), int(row["y0"]), int(row["x1"]), int(row["y1"]))
                if row["x0"] != "" else None
            )
    if len(masks) != len(areas):
        raise InvalidInputError(f"{path}: {len(areas)} rows but {len(masks)} masks")
    return SynthTruth(list(masks), np.array(areas, dtype=np.int64), boxes, np.array(occ), fps)
