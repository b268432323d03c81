"""Value types and deterministic geometry for frames, masks and boxes.

Frames are 2-D ``uint8`` arrays (rows x columns) and masks are 2-D ``bool``
arrays of the same shape. Boxes are half-open pixel rectangles
``[x0, x1) x [y0, y1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional

import cv2
import numpy as np

from . import kernels
from .errors import InvalidInputError, MissingInputError

Frame = np.ndarray
Mask = np.ndarray


def as_frame(image) -> Frame:
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"frame must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise InvalidInputError("frame intensities must lie in 0..255")
        arr = arr.astype(np.uint8)
    return arr


def as_mask(mask) -> Mask:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise InvalidInputError(f"mask must be 2-D, got shape {arr.shape}")
    return arr.astype(bool, copy=False)


@dataclass(frozen=True, slots=True)
class BBox:
    """Half-open pixel rectangle with a detector confidence."""

    x0: int
    y0: int
    x1: int
    y1: int
    confidence: float = 1.0

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def is_valid_for(self, width: int, height: int) -> bool:
        return 0 <= self.x0 < self.x1 <= width and 0 <= self.y0 < self.y1 <= height

    def validate(self, width: int, height: int) -> "BBox":
        if not self.is_valid_for(width, height):
            raise InvalidInputError(f"{self} is not a valid box for a {width}x{height} frame")
        return self

    def translate(self, dx: int, dy: int) -> "BBox":
        if dx == 0 and dy == 0:
            return self
        return BBox(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy, self.confidence)

    def shift_inside(self, width: int, height: int) -> "BBox":
        """Translate (not shrink) the box so it lies inside the frame when it fits."""
        if self.x0 >= 0 and self.y0 >= 0 and self.x1 <= width and self.y1 <= height:
            return self
        dx = max(0, -self.x0) - max(0, self.x1 - width)
        dy = max(0, -self.y0) - max(0, self.y1 - height)
        return BBox(
            max(0, self.x0 + dx),
            max(0, self.y0 + dy),
            min(width, self.x1 + dx),
            min(height, self.y1 + dy),
            self.confidence,
        )

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)


class ConfusionCounts(NamedTuple):
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class LetterboxTransform:
    scale: float
    pad_left: int
    pad_top: int
    source_width: int
    source_height: int
    target: int

    def forward(self, x: float, y: float) -> tuple[float, float]:
        return (x * self.scale + self.pad_left, y * self.scale + self.pad_top)

    def inverse(self, x: float, y: float) -> tuple[float, float]:
        return ((x - self.pad_left) / self.scale, (y - self.pad_top) / self.scale)

    @property
    def content_size(self) -> tuple[int, int]:
        """(width, height) of the scaled image inside the canvas."""
        return _scaled_size(self.source_width, self.source_height, self.scale, self.target)

    def box_to_source(self, box: BBox) -> BBox:
        """Map a canvas box back to source pixels (outward rounding, clamped)."""
        x0, y0 = self.inverse(box.x0, box.y0)
        x1, y1 = self.inverse(box.x1, box.y1)
        x0 = min(max(0, math.floor(x0 + 1e-9)), self.source_width - 1)
        y0 = min(max(0, math.floor(y0 + 1e-9)), self.source_height - 1)
        x1 = max(min(self.source_width, math.ceil(x1 - 1e-9)), x0 + 1)
        y1 = max(min(self.source_height, math.ceil(y1 - 1e-9)), y0 + 1)
        return BBox(x0, y0, x1, y1, box.confidence)


def _scaled_size(width: int, height: int, scale: float, target: int) -> tuple[int, int]:
    # the longer side lands exactly on the target
    if width >= height:
        return target, max(1, min(target, int(round(height * scale))))
    return max(1, min(target, int(round(width * scale)))), target


def resize_frame(frame: Frame, width: int, height: int) -> Frame:
    """Bilinear resize; returns a copy when the size is unchanged."""
    if frame.shape == (height, width):
        return frame.copy()
    return cv2.resize(frame, (width, height), interpolation=cv2.INTER_LINEAR)


def resize_mask(mask: Mask, width: int, height: int) -> Mask:
    """Nearest-neighbour resize (pixel-centre aligned), then threshold at 0.5."""
    if mask.shape == (height, width):
        return mask.copy()
    src = mask.astype(np.uint8)
    out = cv2.resize(src, (width, height), interpolation=cv2.INTER_NEAREST_EXACT)
    return out >= 0.5


def letterbox(image, target: int = 256) -> tuple[np.ndarray, LetterboxTransform]:
    """Scale the longer side to ``target`` and zero-pad the shorter one.

    Boolean inputs are treated as masks (nearest-neighbour), everything else
    as frames (bilinear). An odd padding pixel goes to the right/bottom.
    """
    if target < 1:
        raise InvalidInputError("letterbox target must be >= 1")
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidInputError(f"cannot letterbox an image of shape {arr.shape}")
    is_mask = arr.dtype == bool
    height, width = arr.shape
    scale = target / max(width, height)
    new_w, new_h = _scaled_size(width, height, scale, target)
    pad_left = (target - new_w) // 2
    pad_top = (target - new_h) // 2
    if is_mask:
        scaled = resize_mask(arr, new_w, new_h)
        canvas = np.zeros((target, target), dtype=bool)
    else:
        scaled = resize_frame(as_frame(arr), new_w, new_h)
        canvas = np.zeros((target, target), dtype=np.uint8)
    canvas[pad_top:pad_top + new_h, pad_left:pad_left + new_w] = scaled
    return canvas, LetterboxTransform(scale, pad_left, pad_top, width, height, target)


def mask_to_bbox(mask) -> Optional[BBox]:
    """Tight half-open rectangle around the set pixels, or None for an empty mask."""
    m = as_mask(mask)
    rows = np.flatnonzero(m.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(m.any(axis=0))
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1, 1.0)


def bbox_to_label_record(box: BBox, frame_w: int, frame_h: int) -> tuple[int, float, float, float, float]:
    """Normalized single-class detector label ``(0, xc, yc, w, h)``."""
    box.validate(frame_w, frame_h)
    return (
        0,
        (box.x0 + box.x1) / (2.0 * frame_w),
        (box.y0 + box.y1) / (2.0 * frame_h),
        (box.x1 - box.x0) / frame_w,
        (box.y1 - box.y0) / frame_h,
    )


def format_label_record(record) -> str:
    cls, xc, yc, w, h = record
    return f"{cls} {xc:.6f} {yc:.6f} {w:.6f} {h:.6f}"


def expand_box(box: BBox, pad: int, frame_w: int, frame_h: int) -> BBox:
    return BBox(
        max(0, box.x0 - pad),
        max(0, box.y0 - pad),
        min(frame_w, box.x1 + pad),
        min(frame_h, box.y1 + pad),
        box.confidence,
    )


def crop_resize(frame, box: BBox, pad: int = 8, target: int = 256) -> tuple[Frame, BBox]:
    frame = as_frame(frame)
    h, w = frame.shape
    crop_rect = expand_box(box, pad, w, h)
    crop_rect.validate(w, h)
    region = frame[crop_rect.y0:crop_rect.y1, crop_rect.x0:crop_rect.x1]
    return resize_frame(region, target, target), crop_rect


def paste_back(patch_mask, crop_rect: BBox, frame_w: int, frame_h: int) -> Mask:
    patch = as_mask(patch_mask)
    if patch.shape[0] != patch.shape[1]:
        raise InvalidInputError(f"patch mask must be square, got {patch.shape}")
    crop_rect.validate(frame_w, frame_h)
    out = np.zeros((frame_h, frame_w), dtype=bool)
    out[crop_rect.y0:crop_rect.y1, crop_rect.x0:crop_rect.x1] = resize_mask(
        patch, crop_rect.width, crop_rect.height
    )
    return out


def restrict_mask(mask, box: BBox) -> Mask:
    """Keep only the set pixels that fall inside ``box``."""
    m = mask if isinstance(mask, np.ndarray) and mask.dtype.kind == "b" else as_mask(mask)
    return _restrict_bool(m, box)


def _restrict_bool(m: Mask, box: BBox) -> Mask:
    # per-frame hot path: m is already a 2-D bool array
    h, w = m.shape
    x0 = box.x0 if box.x0 > 0 else 0
    y0 = box.y0 if box.y0 > 0 else 0
    x1 = box.x1 if box.x1 < w else w
    y1 = box.y1 if box.y1 < h else h
    if x0 == 0 and y0 == 0 and x1 == w and y1 == h:
        return m.copy()
    out = np.zeros((h, w), dtype=bool)
    if x1 > x0 and y1 > y0:
        out[y0:y1, x0:x1] = m[y0:y1, x0:x1]
    return out


def confusion_counts(pred, gt) -> ConfusionCounts:
    p, g = np.asarray(pred), np.asarray(gt)
    if p.shape != g.shape or p.ndim != 2:
        raise InvalidInputError(f"mask shapes differ: {p.shape} vs {g.shape}")
    return ConfusionCounts(*kernels.confusion_counts(p.astype(bool, copy=False), g.astype(bool, copy=False)))


# image files -----------------------------------------------------------------

IMAGE_SUFFIXES = (".png", ".pgm", ".pnm", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg")


def read_frame(path) -> Frame:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"no such image: {path}")
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise InvalidInputError(f"cannot decode image: {path}")
    return img


def read_mask(path) -> Mask:
    return read_frame(path) >= 128


def write_frame(path, frame) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), as_frame(frame)):
        raise InvalidInputError(f"cannot write image: {path}")


def write_mask(path, mask) -> None:
    write_frame(path, as_mask(mask).astype(np.uint8) * 255)


def frame_id_from_path(path) -> int:
    stem = Path(path).stem
    try:
        return int(stem)
    except ValueError:
        digits = "".join(ch for ch in stem if ch.isdigit())
        if not digits:
            raise InvalidInputError(f"cannot derive a frame id from {path.name}") from None
        return int(digits)


def list_images(directory) -> list[tuple[int, Path]]:
    """Image files in ``directory`` as (frame_id, path), sorted by frame id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingInputError(f"no such directory: {directory}")
    items = [
        (frame_id_from_path(p), p)
        for p in directory.iterdir()
        if p.suffix.lower() in IMAGE_SUFFIXES
    ]
    items.sort(key=lambda item: item[0])
    ids = [i for i, _ in items]
    if len(set(ids)) != len(ids):
        raise InvalidInputError(f"duplicate frame ids in {directory}")
    return items


def frame_filename(frame_id: int) -> str:
    return f"{frame_id:06d}.png"
