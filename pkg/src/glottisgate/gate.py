"""Temporal consistency gate.

Output at frame ``t`` is the raw mask restricted to the active box when a
detection occurred in any of the last ``hold_window`` frames (the current one
included), and the zero mask otherwise. With the default window of 4 a single
detection yields one Detected frame and three Held frames.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .core import BBox, Mask, _restrict_bool
from .errors import InvalidConfigError

NEVER = math.inf


class GateStatus(str, enum.Enum):
    DETECTED = "Detected"
    HELD = "Held"
    ZEROED = "Zeroed"
    UNGATED = "Ungated"

    def __str__(self) -> str:
        return self.value


_DETECTED, _HELD, _ZEROED = GateStatus.DETECTED, GateStatus.HELD, GateStatus.ZEROED

_KERNEL_STATUS = {
    kernels.STATUS_ZEROED: GateStatus.ZEROED,
    kernels.STATUS_HELD: GateStatus.HELD,
    kernels.STATUS_DETECTED: GateStatus.DETECTED,
}


@dataclass(frozen=True)
class GateConfig:
    hold_window: float = 4
    drift_clamp: float = 30.0

    def __post_init__(self):
        if not (self.hold_window == math.inf or (float(self.hold_window).is_integer() and self.hold_window >= 1)):
            raise InvalidConfigError(f"hold_window must be an integer >= 1 or inf, got {self.hold_window}")
        if not self.drift_clamp >= 0:
            raise InvalidConfigError(f"drift_clamp must be >= 0, got {self.drift_clamp}")


class GateState(NamedTuple):
    held_box: Optional[BBox] = None
    frames_since_detection: float = NEVER


class GateOutcome(NamedTuple):
    gated_mask: Mask
    active_box: Optional[BBox]
    status: GateStatus


def clamp_drift(
    prev_center: tuple[float, float],
    new_box: BBox,
    max_px: float,
    frame_w: Optional[int] = None,
    frame_h: Optional[int] = None,
) -> BBox:
    """Pull ``new_box`` toward ``prev_center`` so its centre moves at most ``max_px``.

    The box keeps the fresh detection's size and is translated by whole
    pixels, picking the grid point nearest the exact target among those
    within ``max_px``. Should no grid point qualify (bounds under a pixel with
    a half-pixel offset), the box goes to the grid point nearest ``prev_center``.
    """
    if max_px < 0:
        raise InvalidConfigError("max_px must be >= 0")
    px, py = prev_center
    vx = (new_box.x0 + new_box.x1) / 2.0 - px
    vy = (new_box.y0 + new_box.y1) / 2.0 - py
    dist = math.hypot(vx, vy)
    if dist <= max_px:
        box = new_box
    else:
        k = max_px / dist
        tx, ty = vx * k, vy * k
        bx, by = math.floor(tx - vx), math.floor(ty - vy)
        best = None
        for sx in range(bx - 1, bx + 3):
            for sy in range(by - 1, by + 3):
                if math.hypot(vx + sx, vy + sy) > max_px + 1e-9:
                    continue
                miss = math.hypot(vx + sx - tx, vy + sy - ty)
                if best is None or miss < best[0]:
                    best = (miss, sx, sy)
        if best is None:
            best = (0.0, round(-vx), round(-vy))
        box = new_box.translate(best[1], best[2])
    if frame_w is not None and frame_h is not None:
        box = box.shift_inside(frame_w, frame_h)
    return box


def _settled(held: BBox, box: BBox, max_px: float, frame_shape) -> bool:
    # True when clamp_drift would return ``box`` unchanged; skips the call per frame
    dx = (box.x0 + box.x1 - held.x0 - held.x1) / 2.0
    dy = (box.y0 + box.y1 - held.y0 - held.y1) / 2.0
    if dx * dx + dy * dy > max_px * max_px:
        return False
    if frame_shape is None:
        return True
    h, w = frame_shape
    return box.x0 >= 0 and box.y0 >= 0 and box.x1 <= w and box.y1 <= h


def advance(
    state: GateState,
    cfg: GateConfig,
    detection: Optional[BBox],
    frame_shape: Optional[tuple[int, int]] = None,
) -> tuple[GateState, GateStatus, Optional[BBox]]:
    """State transition only: returns (new state, status, active box)."""
    held = state.held_box
    if detection is not None:
        if held is not None and not _settled(held, detection, cfg.drift_clamp, frame_shape):
            h, w = frame_shape if frame_shape is not None else (None, None)
            detection = clamp_drift(held.center, detection, cfg.drift_clamp, w, h)
        return GateState(detection, 0), _DETECTED, detection
    since = state.frames_since_detection + 1
    if held is not None and since < cfg.hold_window:
        return GateState(held, since), _HELD, held
    return GateState(held, since), _ZEROED, None


def gate_step(
    state: GateState,
    cfg: GateConfig,
    detection: Optional[BBox],
    raw_mask: Mask,
) -> tuple[GateState, GateOutcome]:
    if raw_mask.dtype.kind != "b":
        raw_mask = raw_mask.astype(bool)
    shape = raw_mask.shape
    new_state, status, box = advance(state, cfg, detection, shape)
    if box is None:
        return new_state, GateOutcome(np.zeros(shape, np.bool_), None, status)
    return new_state, GateOutcome(_restrict_bool(raw_mask, box), box, status)


def reset(state: Optional[GateState] = None) -> GateState:
    return GateState()


class TemporalGate:
    """Stateful wrapper around :func:`gate_step` for one video stream."""

    def __init__(self, cfg: GateConfig | None = None):
        self.cfg = cfg or GateConfig()
        self.state = GateState()

    def reset(self) -> None:
        self.state = reset(self.state)

    def step(self, detection: Optional[BBox], raw_mask: Mask) -> GateOutcome:
        self.state, outcome = gate_step(self.state, self.cfg, detection, raw_mask)
        return outcome

    def advance(self, detection: Optional[BBox], frame_shape) -> tuple[GateStatus, Optional[BBox]]:
        self.state, status, box = advance(self.state, self.cfg, detection, frame_shape)
        return status, box


def statuses(detected, hold_window: float = 4) -> list[GateStatus]:
    """Statuses for a whole 0/1 detection sequence via the compiled kernel."""
    hold = -1 if hold_window == math.inf else int(hold_window)
    codes = kernels.gate_statuses(np.asarray(detected, dtype=np.uint8), hold)
    return [_KERNEL_STATUS[int(c)] for c in codes]
