"""Glottal area waveform and its kinematic features.

Conventions: mean and standard deviation (population, ddof=0) are taken over
open frames (area > 0); range, open quotient, f0 and periodicity over all
analyzed frames, zero-area frames included. Excluded frames (e.g. tracker
initialization) are kept in the series but skipped by every feature.
Degenerate inputs return 0 so cohort runs never fail on a silent recording.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, MissingInputError
from .pipelines import FrameResult

FEATURE_NAMES = (
    "area_mean",
    "area_std",
    "area_range",
    "open_quotient",
    "f0",
    "periodicity",
    "cv",
)
OPEN_FRACTION = 0.1
MAX_LAG = 50
STD_CONVENTION = "area_std is the population std (ddof=0) over open frames (area > 0)"


@dataclass(frozen=True)
class GawSeries:
    areas: np.ndarray
    fps: float
    excluded: frozenset = field(default_factory=frozenset)
    frame_ids: tuple = ()

    def __post_init__(self):
        areas = np.asarray(self.areas, dtype=np.float64)
        if areas.ndim != 1 or areas.size < 1:
            raise InvalidInputError("a waveform needs at least one sample")
        if (areas < 0).any():
            raise InvalidInputError("areas must be non-negative")
        if not self.fps > 0:
            raise InvalidInputError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "areas", areas)
        object.__setattr__(self, "excluded", frozenset(int(i) for i in self.excluded))
        if not self.frame_ids:
            object.__setattr__(self, "frame_ids", tuple(range(areas.size)))

    def analyzed(self) -> np.ndarray:
        """Areas of non-excluded frames, in order."""
        if not self.excluded:
            return self.areas
        keep = np.ones(self.areas.size, dtype=bool)
        keep[list(self.excluded)] = False
        return self.areas[keep]


@dataclass(frozen=True)
class FeatureVector:
    area_mean: float
    area_std: float
    area_range: float
    open_quotient: float
    f0: float
    periodicity: float
    cv: float

    def as_dict(self) -> dict:
        return asdict(self)


def extract_waveform(results: Sequence[FrameResult], fps: float) -> GawSeries:
    if not results:
        raise InvalidInputError("no frame results")
    areas = np.array([r.area_px2 for r in results], dtype=np.float64)
    excluded = frozenset(i for i, r in enumerate(results) if r.excluded)
    return GawSeries(areas, fps, excluded, tuple(r.frame_id for r in results))


def _open_stats(a: np.ndarray) -> tuple[float, float]:
    open_ = a[a > 0]
    if open_.size == 0:
        return 0.0, 0.0
    return float(open_.mean()), float(open_.std())


def open_quotient(g: GawSeries) -> float:
    a = g.analyzed()
    mean_open, _ = _open_stats(a)
    if mean_open == 0.0 or a.size == 0:
        return 0.0
    return float(np.count_nonzero(a > OPEN_FRACTION * mean_open)) / a.size


def f0_fft(g: GawSeries) -> float:
    """Dominant FFT bin (1..N/2) of the mean-removed waveform, in Hz."""
    a = g.analyzed()
    n = a.size
    if n < 4:
        raise InvalidInputError(f"f0 needs at least 4 samples, got {n}")
    x = a - a.mean()
    if not np.any(x):
        return 0.0
    mag = np.abs(np.fft.rfft(x))
    k = 1 + int(np.argmax(mag[1:n // 2 + 1]))
    return k * g.fps / n


def autocorrelation(a: np.ndarray, max_lag: int = MAX_LAG) -> np.ndarray:
    """r(k) for k = 1..min(max_lag, N-1); both sums run over the valid t range."""
    x = np.asarray(a, dtype=np.float64)
    x = x - x.mean()
    n = x.size
    lags = min(max_lag, n - 1)
    r = np.zeros(max(lags, 0))
    for k in range(1, lags + 1):
        head = x[: n - k]
        denom = float(np.dot(head, head))
        r[k - 1] = float(np.dot(head, x[k:])) / denom if denom > 0 else 0.0
    return r


def periodicity(g: GawSeries, max_lag: int = MAX_LAG) -> float:
    a = g.analyzed()
    if a.size < 2 or not np.any(a - a.mean()):
        return 0.0
    return float(autocorrelation(a, max_lag).max())


def features(g: GawSeries) -> FeatureVector:
    a = g.analyzed()
    if a.size == 0:
        raise InvalidInputError("every frame is excluded")
    mean_open, std_open = _open_stats(a)
    return FeatureVector(
        area_mean=mean_open,
        area_std=std_open,
        area_range=float(a.max() - a.min()),
        open_quotient=open_quotient(g),
        f0=f0_fft(g),
        periodicity=periodicity(g),
        cv=std_open / mean_open if mean_open > 0 else 0.0,
    )


def write_gaw_csv(path, g: GawSeries) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_id", "area_px2"])
        for fid, area in zip(g.frame_ids, g.areas.tolist()):
            w.writerow([fid, int(area) if float(area).is_integer() else repr(area)])


def read_gaw_csv(path, fps: float, excluded: Sequence[int] = ()) -> GawSeries:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"no such waveform file: {path}")
    ids, areas = [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"frame_id", "area_px2"} <= set(reader.fieldnames or []):
            raise InvalidInputError(f"{path}: expected columns frame_id,area_px2")
        for row in reader:
            ids.append(int(row["frame_id"]))
            areas.append(float(row["area_px2"]))
    return GawSeries(np.array(areas), fps, frozenset(excluded), tuple(ids))
