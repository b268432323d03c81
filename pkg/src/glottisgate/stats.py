"""Rank and contingency tests plus the sex-stratified group report."""

from __future__ import annotations

import csv
import enum
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from . import kernels
from .errors import InvalidInputError, MissingInputError
from .gaw import FEATURE_NAMES, FeatureVector

ALPHA = 0.05
ENUMERATION_LIMIT = 20


class MannWhitneyResult(NamedTuple):
    statistic: float
    pvalue: float


def midranks(values) -> np.ndarray:
    """1-based ranks with ties replaced by their average rank."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size, dtype=np.float64)
    sx = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _prepare(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise InvalidInputError("both groups must be non-empty")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise InvalidInputError("values must be finite")
    return a, b


def _u_from_ranks(ranks: np.ndarray, n1: int) -> float:
    return float(ranks[:n1].sum()) - n1 * (n1 + 1) / 2.0


def _two_sided(le: float, ge: float) -> float:
    return float(min(1.0, 2.0 * min(le, ge)))


def mann_whitney_u(a, b, method: str = "asymptotic") -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test; ``statistic`` is U of the first sample.

    ``asymptotic``: normal approximation, tie-corrected variance, 0.5
    continuity correction. ``exact``: permutation distribution of the
    midrank sum counted by dynamic programming. ``enumerate``: the same
    distribution by listing every assignment (n1 + n2 <= 20).
    """
    a, b = _prepare(a, b)
    n1, n2 = a.size, b.size
    ranks = midranks(np.concatenate([a, b]))
    u = float(_u_from_ranks(ranks, n1))
    if method == "asymptotic":
        return MannWhitneyResult(u, _asymptotic_p(u, ranks, n1, n2))
    if method == "exact":
        return MannWhitneyResult(u, _exact_p(ranks, n1))
    if method == "enumerate":
        return MannWhitneyResult(u, _enumerated_p(ranks, n1))
    raise InvalidInputError(f"unknown method {method!r}")


def _asymptotic_p(u: float, ranks: np.ndarray, n1: int, n2: int) -> float:
    n = n1 + n2
    _, counts = np.unique(ranks, return_counts=True)
    ties = float(np.sum(counts.astype(np.float64) ** 3 - counts))
    var = n1 * n2 / 12.0 * ((n + 1) - ties / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0.0:
        return 1.0
    z = (abs(u - n1 * n2 / 2.0) - 0.5) / math.sqrt(var)
    if z <= 0.0:
        return 1.0
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def _exact_p(ranks: np.ndarray, n1: int) -> float:
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    counts = kernels.subset_sum_counts(doubled, n1)
    obs = int(doubled[:n1].sum())
    total = counts.sum()
    le = counts[: obs + 1].sum() / total
    ge = counts[obs:].sum() / total
    return _two_sided(le, ge)


def _enumerated_p(ranks: np.ndarray, n1: int) -> float:
    n = ranks.size
    if n > ENUMERATION_LIMIT:
        raise InvalidInputError(f"enumeration limited to n1 + n2 <= {ENUMERATION_LIMIT}, got {n}")
    doubled = [int(round(2 * r)) for r in ranks]
    obs = sum(doubled[:n1])
    le = ge = total = 0
    for combo in itertools.combinations(doubled, n1):
        s = sum(combo)
        total += 1
        le += s <= obs
        ge += s >= obs
    return _two_sided(le / total, ge / total)


# Fisher ------------------------------------------------------------------------

def fisher_exact_2x2(table, alternative: str = "two-sided") -> float:
    """Fisher exact test on ``[[a, b], [c, d]]``.

    Two-sided p sums the hypergeometric probabilities of every table with the
    observed margins that is no more probable than the observed one. The
    comparison is done on exact integers. ``greater`` tests a large top-left
    cell, ``less`` a small one.
    """
    try:
        (a, b), (c, d) = table
    except (TypeError, ValueError):
        raise InvalidInputError("table must be 2x2") from None
    cells = [a, b, c, d]
    if any(int(v) != v or v < 0 for v in cells):
        raise InvalidInputError("cells must be non-negative integers")
    a, b, c, d = (int(v) for v in cells)
    r1, r2, c1 = a + b, c + d, a + c
    n = r1 + r2
    if n == 0:
        raise InvalidInputError("table is empty")
    lo, hi = max(0, c1 - r2), min(r1, c1)
    weights = {x: math.comb(r1, x) * math.comb(r2, c1 - x) for x in range(lo, hi + 1)}
    total = math.comb(n, c1)
    if alternative == "two-sided":
        obs = weights[a]
        mass = sum(w for w in weights.values() if w <= obs)
    elif alternative == "greater":
        mass = sum(w for x, w in weights.items() if x >= a)
    elif alternative == "less":
        mass = sum(w for x, w in weights.items() if x <= a)
    else:
        raise InvalidInputError(f"unknown alternative {alternative!r}")
    return float(min(Fraction(mass, total), Fraction(1)))


# cohort report ------------------------------------------------------------------

class Status(str, enum.Enum):
    HEALTHY = "Healthy"
    PATHOLOGICAL = "Pathological"
    EXCLUDED = "Excluded"

    @classmethod
    def parse(cls, text: str) -> "Status":
        t = (text or "").strip().lower()
        if t in ("healthy", "h", "normal"):
            return cls.HEALTHY
        if t in ("", "unknown", "other", "excluded", "n/a", "na"):
            return cls.EXCLUDED
        # any named disorder (paresis, polyps, nodules, ...) counts as pathological
        return cls.PATHOLOGICAL


class Sex(str, enum.Enum):
    F = "F"
    M = "M"
    UNKNOWN = "Unknown"

    @classmethod
    def parse(cls, text: str) -> "Sex":
        t = (text or "").strip().lower()
        if t in ("f", "female", "w"):
            return cls.F
        if t in ("m", "male"):
            return cls.M
        return cls.UNKNOWN


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    status: Status
    sex: Sex
    features: FeatureVector


@dataclass(frozen=True)
class ReportEntry:
    feature: str
    stratum: str
    n_healthy: int
    n_pathological: int
    mean_healthy: float
    std_healthy: float
    mean_pathological: float
    std_pathological: float
    p: Optional[float]
    significant: bool
    reliable: bool


@dataclass
class GroupReport:
    entries: list[ReportEntry]
    alpha: float
    sex_table: list[list[int]]
    sex_fisher_p: Optional[float]
    strata: tuple[str, ...] = ("F", "M")
    method: str = "asymptotic"
    notes: list[str] = field(default_factory=list)

    def entry(self, feature: str, stratum: str) -> ReportEntry:
        for e in self.entries:
            if e.feature == feature and e.stratum == stratum:
                return e
        raise KeyError((feature, stratum))


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=np.float64)
    # sample std is undefined for a single patient
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else math.nan


def group_report(
    records: Sequence[PatientRecord],
    alpha: float = ALPHA,
    strata: Sequence[Sex] = (Sex.F, Sex.M),
    method: str = "asymptotic",
) -> GroupReport:
    """Healthy vs Pathological per feature and sex stratum, no multiplicity correction."""
    used = [r for r in records if r.status is not Status.EXCLUDED]
    entries = []
    for feature in FEATURE_NAMES:
        for sex in strata:
            h = [getattr(r.features, feature) for r in used if r.sex is sex and r.status is Status.HEALTHY]
            p = [getattr(r.features, feature) for r in used if r.sex is sex and r.status is Status.PATHOLOGICAL]
            mh, sh = _mean_std(h)
            mp, sp = _mean_std(p)
            pval = mann_whitney_u(h, p, method).pvalue if h and p else None
            entries.append(
                ReportEntry(
                    feature, sex.value, len(h), len(p), mh, sh, mp, sp, pval,
                    pval is not None and pval < alpha,
                    len(h) >= 2 and len(p) >= 2,
                )
            )
    table = [
        [sum(1 for r in used if r.status is st and r.sex is sx) for sx in (Sex.F, Sex.M)]
        for st in (Status.HEALTHY, Status.PATHOLOGICAL)
    ]
    fisher_p = fisher_exact_2x2(table) if sum(map(sum, table)) > 0 else None
    notes = []
    for sex in strata:
        nh = sum(1 for r in used if r.sex is sex and r.status is Status.HEALTHY)
        npth = sum(1 for r in used if r.sex is sex and r.status is Status.PATHOLOGICAL)
        if nh == 0 or npth == 0:
            notes.append(f"stratum {sex.value}: untestable ({nh} H / {npth} P)")
        elif nh < 2 or npth < 2:
            notes.append(f"stratum {sex.value}: p unreliable ({nh} H / {npth} P)")
    return GroupReport(entries, alpha, table, fisher_p, tuple(s.value for s in strata), method, notes)


def _fmt_ms(m: float, s: float) -> str:
    if math.isnan(m):
        return "n/a"
    digits = 2 if abs(m) < 10 else 1
    if math.isnan(s):
        return f"{m:.{digits}f}"
    return f"{m:.{digits}f}±{s:.{digits}f}"


def format_report(report: GroupReport) -> str:
    """Text table: one row per feature, H / P / p columns per stratum."""
    head = ["Feature"]
    for st in report.strata:
        e = report.entry(FEATURE_NAMES[0], st)
        label = {"F": "Female", "M": "Male"}.get(st, st)
        head.append(f"{label} ({e.n_healthy} H / {e.n_pathological} P)")
    lines = []
    rows = []
    for feature in FEATURE_NAMES:
        cells = [feature]
        for st in report.strata:
            e = report.entry(feature, st)
            p = "n/a" if e.p is None else f"{e.p:.3f}" + ("*" if e.significant else "") + ("" if e.reliable else "†")
            cells.append(f"{_fmt_ms(e.mean_healthy, e.std_healthy):>16} {_fmt_ms(e.mean_pathological, e.std_pathological):>16} {p:>8}")
        rows.append(cells)
    widths = [max(len(r[i]) for r in rows + [head]) for i in range(len(head))]
    sub = [""] + [f"{'H':>16} {'P':>16} {'p':>8}" for _ in report.strata]
    for r in (head, sub):
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    (hf, hm), (pf, pm) = report.sex_table
    fp = "n/a" if report.sex_fisher_p is None else f"{report.sex_fisher_p:.3f}"
    lines.append("")
    lines.append(f"Sex balance: Healthy {hf}F/{hm}M, Pathological {pf}F/{pm}M; Fisher exact (two-sided) p={fp}")
    lines.append(
        f"Two-sided Mann-Whitney U ({report.method}); * p < {report.alpha}; "
        "† fewer than 2 recordings in a group; no multiple-comparison correction."
    )
    lines.extend(report.notes)
    return "\n".join(lines) + "\n"


def write_report_csv(path, report: GroupReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = list(ReportEntry.__dataclass_fields__)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for e in report.entries:
            w.writerow(["" if getattr(e, c) is None else (repr(getattr(e, c)) if isinstance(getattr(e, c), float) else getattr(e, c)) for c in cols])


def read_meta_csv(path) -> dict[str, tuple[Status, Sex]]:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"no such metadata file: {path}")
    out = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"patient_id", "status", "sex"} <= set(reader.fieldnames or []):
            raise InvalidInputError(f"{path}: expected columns patient_id,status,sex")
        for row in reader:
            out[row["patient_id"].strip()] = (Status.parse(row["status"]), Sex.parse(row["sex"]))
    return out


def build_records(features: Mapping[str, FeatureVector], meta: Mapping[str, tuple[Status, Sex]]) -> list[PatientRecord]:
    records = []
    for pid in sorted(features):
        status, sex = meta.get(pid, (Status.EXCLUDED, Sex.UNKNOWN))
        records.append(PatientRecord(pid, status, sex, features[pid]))
    return records
