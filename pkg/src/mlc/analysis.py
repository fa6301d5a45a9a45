"""Segmentation, correlation and parameter sweeps over coupling series."""

from __future__ import annotations

import enum
import logging
import math
import statistics
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real

import numpy as np
from scipy.stats import rankdata

from .activity import build_calendar
from .coupling import (
    DEFAULT_PATIENCE,
    PairSeries,
    State,
    all_pair_series,
    coupling_state,
)
from .ingest import CommitFilter, CommitRecord, filter_commits
from .servicemap import ServiceMap

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.005
DEFAULT_WINDOWS = (10, 30, 100)
DEFAULT_BUCKETS = ((2, 5), (6, 10), (11, 20), (21, None))


# --------------------------------------------------------------------------
# segmentation


class Trend(enum.Enum):
    GROWING = "Growing"
    STABLE = "Stable"
    DECREASING = "Decreasing"


@dataclass(frozen=True)
class Segment:
    start_idx: int  # inclusive, 0-based
    end_idx: int  # inclusive
    slope: float
    sse: float
    label: Trend

    def __len__(self) -> int:
        return self.end_idx - self.start_idx + 1


def trend_label(slope: float, epsilon: float = DEFAULT_EPSILON) -> Trend:
    if slope > epsilon:
        return Trend.GROWING
    if slope < -epsilon:
        return Trend.DECREASING
    return Trend.STABLE


class _LineFit:
    """O(1) least-squares fits over any index range via prefix sums."""

    def __init__(self, values: Sequence[float]):
        y = np.asarray(values, dtype=float)
        x = np.arange(len(y), dtype=float)
        zero = np.zeros(1)
        self._sx = np.concatenate([zero, np.cumsum(x)])
        self._sxx = np.concatenate([zero, np.cumsum(x * x)])
        self._sy = np.concatenate([zero, np.cumsum(y)])
        self._syy = np.concatenate([zero, np.cumsum(y * y)])
        self._sxy = np.concatenate([zero, np.cumsum(x * y)])

    def fit(self, start: int, end: int) -> tuple[float, float]:
        """Return ``(slope, sse)`` for the inclusive range ``start..end``."""
        m = end - start + 1
        a, b = start, end + 1
        sx = self._sx[b] - self._sx[a]
        sy = self._sy[b] - self._sy[a]
        cxx = self._sxx[b] - self._sxx[a] - sx * sx / m
        cyy = self._syy[b] - self._syy[a] - sy * sy / m
        cxy = self._sxy[b] - self._sxy[a] - sx * sy / m
        if m < 2 or cxx <= 0:
            return 0.0, max(float(cyy), 0.0)
        slope = cxy / cxx
        sse = cyy - cxy * cxy / cxx
        return float(slope), max(float(sse), 0.0)


def segment_series(
    values: Sequence[Real],
    max_sse: float,
    min_len: int = 2,
    epsilon: float = DEFAULT_EPSILON,
) -> list[Segment]:
    """Bottom-up piecewise-linear segmentation.

    Starts from segments of two points and repeatedly merges the adjacent
    pair whose merged line fit has the smallest squared error, as long as
    that error stays within ``max_sse``.  Segments still shorter than
    ``min_len`` are then merged into their cheaper neighbour.
    """
    size = len(values)
    if size == 0:
        raise ValueError("cannot segment an empty series")
    if size > 1 and min_len < 2:
        raise ValueError("min_len must be >= 2")
    fit = _LineFit([float(v) for v in values])

    bounds = [[i, min(i + 1, size - 1)] for i in range(0, size, 2)]
    if len(bounds) > 1 and bounds[-1][0] == bounds[-1][1]:
        tail = bounds.pop()
        bounds[-1][1] = tail[1]

    def merged_cost(i: int) -> float:
        return fit.fit(bounds[i][0], bounds[i + 1][1])[1]

    costs = [merged_cost(i) for i in range(len(bounds) - 1)]
    while costs:
        i = min(range(len(costs)), key=costs.__getitem__)
        if costs[i] > max_sse:
            break
        bounds[i][1] = bounds.pop(i + 1)[1]
        costs.pop(i)
        if i < len(costs):
            costs[i] = merged_cost(i)
        if i > 0:
            costs[i - 1] = merged_cost(i - 1)

    while len(bounds) > 1:
        short = [i for i, (a, b) in enumerate(bounds) if b - a + 1 < min_len]
        if not short:
            break
        i = short[0]
        if i == 0:
            j = 0
        elif i == len(bounds) - 1:
            j = i - 1
        else:
            j = i - 1 if merged_cost(i - 1) <= merged_cost(i) else i
        bounds[j][1] = bounds.pop(j + 1)[1]

    out = []
    for a, b in bounds:
        slope, sse = fit.fit(a, b)
        out.append(Segment(a, b, slope, sse, trend_label(slope, epsilon)))
    return out


def segment_labels(segments: Iterable[Segment]) -> list[Trend]:
    """Expand segments into one label per series position."""
    return [s.label for s in segments for _ in range(len(s))]


# --------------------------------------------------------------------------
# correlation


class UndefinedCorrelation(ValueError):
    """Correlation has no value for these inputs (too short or constant)."""


def _check_pair(a: Sequence[Real], b: Sequence[Real]) -> tuple[np.ndarray, np.ndarray]:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise UndefinedCorrelation("need at least two observations")
    return np.asarray([float(v) for v in a]), np.asarray([float(v) for v in b])


def _product_moment(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelation("constant input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def pearson(a: Sequence[Real], b: Sequence[Real]) -> float:
    x, y = _check_pair(a, b)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelation("constant input")
    return _product_moment(x, y)


def spearman(a: Sequence[Real], b: Sequence[Real]) -> float:
    """Rank correlation with average ranks for ties."""
    x, y = _check_pair(a, b)
    return _product_moment(rankdata(x), rankdata(y))


def correlation_or_none(fn, a, b) -> float | None:
    try:
        return fn(a, b)
    except UndefinedCorrelation:
        return None


# --------------------------------------------------------------------------
# alignment


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class Alignment:
    keys: tuple
    left: tuple[Fraction, ...]
    right: tuple[Fraction, ...]
    dropped: int
    undefined: int = 0


def _keyed(series: PairSeries, track: str, key: str) -> dict:
    out = {}
    for p in series.points:
        k = p.end_index if key == "index" else p.end_date
        out[k] = getattr(p, track)
    return out


def align_series(
    s1: PairSeries, s2: PairSeries, track: str = "coupling", key: str = "index"
) -> Alignment:
    """Pair values of two series of the same pair by window end.

    ``key="index"`` joins on the calendar's active-day index (same calendar);
    ``key="date"`` joins on the window end date, which also works across
    calendars built from differently filtered commits.  Undefined values on
    either side are dropped and counted in ``undefined``.
    """
    if {s1.mu, s1.nu} != {s2.mu, s2.nu}:
        raise AlignmentError(f"different pairs: {s1.mu}/{s1.nu} vs {s2.mu}/{s2.nu}")
    if key not in ("index", "date"):
        raise ValueError(f"unknown alignment key {key!r}")
    a, b = _keyed(s1, track, key), _keyed(s2, track, key)
    common = sorted(set(a) & set(b))
    if not common:
        raise AlignmentError(f"no overlapping windows for {s1.mu}/{s1.nu}")
    dropped = len(a) + len(b) - 2 * len(common)
    keep = [k for k in common if a[k] is not None and b[k] is not None]
    return Alignment(
        keys=tuple(keep),
        left=tuple(a[k] for k in keep),
        right=tuple(b[k] for k in keep),
        dropped=dropped,
        undefined=len(common) - len(keep),
    )


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepSpec:
    window_sizes: tuple[int, ...] = DEFAULT_WINDOWS
    filters: tuple[tuple[str, CommitFilter], ...] = (("default", CommitFilter()),)
    thresholds: tuple[Fraction, ...] = (Fraction(1, 2),)
    patience: int = DEFAULT_PATIENCE
    granularity: str = "day"

    def __post_init__(self) -> None:
        if not self.window_sizes or not self.filters or not self.thresholds:
            raise ValueError("sweep needs at least one window size, filter and threshold")
        labels = [name for name, _ in self.filters]
        if len(set(labels)) != len(labels):
            raise ValueError("filter labels must be unique")
        object.__setattr__(self, "thresholds", tuple(Fraction(t) for t in self.thresholds))

    @property
    def cells(self) -> list[tuple[str, CommitFilter, int]]:
        return [(name, f, n) for name, f in self.filters for n in self.window_sizes]


@dataclass
class SweepCell:
    label: str
    filter_label: str
    n: int
    series: list[PairSeries] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    error: str | None = None


def _summarize(cell: SweepCell, spec: SweepSpec, commits_kept: int, active_days: int) -> dict:
    values = [float(v) for s in cell.series for v in s.couplings]
    per_threshold = {}
    for t in spec.thresholds:
        states = [coupling_state(s, t, spec.patience) for s in cell.series if s.points]
        final_coupled = sum(st.states[-1] is State.COUPLED for st in states)
        windows_above = sum(v >= t for s in cell.series for v in s.couplings)
        per_threshold[str(t)] = {
            "coupled_pairs": final_coupled / len(states) if states else None,
            "windows_at_or_above": windows_above / len(values) if values else None,
        }
    return {
        "commits": commits_kept,
        "active_days": active_days,
        "pairs": len(cell.series),
        "pairs_with_windows": sum(1 for s in cell.series if s.points),
        "windows": len(values),
        "mean_coupling": statistics.fmean(values) if values else None,
        "thresholds": per_threshold,
    }


def _pooled(c1: SweepCell, c2: SweepCell) -> tuple[list[float], list[float], int]:
    by_pair = {(s.mu, s.nu): s for s in c2.series}
    left: list[float] = []
    right: list[float] = []
    dropped = 0
    for s in c1.series:
        other = by_pair.get((s.mu, s.nu))
        if other is None or not s.points or not other.points:
            continue
        try:
            al = align_series(s, other, key="date")
        except AlignmentError:
            continue
        left.extend(float(v) for v in al.left)
        right.extend(float(v) for v in al.right)
        dropped += al.dropped
    return left, right, dropped


def run_sweep(
    commits: Sequence[CommitRecord], m: ServiceMap, spec: SweepSpec
) -> dict:
    """Recompute every (filter, window) cell and correlate the cells pairwise.

    A failing cell is reported in its diagnostics; the sweep carries on.
    """
    cells: list[SweepCell] = []
    for filter_label, f, n in spec.cells:
        cell = SweepCell(f"{filter_label}/n={n}", filter_label, n)
        try:
            kept = filter_commits(commits, f)
            cal = build_calendar(kept, m, spec.granularity)
            cell.series = all_pair_series(cal, n)
            cell.summary = _summarize(cell, spec, len(kept), cal.active_days)
        except Exception as exc:  # noqa: BLE001 - reported per cell
            log.warning("sweep cell %s failed: %s", cell.label, exc)
            cell.error = f"{type(exc).__name__}: {exc}"
        cells.append(cell)

    labels = [c.label for c in cells]
    pearson_m: list[list[float | None]] = []
    spearman_m: list[list[float | None]] = []
    overlap: list[list[int]] = []
    for c1 in cells:
        prow, srow, orow = [], [], []
        for c2 in cells:
            if c1.error or c2.error:
                prow.append(None)
                srow.append(None)
                orow.append(0)
                continue
            left, right, _ = _pooled(c1, c2)
            prow.append(correlation_or_none(pearson, left, right))
            srow.append(correlation_or_none(spearman, left, right))
            orow.append(len(left))
        pearson_m.append(prow)
        spearman_m.append(srow)
        overlap.append(orow)

    return {
        "cells": [
            {
                "label": c.label,
                "filter": c.filter_label,
                "filter_spec": dict(spec.filters)[c.filter_label].to_dict(),
                "n": c.n,
                "summary": c.summary,
                "error": c.error,
            }
            for c in cells
        ],
        "labels": labels,
        "pearson": pearson_m,
        "spearman": spearman_m,
        "overlap": overlap,
    }


# --------------------------------------------------------------------------
# project grouping


@dataclass(frozen=True)
class ProjectSummary:
    name: str
    services: int
    mean_coupling: float


def _bucket_label(lo: int, hi: int | None) -> str:
    return f"{lo}+" if hi is None else f"{lo}-{hi}"


def group_projects(
    projects: Iterable[ProjectSummary],
    buckets: Sequence[tuple[int, int | None]] = DEFAULT_BUCKETS,
) -> dict[str, dict]:
    """Group projects by service count and aggregate their mean coupling.

    Buckets are inclusive ``(low, high)`` ranges, ``high=None`` meaning open
    ended.  Projects that fall in no bucket are collected under
    ``"out-of-range"``.
    """
    prev_hi = None
    for i, (lo, hi) in enumerate(buckets):
        if hi is not None and hi < lo:
            raise ValueError(f"bucket {lo}-{hi} is inverted")
        if prev_hi is not None and lo <= prev_hi:
            raise ValueError("bucket boundaries must be strictly increasing")
        if hi is None and i != len(buckets) - 1:
            raise ValueError("only the last bucket may be open ended")
        prev_hi = hi

    members: dict[str, list[ProjectSummary]] = {}
    for p in projects:
        for lo, hi in buckets:
            if p.services >= lo and (hi is None or p.services <= hi):
                key = _bucket_label(lo, hi)
                break
        else:
            key = "out-of-range"
        members.setdefault(key, []).append(p)

    order = [_bucket_label(lo, hi) for lo, hi in buckets] + ["out-of-range"]
    out = {}
    for key in order:
        group = members.get(key)
        if not group:
            continue
        values = [p.mean_coupling for p in group]
        out[key] = {
            "projects": [p.name for p in group],
            "mean": statistics.fmean(values),
            "median": statistics.median(values),
        }
    return out
