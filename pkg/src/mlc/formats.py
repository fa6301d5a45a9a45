"""Readers and writers for series, segment and state files."""

from __future__ import annotations

import csv
import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from datetime import date
from fractions import Fraction

from .analysis import Segment
from .coupling import (
    SERIES_COLUMNS,
    CouplingState,
    PairDiagnostics,
    PairSeries,
    WindowPoint,
    series_rows,
)


@dataclass(frozen=True)
class TabularPoint:
    end_index: int
    end_date: date | None
    coupling: Fraction
    p_nu_given_mu: Fraction | None
    p_mu_given_nu: Fraction | None


@dataclass(frozen=True)
class TabularSeries:
    """A pair series read back from CSV (decimal values, no raw counts).

    ``end_index`` is the position within the file, since the CSV carries
    dates only.
    """

    mu: str
    nu: str
    points: tuple[TabularPoint, ...]
    n: int | None = None

    @property
    def couplings(self) -> list[Fraction]:
        return [p.coupling for p in self.points]

    def track(self, name: str) -> list[Fraction | None]:
        return [getattr(p, name) for p in self.points]


def write_series_csv(series: Iterable[PairSeries], dest) -> None:
    """Write series rows to a path or an open text file."""
    if hasattr(dest, "write"):
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        w.writerows(series_rows(series))
        return
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        write_series_csv(series, fh)


def _fraction(text: str) -> Fraction | None:
    return Fraction(text) if text else None


def read_series_csv(path) -> list[TabularSeries]:
    grouped: dict[tuple[str, str], list[TabularPoint]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["mu"], row["nu"])
            points = grouped.setdefault(key, [])
            points.append(
                TabularPoint(
                    end_index=len(points) + 1,
                    end_date=date.fromisoformat(row["window_end_date"]) if row["window_end_date"] else None,
                    coupling=Fraction(row["coupling"]),
                    p_nu_given_mu=_fraction(row["p_nu_given_mu"]),
                    p_mu_given_nu=_fraction(row["p_mu_given_nu"]),
                )
            )
    return [TabularSeries(mu, nu, tuple(pts)) for (mu, nu), pts in grouped.items()]


def series_to_json(series: Iterable[PairSeries]) -> list[dict]:
    """Exact form of the series: raw window counts instead of decimals."""
    return [
        {
            "mu": s.mu,
            "nu": s.nu,
            "n": s.n,
            "diagnostics": s.diagnostics.__dict__,
            "points": [
                {
                    "end_index": p.end_index,
                    "end_date": p.end_date.isoformat() if p.end_date else None,
                    "co_days": p.co_days,
                    "mu_days": p.mu_days,
                    "nu_days": p.nu_days,
                }
                for p in s.points
            ],
        }
        for s in series
    ]


def series_from_json(data: Sequence[dict]) -> list[PairSeries]:
    out = []
    for item in data:
        n = item["n"]
        points = tuple(
            WindowPoint(
                end_index=p["end_index"],
                end_date=date.fromisoformat(p["end_date"]) if p["end_date"] else None,
                co_days=p["co_days"],
                mu_days=p["mu_days"],
                nu_days=p["nu_days"],
                n=n,
            )
            for p in item["points"]
        )
        out.append(PairSeries(item["mu"], item["nu"], n, points, PairDiagnostics(**item["diagnostics"])))
    return out


def read_series(path) -> list[PairSeries] | list[TabularSeries]:
    """Read a series file, picking the format from the extension."""
    if str(path).endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            return series_from_json(json.load(fh))
    return read_series_csv(path)


def segments_to_json(series, segments: Sequence[Segment]) -> dict:
    dates = [p.end_date for p in series.points]
    return {
        "mu": series.mu,
        "nu": series.nu,
        "segments": [
            {
                "start_idx": s.start_idx,
                "end_idx": s.end_idx,
                "start_date": dates[s.start_idx].isoformat() if dates[s.start_idx] else None,
                "end_date": dates[s.end_idx].isoformat() if dates[s.end_idx] else None,
                "slope": round(s.slope, 12),
                "sse": round(s.sse, 12),
                "label": s.label.value,
            }
            for s in segments
        ],
    }


def state_to_json(mu: str, nu: str, st: CouplingState) -> dict:
    return {
        "mu": mu,
        "nu": nu,
        "threshold": str(st.threshold),
        "patience": st.patience,
        "timeline": [
            {"end_index": i, "end_date": d.isoformat() if d else None, "state": s.value}
            for i, d, s in st.timeline
        ],
    }


def dump_json(data, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
