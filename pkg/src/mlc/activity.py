"""Active-day calendars and per-pair relevant-day sequences."""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from datetime import date
from typing import NamedTuple

from .ingest import CommitRecord
from .servicemap import ServiceMap

DAY = "day"
COMMIT = "commit"


@dataclass(frozen=True)
class ActivityCalendar:
    """Project activity, one unit per active day (or per commit).

    ``days[i - 1]`` is the date of active unit ``i``; ``updates`` maps each
    service to the 1-based unit indices on which it was updated.  In commit
    granularity, each commit is its own unit and ``days`` is non-decreasing
    rather than strictly increasing.
    """

    days: tuple[date, ...]
    updates: Mapping[str, frozenset[int]]
    granularity: str = DAY

    def __post_init__(self) -> None:
        if self.granularity not in (DAY, COMMIT):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        for a, b in zip(self.days, self.days[1:]):
            if b < a or (b == a and self.granularity == DAY):
                raise ValueError("calendar days must be increasing")
        size = len(self.days)
        for service, idx in self.updates.items():
            if any(i < 1 or i > size for i in idx):
                raise ValueError(f"update index out of range for {service!r}")

    @property
    def active_days(self) -> int:
        return len(self.days)

    @property
    def services(self) -> tuple[str, ...]:
        return tuple(self.updates)

    def to_json(self) -> dict:
        return {
            "granularity": self.granularity,
            "days": [d.isoformat() for d in self.days],
            "updates": {s: sorted(ix) for s, ix in self.updates.items()},
        }

    @classmethod
    def from_json(cls, data: dict) -> ActivityCalendar:
        return cls(
            days=tuple(date.fromisoformat(d) for d in data["days"]),
            updates={s: frozenset(ix) for s, ix in data["updates"].items()},
            granularity=data.get("granularity", DAY),
        )


def build_calendar(
    commits: Iterable[CommitRecord], m: ServiceMap, granularity: str = DAY
) -> ActivityCalendar:
    """Group already-filtered commits by UTC committer date and by service.

    Every date with a commit is active, even if the commit only touches
    unmapped files.
    """
    commits = list(commits)
    if granularity == DAY:
        dated: dict[date, set[str]] = {}
        for c in commits:
            touched = dated.setdefault(c.utc_date, set())
            touched.update(s for s in map(m.resolve, c.files) if s is not None)
        days = sorted(dated)
        touched_per_unit = [dated[d] for d in days]
    elif granularity == COMMIT:
        ordered = sorted(commits, key=lambda c: c.timestamp)
        days = [c.utc_date for c in ordered]
        touched_per_unit = [
            {s for s in map(m.resolve, c.files) if s is not None} for c in ordered
        ]
    else:
        raise ValueError(f"unknown granularity {granularity!r}")

    updates: dict[str, set[int]] = {s: set() for s in m.services}
    for index, touched in enumerate(touched_per_unit, start=1):
        for service in touched:
            updates[service].add(index)
    return ActivityCalendar(
        days=tuple(days),
        updates={s: frozenset(ix) for s, ix in updates.items()},
        granularity=granularity,
    )


class DayEntry(NamedTuple):
    index: int
    mu_updated: bool
    nu_updated: bool
    day: date | None = None


@dataclass(frozen=True)
class PairDaySequence:
    mu: str
    nu: str
    entries: tuple[DayEntry, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(DayEntry(*e) for e in self.entries))
        for e in self.entries:
            if not (e.mu_updated or e.nu_updated):
                raise ValueError(f"day {e.index} is not relevant for ({self.mu}, {self.nu})")
        for a, b in zip(self.entries, self.entries[1:]):
            if b.index <= a.index:
                raise ValueError("entry indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.entries)

    def swapped(self) -> PairDaySequence:
        return PairDaySequence(
            self.nu,
            self.mu,
            tuple(DayEntry(e.index, e.nu_updated, e.mu_updated, e.day) for e in self.entries),
        )

    @classmethod
    def from_day_sets(
        cls, mu_days: Iterable[int], nu_days: Iterable[int], mu: str = "mu", nu: str = "nu"
    ) -> PairDaySequence:
        a, b = set(mu_days), set(nu_days)
        return cls(mu, nu, tuple(DayEntry(i, i in a, i in b) for i in sorted(a | b)))


def relevant_days(cal: ActivityCalendar, mu: str, nu: str) -> PairDaySequence:
    """Active days on which ``mu`` or ``nu`` (or both) were updated."""
    if mu == nu:
        raise ValueError(f"self-coupling is undefined ({mu!r})")
    for s in (mu, nu):
        if s not in cal.updates:
            raise KeyError(f"unknown service {s!r}")
    a, b = cal.updates[mu], cal.updates[nu]
    entries = tuple(
        DayEntry(i, i in a, i in b, cal.days[i - 1]) for i in sorted(a | b)
    )
    return PairDaySequence(mu, nu, entries)


def write_calendar(cal: ActivityCalendar, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cal.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_calendar(path) -> ActivityCalendar:
    with open(path, encoding="utf-8") as fh:
        return ActivityCalendar.from_json(json.load(fh))
