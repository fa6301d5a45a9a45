"""Seeded synthetic commit histories with planted coupling episodes."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone

from .ingest import CommitRecord, serialize_commit_log

MESSAGES = (
    "refactor: extract {svc} helpers",
    "fix null handling in {svc}",
    "feat: add endpoint to {svc}",
    "improve {svc} query performance",
    "docs: describe {svc} setup",
    "update {svc} dependencies",
)


@dataclass(frozen=True)
class Episode:
    mu: str
    nu: str
    start: int
    end: int
    p: float


@dataclass(frozen=True)
class SyntheticSpec:
    services: int
    days: int
    base_rate: float | tuple[float, ...] = 0.3
    episodes: tuple[Episode, ...] = ()
    seed: int = 0
    max_files_per_service: int = 3
    max_churn_per_file: int = 40
    unmapped_rate: float = 0.0
    start_date: date = date(2020, 1, 1)
    authors: int = 5

    def __post_init__(self) -> None:
        if self.services < 1 or self.days < 1:
            raise ValueError("need at least one service and one day")
        if isinstance(self.base_rate, (list, tuple)):
            if len(self.base_rate) != self.services:
                raise ValueError("one base rate per service expected")
            object.__setattr__(self, "base_rate", tuple(self.base_rate))
        for p in (*self.rates, self.unmapped_rate, *(e.p for e in self.episodes)):
            if not 0 <= p <= 1:
                raise ValueError(f"probability out of range: {p}")
        names = set(self.service_names)
        for e in self.episodes:
            if e.mu not in names or e.nu not in names or e.mu == e.nu:
                raise ValueError(f"bad episode pair {e.mu}/{e.nu}")
            if not 1 <= e.start <= e.end <= self.days:
                raise ValueError(f"episode range {e.start}-{e.end} outside 1..{self.days}")

    @property
    def service_names(self) -> list[str]:
        return [service_name(i) for i in range(1, self.services + 1)]

    @property
    def rates(self) -> tuple[float, ...]:
        if isinstance(self.base_rate, tuple):
            return self.base_rate
        return (self.base_rate,) * self.services

    @classmethod
    def from_dict(cls, data: dict) -> SyntheticSpec:
        data = dict(data)
        data["episodes"] = tuple(Episode(**e) for e in data.get("episodes", ()))
        if isinstance(data.get("base_rate"), list):
            data["base_rate"] = tuple(data["base_rate"])
        if "start_date" in data:
            data["start_date"] = date.fromisoformat(data["start_date"])
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "services": self.services,
            "days": self.days,
            "base_rate": list(self.base_rate) if isinstance(self.base_rate, tuple) else self.base_rate,
            "episodes": [e.__dict__ for e in self.episodes],
            "seed": self.seed,
            "max_files_per_service": self.max_files_per_service,
            "max_churn_per_file": self.max_churn_per_file,
            "unmapped_rate": self.unmapped_rate,
            "start_date": self.start_date.isoformat(),
            "authors": self.authors,
        }


def service_name(i: int) -> str:
    return f"svc-{i:02d}"


def service_map_document(spec: SyntheticSpec) -> str:
    return "".join(f"{s}/** => {s}\n" for s in spec.service_names)


@dataclass
class _DayPlan:
    updated: dict[str, bool]
    groups: list[list[str]] = field(default_factory=list)


def _plan_day(spec: SyntheticSpec, day: int, rng: random.Random) -> _DayPlan:
    names = spec.service_names
    updated = {s: rng.random() < r for s, r in zip(names, spec.rates)}
    plan = _DayPlan(updated)
    grouped: set[str] = set()
    for e in spec.episodes:
        if not e.start <= day <= e.end or not updated[e.mu]:
            continue
        # Within an episode the nu update on a mu day is decided by the
        # episode alone, so P(nu | mu) on those days is exactly e.p.
        updated[e.nu] = rng.random() < e.p
        if updated[e.nu] and e.mu not in grouped and e.nu not in grouped:
            plan.groups.append([e.mu, e.nu])
            grouped.update((e.mu, e.nu))
    plan.groups.extend([s] for s in names if updated[s] and s not in grouped)
    return plan


def generate_commits(spec: SyntheticSpec) -> list[CommitRecord]:
    """Deterministic commit stream for ``spec``.

    Every service is updated independently with its base rate per day.
    Inside an episode, whenever ``mu`` is updated, ``nu`` is updated on the
    same day with probability ``p``; those co-updates share one commit.
    """
    rng = random.Random(spec.seed)
    commits = []
    counter = 0
    for day in range(1, spec.days + 1):
        plan = _plan_day(spec, day, rng)
        groups = list(plan.groups)
        if spec.unmapped_rate and rng.random() < spec.unmapped_rate:
            groups.append([])
        current = spec.start_date + timedelta(days=day - 1)
        base = datetime.combine(current, time(9, 0), tzinfo=timezone.utc)
        for slot, services in enumerate(groups):
            files = []
            added = deleted = 0
            for svc in services:
                for _ in range(rng.randint(1, spec.max_files_per_service)):
                    files.append(f"{svc}/src/File{rng.randint(1, 50)}.java")
                    added += rng.randint(1, spec.max_churn_per_file)
                    deleted += rng.randint(0, spec.max_churn_per_file // 2)
            if not services:
                files.append("README.md")
                added += rng.randint(1, 10)
            template = rng.choice(MESSAGES)
            counter += 1
            commits.append(
                CommitRecord(
                    id=hashlib.sha1(f"{spec.seed}:{counter}".encode()).hexdigest(),
                    timestamp=base + timedelta(minutes=7 * slot),
                    author=f"dev{rng.randint(1, spec.authors)}",
                    message=template.format(svc="+".join(services) or "repo"),
                    files=tuple(dict.fromkeys(files)),
                    churn=(added, deleted),
                )
            )
    return commits


def generate_history(spec: SyntheticSpec) -> str:
    """The synthetic history rendered in the commit export format."""
    return serialize_commit_log(generate_commits(spec))


def load_synthetic_spec(path) -> SyntheticSpec:
    with open(path, encoding="utf-8") as fh:
        return SyntheticSpec.from_dict(json.load(fh))
