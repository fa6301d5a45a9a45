from __future__ import annotations

from datetime import date, datetime, timedelta, timezone

import pytest

from mlc.ingest import CommitRecord, serialize_commit_log
from mlc.servicemap import parse_service_map

# Relevant-day pattern of the worked example: mu, nu and a third service rho.
FIG1_UPDATES = {
    "mu": {1, 2, 4, 6, 10},
    "nu": {1, 2, 3, 4, 5, 10},
    "rho": {7, 8, 9},
}
FIG1_MAP = "services/mu/** => mu\nservices/nu/** => nu\nservices/rho/** => rho\n"


def fig1_dates() -> list[date]:
    """Ten active dates with calendar gaps (weekends) in between."""
    out, d = [], date(2023, 5, 1)
    while len(out) < 10:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def fig1_commits() -> list[CommitRecord]:
    commits = []
    for i, day in enumerate(fig1_dates(), start=1):
        stamp = datetime(day.year, day.month, day.day, 10, 0, tzinfo=timezone.utc)
        touched = [s for s in ("mu", "nu", "rho") if i in FIG1_UPDATES[s]]
        for k, svc in enumerate(touched):
            commits.append(
                CommitRecord(
                    id=f"d{i:02d}{svc}",
                    timestamp=stamp + timedelta(hours=k),
                    author="ada",
                    message=f"update {svc} on day {i}",
                    files=(f"services/{svc}/src/Main.java",),
                    churn=(i, k),
                )
            )
    return commits


@pytest.fixture
def fig1_map():
    return parse_service_map(FIG1_MAP)


@pytest.fixture
def fig1_log() -> str:
    return serialize_commit_log(fig1_commits())


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Shared list of ``(criterion, ok, detail)`` lines for the summary."""
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, detail in sorted(lines, key=lambda x: x[0]):
        terminalreporter.write_line(f"{label}: {status}  {detail}")
