"""Sliding-window coupling, conditional coupling and coupled/decoupled state.

All metric values are exact ``Fraction`` objects.  A window spans ``n``
consecutive entries of a pair's relevant-day sequence and its values are
attributed to the window's last entry.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from datetime import date
from fractions import Fraction
from itertools import combinations

from .activity import ActivityCalendar, PairDaySequence, relevant_days

DEFAULT_WINDOW = 30
DEFAULT_THRESHOLD = Fraction(1, 2)
DEFAULT_PATIENCE = 5
BASELINE_LIMIT = 5


@dataclass(frozen=True)
class WindowConfig:
    n: int = DEFAULT_WINDOW
    stride: int = 1

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"window length must be >= 1, got {self.n}")
        if self.stride != 1:
            raise ValueError("only stride 1 is supported")


@dataclass(frozen=True)
class WindowPoint:
    end_index: int
    end_date: date | None
    co_days: int
    mu_days: int
    nu_days: int
    n: int

    @property
    def coupling(self) -> Fraction:
        return Fraction(self.co_days, self.n)

    @property
    def p_nu_given_mu(self) -> Fraction | None:
        return Fraction(self.co_days, self.mu_days) if self.mu_days else None

    @property
    def p_mu_given_nu(self) -> Fraction | None:
        return Fraction(self.co_days, self.nu_days) if self.nu_days else None


@dataclass(frozen=True)
class PairDiagnostics:
    relevant_days: int
    windows: int
    too_short: bool
    undefined_nu_given_mu: int
    undefined_mu_given_nu: int


@dataclass(frozen=True)
class PairSeries:
    mu: str
    nu: str
    n: int
    points: tuple[WindowPoint, ...]
    diagnostics: PairDiagnostics = field(compare=False)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def couplings(self) -> list[Fraction]:
        return [p.coupling for p in self.points]

    def track(self, name: str) -> list[Fraction | None]:
        return [getattr(p, name) for p in self.points]


def _window_counts(seq: PairDaySequence, n: int):
    """Yield ``(end_position, co, mu, nu)`` for each full window, O(R)."""
    co = mu = nu = 0
    entries = seq.entries
    for pos, e in enumerate(entries):
        co += e.mu_updated and e.nu_updated
        mu += e.mu_updated
        nu += e.nu_updated
        if pos >= n:
            old = entries[pos - n]
            co -= old.mu_updated and old.nu_updated
            mu -= old.mu_updated
            nu -= old.nu_updated
        if pos >= n - 1:
            yield pos, co, mu, nu


def coupling_series(seq: PairDaySequence, w: WindowConfig | int) -> PairSeries:
    """Per-window coupling and both conditional tracks for one pair.

    Fewer relevant days than the window length gives an empty series, flagged
    in the diagnostics.
    """
    n = w if isinstance(w, int) else w.n
    WindowConfig(n)
    points = tuple(
        WindowPoint(
            end_index=seq.entries[pos].index,
            end_date=seq.entries[pos].day,
            co_days=co,
            mu_days=mu,
            nu_days=nu,
            n=n,
        )
        for pos, co, mu, nu in _window_counts(seq, n)
    )
    diag = PairDiagnostics(
        relevant_days=len(seq),
        windows=len(points),
        too_short=len(seq) < n,
        undefined_nu_given_mu=sum(p.mu_days == 0 for p in points),
        undefined_mu_given_nu=sum(p.nu_days == 0 for p in points),
    )
    return PairSeries(seq.mu, seq.nu, n, points, diag)


def conditional_series(
    seq: PairDaySequence, w: WindowConfig | int
) -> tuple[list[Fraction | None], list[Fraction | None]]:
    """Return ``(P(nu|mu), P(mu|nu))`` per window; ``None`` where undefined."""
    series = coupling_series(seq, w)
    return series.track("p_nu_given_mu"), series.track("p_mu_given_nu")


def historical_cochange(seq: PairDaySequence) -> int:
    return sum(e.mu_updated and e.nu_updated for e in seq.entries)


def baseline_coupled(count: int, limit: int = BASELINE_LIMIT) -> bool:
    """Prior-work rule: coupled when co-changed more than ``limit`` times."""
    return count > limit


class State(enum.Enum):
    COUPLED = "Coupled"
    DECOUPLED = "Decoupled"


@dataclass(frozen=True)
class CouplingState:
    threshold: Fraction
    patience: int
    timeline: tuple[tuple[int, date | None, State], ...]

    @property
    def states(self) -> list[State]:
        return [s for _, _, s in self.timeline]


def _state_machine(values: Iterable[Fraction], t: Fraction, k: int) -> Iterable[State]:
    state = State.DECOUPLED
    below = 0
    for v in values:
        if v >= t:
            state = State.COUPLED
            below = 0
        else:
            below += 1
            if state is State.COUPLED and below >= k:
                state = State.DECOUPLED
        yield state


def coupling_state(
    series: PairSeries, t: Fraction | float | str = DEFAULT_THRESHOLD, k: int = DEFAULT_PATIENCE
) -> CouplingState:
    """Hysteresis on the coupling series.

    Starts Decoupled, becomes Coupled at any window with coupling >= ``t`` and
    falls back to Decoupled only after ``k`` consecutive windows below ``t``.
    """
    t = Fraction(t)
    if not 0 < t <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {t}")
    if k < 1:
        raise ValueError(f"patience must be >= 1, got {k}")
    states = _state_machine(series.couplings, t, k)
    timeline = tuple((p.end_index, p.end_date, s) for p, s in zip(series.points, states))
    return CouplingState(t, k, timeline)


def service_pairs(services: Sequence[str]) -> list[tuple[str, str]]:
    """All unordered pairs, each as ``(a, b)`` with ``a < b``."""
    return list(combinations(sorted(services), 2))


def all_pair_series(
    cal: ActivityCalendar,
    n: int,
    pairs: Iterable[tuple[str, str]] | None = None,
) -> list[PairSeries]:
    if pairs is None:
        pairs = service_pairs(cal.services)
    return [coupling_series(relevant_days(cal, mu, nu), n) for mu, nu in pairs]


def format_decimal(value: Fraction | None) -> str:
    """12 significant digits; empty for undefined values."""
    if value is None:
        return ""
    return f"{float(value):.12g}"


SERIES_COLUMNS = ("mu", "nu", "window_end_date", "coupling", "p_nu_given_mu", "p_mu_given_nu")


def series_rows(series_list: Iterable[PairSeries]) -> Iterable[list[str]]:
    for s in series_list:
        for p in s.points:
            yield [
                s.mu,
                s.nu,
                p.end_date.isoformat() if p.end_date else "",
                format_decimal(p.coupling),
                format_decimal(p.p_nu_given_mu),
                format_decimal(p.p_mu_given_nu),
            ]
