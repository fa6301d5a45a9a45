"""Scoring coupling predictions against human-labelled ground truth."""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from datetime import date
from fractions import Fraction

from .activity import PairDaySequence
from .analysis import Trend
from .coupling import CouplingState, PairSeries, State

Z_SCORES = {0.90: 1.645, 0.95: 1.96, 0.99: 2.576}

TruthKey = tuple[str, str, date]


def pair_key(mu: str, nu: str) -> tuple[str, str]:
    return (mu, nu) if mu < nu else (nu, mu)


@dataclass(frozen=True)
class GroundTruth:
    labels: Mapping[TruthKey, bool]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, date, bool]], provenance: str = "") -> GroundTruth:
        labels: dict[TruthKey, bool] = {}
        for mu, nu, day, coupled in rows:
            if mu == nu:
                raise ValueError(f"self pair {mu!r} in ground truth")
            key = (*pair_key(mu, nu), day)
            if key in labels:
                raise ValueError(f"duplicate ground-truth key {key}")
            labels[key] = coupled
        return cls(labels, provenance)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_ground_truth(path) -> GroundTruth:
    """Read ``mu,nu,window_end_date,coupled`` rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = [
            (r["mu"], r["nu"], date.fromisoformat(r["window_end_date"]), _parse_bool(r["coupled"]))
            for r in reader
        ]
    return GroundTruth.from_rows(rows, provenance=str(path))


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


class MissingPredictions(KeyError):
    def __init__(self, missing: Sequence[TruthKey]):
        super().__init__(f"{len(missing)} ground-truth keys have no prediction: {list(missing)[:10]}")
        self.missing = list(missing)


def prediction_index(states: Iterable[tuple[str, str, CouplingState]]) -> dict[TruthKey, bool]:
    index = {}
    for mu, nu, st in states:
        a, b = pair_key(mu, nu)
        for _, day, s in st.timeline:
            index[(a, b, day)] = s is State.COUPLED
    return index


def confusion(
    predicted: Mapping[TruthKey, bool] | Iterable[tuple[str, str, CouplingState]],
    truth: GroundTruth,
) -> Confusion:
    """Count outcomes over exactly the labelled keys."""
    if not isinstance(predicted, Mapping):
        predicted = prediction_index(predicted)
    missing = [k for k in truth.labels if k not in predicted]
    if missing:
        raise MissingPredictions(missing)
    tp = fp = fn = tn = 0
    for key, actual in truth.labels.items():
        guess = predicted[key]
        if guess and actual:
            tp += 1
        elif guess:
            fp += 1
        elif actual:
            fn += 1
        else:
            tn += 1
    return Confusion(tp, fp, fn, tn)


def precision_recall_f1(c: Confusion) -> tuple[Fraction | None, Fraction | None, Fraction | None]:
    """Exact precision, recall and F1; ``None`` where a denominator is zero."""
    precision = Fraction(c.tp, c.tp + c.fp) if c.tp + c.fp else None
    recall = Fraction(c.tp, c.tp + c.fn) if c.tp + c.fn else None
    if precision is None or recall is None:
        return precision, recall, None
    f1 = Fraction(2 * c.tp, 2 * c.tp + c.fp + c.fn)
    return precision, recall, f1


# --------------------------------------------------------------------------
# conditional-probability calibration


def next_update_outcomes(seq: PairDaySequence, series: PairSeries) -> list[bool | None]:
    """For each window, whether ``nu`` was updated on the next ``mu``-update day.

    ``None`` when ``mu`` is never updated after the window ends.
    """
    positions = {e.index: i for i, e in enumerate(seq.entries)}
    nxt: list[int | None] = [None] * len(seq.entries)
    following = None
    for i in range(len(seq.entries) - 1, -1, -1):
        nxt[i] = following
        if seq.entries[i].mu_updated:
            following = i
    out: list[bool | None] = []
    for p in series.points:
        j = nxt[positions[p.end_index]]
        out.append(None if j is None else seq.entries[j].nu_updated)
    return out


@dataclass(frozen=True)
class CalibrationBucket:
    low: Fraction
    high: Fraction
    count: int
    frequency: float | None
    mean_prediction: float | None


def _exact(p: Fraction | float) -> Fraction:
    # Fraction(0.7) sits just below 7/10; go through the shortest repr instead.
    return p if isinstance(p, Fraction) else Fraction(repr(float(p)))


def _decile(p: Fraction) -> int:
    return min(int(p * 10), 9)


def conditional_truth_check(
    predictions: Sequence[Fraction | float | None], outcomes: Sequence[bool | None]
) -> list[CalibrationBucket]:
    """Decile calibration table of predicted conditional probabilities.

    Pairs where either side is undefined are skipped.
    """
    if len(predictions) != len(outcomes):
        raise ValueError("predictions and outcomes differ in length")
    usable = [
        (_exact(p), o) for p, o in zip(predictions, outcomes) if p is not None and o is not None
    ]
    if not usable:
        raise ValueError("no ground-truth outcomes to calibrate against")
    groups: list[list[tuple[Fraction, bool]]] = [[] for _ in range(10)]
    for p, o in usable:
        groups[_decile(p)].append((p, o))
    table = []
    for i, g in enumerate(groups):
        table.append(
            CalibrationBucket(
                low=Fraction(i, 10),
                high=Fraction(i + 1, 10),
                count=len(g),
                frequency=sum(o for _, o in g) / len(g) if g else None,
                mean_prediction=float(sum(p for p, _ in g) / len(g)) if g else None,
            )
        )
    return table


def bucket_for(table: Sequence[CalibrationBucket], p: Fraction | float) -> CalibrationBucket:
    return table[_decile(_exact(p))]


# --------------------------------------------------------------------------
# trends and sample sizes


def trend_agreement(predicted: Sequence[Trend], truth: Sequence[Trend]) -> float:
    if len(predicted) != len(truth):
        raise ValueError(f"label ranges differ: {len(predicted)} vs {len(truth)}")
    if not truth:
        raise ValueError("no labels to compare")
    return sum(a == b for a, b in zip(predicted, truth)) / len(truth)


def sample_size(population: int | None, confidence: float = 0.95, margin: float = 0.01) -> int:
    """Cochran sample size with finite-population correction (p = 0.5).

    ``population=None`` means an infinite population.
    """
    if confidence not in Z_SCORES:
        raise ValueError(f"confidence must be one of {sorted(Z_SCORES)}")
    if not 0 < margin < 1:
        raise ValueError("margin must lie in (0, 1)")
    z = Z_SCORES[confidence]
    n0 = z * z * 0.25 / (margin * margin)
    if population is None:
        return math.ceil(round(n0, 9))
    if population < 1:
        raise ValueError("population must be >= 1")
    n = n0 / (1 + (n0 - 1) / population)
    return min(population, math.ceil(round(n, 9)))
