"""Voting-score aggregation over repeated many-objective runs.

Every run's archive carries one unit of score, shared equally among its
members. Scores are accumulated as exact fractions, so totals are
conserved exactly and do not depend on the order of the archives.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import NamedTuple

import numpy as np

SEVERITY_DIGITS = 4
RANGE_DIGITS = 3


class EmptyArchiveError(ValueError):
    def __init__(self, run: int):
        super().__init__(f"archive of run {run} is empty")
        self.run = run


def round_half_away(x: float, digits: int) -> float:
    q = Decimal(1).scaleb(-digits)
    d = Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP)
    return float(d)


class SolutionKey(NamedTuple):
    segment: int
    severity: float

    @classmethod
    def of(cls, segment, severity, digits: int = SEVERITY_DIGITS) -> "SolutionKey":
        return cls(int(segment), round_half_away(severity, digits))

    def label(self, digits: int = SEVERITY_DIGITS) -> str:
        return f"{self.severity:.{digits}f}"


class RangeKey(NamedTuple):
    """Severity interval ``[center - h, center + h)`` with ``h = 0.5 * 10**-digits``."""

    segment: int
    center: float
    digits: int = RANGE_DIGITS

    @classmethod
    def of(cls, key: SolutionKey, digits: int = RANGE_DIGITS) -> "RangeKey":
        return cls(key.segment, round_half_away(key.severity, digits), digits)

    @property
    def low(self) -> float:
        return float(Decimal(repr(self.center)) - Decimal(5).scaleb(-self.digits - 1))

    @property
    def high(self) -> float:
        return float(Decimal(repr(self.center)) + Decimal(5).scaleb(-self.digits - 1))

    def contains(self, severity: float) -> bool:
        return self.low <= severity < self.high

    def label(self) -> str:
        d = self.digits + 1
        return f"{self.low:.{d}f}-{self.high:.{d}f}"


@dataclass(frozen=True)
class VotingTally:
    scores: dict
    total_available: Fraction
    qualifying_runs: tuple = ()
    heuristic: str = "voting"
    exact: dict = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.scores)

    def __getitem__(self, key) -> float:
        return self.scores.get(key, 0.0)

    def total(self) -> float:
        return float(sum(self.exact.values(), Fraction(0)))


def _as_members(archive):
    members = []
    for m in archive:
        if hasattr(m, "segment"):
            members.append((m.segment, m.severity))
        else:
            members.append((m[0], m[1]))
    return members


def _keyed(archives, severity_digits):
    out = []
    for run, arch in enumerate(archives):
        members = _as_members(arch)
        if not members:
            raise EmptyArchiveError(run)
        out.append([SolutionKey.of(seg, sev, severity_digits) for seg, sev in members])
    return out


def _tally(keyed, qualifies, key_fn, heuristic) -> VotingTally:
    acc: dict = {}
    qualifying = []
    for run, keys in enumerate(keyed):
        if not qualifies[run]:
            continue
        qualifying.append(run)
        share = Fraction(1, len(keys))
        for k in keys:
            k = key_fn(k)
            acc[k] = acc.get(k, Fraction(0)) + share
    scores = {k: float(v) for k, v in acc.items()}
    return VotingTally(scores, Fraction(len(qualifying)), tuple(qualifying), heuristic, acc)


def _partial_mask(keyed):
    sizes = [len(k) for k in keyed]
    mean = Fraction(sum(sizes), len(sizes))
    return [s <= mean for s in sizes]


def voting_score(archives, severity_digits: int = SEVERITY_DIGITS) -> VotingTally:
    """Each archive gives ``1/|A_i|`` to every member key."""
    keyed = _keyed(archives, severity_digits)
    return _tally(keyed, [True] * len(keyed), lambda k: k, "voting")


def range_voting_score(archives, severity_digits: int = SEVERITY_DIGITS,
                       range_digits: int = RANGE_DIGITS) -> VotingTally:
    keyed = _keyed(archives, severity_digits)
    return _tally(keyed, [True] * len(keyed), lambda k: RangeKey.of(k, range_digits), "range")


def partial_voting_score(archives, severity_digits: int = SEVERITY_DIGITS) -> VotingTally:
    """Voting restricted to runs whose archive is no larger than the mean size."""
    keyed = _keyed(archives, severity_digits)
    return _tally(keyed, _partial_mask(keyed), lambda k: k, "partial")


def partial_range_voting_score(archives, severity_digits: int = SEVERITY_DIGITS,
                               range_digits: int = RANGE_DIGITS) -> VotingTally:
    keyed = _keyed(archives, severity_digits)
    return _tally(keyed, _partial_mask(keyed), lambda k: RangeKey.of(k, range_digits),
                  "partial_range")


def majority_vote_baseline(archives, severity_digits: int = SEVERITY_DIGITS) -> Counter:
    """Raw occurrence count of every key across all archives."""
    counts = Counter()
    for run, arch in enumerate(archives):
        for seg, sev in _as_members(arch):
            counts[SolutionKey.of(seg, sev, severity_digits)] += 1
    return counts


def all_tallies(archives, severity_digits: int = SEVERITY_DIGITS,
                range_digits: int = RANGE_DIGITS) -> dict:
    return {
        "voting": voting_score(archives, severity_digits),
        "range": range_voting_score(archives, severity_digits, range_digits),
        "partial": partial_voting_score(archives, severity_digits),
        "partial_range": partial_range_voting_score(archives, severity_digits, range_digits),
    }


class RankedEntry(NamedTuple):
    rank: int
    key: tuple
    score: float
    percentage: float

    def percentage_label(self) -> str:
        return format_percentage(self.percentage)


def format_percentage(pct: float) -> str:
    return f"{pct:.3f}%"


def _sort_key(key):
    return (key[0], key[1])


def rank_report(tally, k: int = 5) -> list[RankedEntry]:
    """Top ``k`` keys by score; ties go to the smaller (segment, severity)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if isinstance(tally, Counter):
        items = [(key, Fraction(v)) for key, v in tally.items()]
        total = Fraction(sum(tally.values()))
    else:
        items = list((tally.exact or {kk: Fraction(v) for kk, v in tally.scores.items()}).items())
        total = Fraction(tally.total_available)
    items.sort(key=lambda kv: (-kv[1], _sort_key(kv[0])))
    out = []
    for i, (key, score) in enumerate(items[:k]):
        pct = float(score / total * 100) if total else 0.0
        out.append(RankedEntry(i + 1, key, float(score), pct))
    return out


def rank_of(tally, predicate) -> int | None:
    """1-based rank of the best key satisfying ``predicate``, or None."""
    for entry in rank_report(tally, max(len(tally), 1)):
        if predicate(entry.key):
            return entry.rank
    return None


def select_objective_subset(l: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform ``n``-subset of ``range(l)`` without replacement, sorted."""
    if not 1 <= n <= l:
        raise ValueError(f"cannot select {n} objectives out of {l}")
    return np.sort(rng.choice(l, size=n, replace=False))


def _key_columns(key):
    return key.segment, key.label()


def write_tally_csv(tally, path) -> None:
    """Rows of ``(segment, severity_or_range, score, percentage)`` in rank order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["segment", "severity_or_range", "score", "percentage"])
        for e in rank_report(tally, max(len(tally), 1)):
            seg, label = _key_columns(e.key)
            w.writerow([seg, label, repr(e.score), repr(e.percentage)])


def tally_metadata(tally, **extra) -> dict:
    if isinstance(tally, Counter):
        return {"heuristic": "majority", "total": sum(tally.values()), "n_keys": len(tally), **extra}
    return {
        "heuristic": tally.heuristic,
        "total_available": float(tally.total_available),
        "qualifying_runs": list(tally.qualifying_runs),
        "n_keys": len(tally),
        **extra,
    }


def write_tally_json(tally, path, **extra) -> None:
    meta = tally_metadata(tally, **extra)
    entries = []
    for e in rank_report(tally, max(len(tally), 1)):
        seg, label = _key_columns(e.key)
        row = {"segment": seg, "key": label}
        if isinstance(e.key, RangeKey):
            row.update(severity=e.key.center, low=e.key.low, high=e.key.high)
        else:
            row["severity"] = e.key.severity
        row.update(score=e.score, percentage=e.percentage)
        entries.append(row)
    meta["entries"] = entries
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
