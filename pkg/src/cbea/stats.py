"""Paired and case-cluster bootstrap intervals (percentile method)."""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

WINNERS = ("cbea", "raw", "validator", "tie")
DEFAULT_RESAMPLES = 10_000


class EmptySamples(ValueError):
    pass


class UnpairedCase(ValueError):
    pass


@dataclass(frozen=True)
class PairedSample:
    fixture_id: str
    delta: float


@dataclass(frozen=True)
class Interval:
    estimate: float
    ci_low: float
    ci_high: float

    def excludes(self, value: float) -> bool:
        return not (self.ci_low <= value <= self.ci_high)


def _percentile_ci(stats: np.ndarray, alpha: float, lo_clip: float, hi_clip: float) -> tuple[float, float]:
    lo, hi = np.quantile(stats, [alpha / 2, 1 - alpha / 2])
    # resampled means can drift from a constant by float rounding; clip to the data range
    return float(min(max(lo, lo_clip), hi_clip)), float(min(max(hi, lo_clip), hi_clip))


def paired_bootstrap(
    samples: Sequence[PairedSample],
    resamples: int = DEFAULT_RESAMPLES,
    alpha: float = 0.05,
    seed: int = 0,
) -> Interval:
    """Percentile CI for the mean paired delta, resampling fixtures with replacement."""
    if not samples:
        raise EmptySamples("no paired samples")
    if resamples < 1000:
        raise ValueError("use at least 1000 resamples")
    ids = [s.fixture_id for s in samples]
    if len(set(ids)) != len(ids):
        raise ValueError("one delta per fixture")
    d = np.array([s.delta for s in samples], dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(d), size=(resamples, len(d)))
    means = d[idx].mean(axis=1)
    lo, hi = _percentile_ci(means, alpha, float(d.min()), float(d.max()))
    est = float(min(max(d.mean(), d.min()), d.max()))
    return Interval(est, lo, hi)


@dataclass(frozen=True)
class WinnerRow:
    case_id: str
    judge_id: str
    winner: str

    def __post_init__(self) -> None:
        if self.winner not in WINNERS:
            raise ValueError(f"unknown winner {self.winner!r}")


@dataclass(frozen=True)
class WinnerTable:
    rows: tuple[WinnerRow, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))
        per_case: dict[str, list[str]] = defaultdict(list)
        for r in self.rows:
            per_case[r.case_id].append(r.judge_id)
        for case, judges in per_case.items():
            if len(judges) != 2 or len(set(judges)) != 2:
                raise UnpairedCase(f"case {case} has judges {judges}; expected exactly two distinct")

    @property
    def case_ids(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(r.case_id for r in self.rows))

    def counts(self) -> np.ndarray:
        """Per-case winner counts, shape (cases, len(WINNERS))."""
        index = {c: i for i, c in enumerate(self.case_ids)}
        out = np.zeros((len(index), len(WINNERS)), dtype=int)
        for r in self.rows:
            out[index[r.case_id], WINNERS.index(r.winner)] += 1
        return out

    def shares(self) -> dict[str, float]:
        c = Counter(r.winner for r in self.rows)
        return {w: c[w] / len(self.rows) for w in WINNERS}

    @classmethod
    def from_csv(cls, path: str | Path) -> "WinnerTable":
        with open(path, newline="") as fh:
            return cls(tuple(WinnerRow(r["case_id"], r["judge_id"], r["winner"]) for r in csv.DictReader(fh)))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case_id", "judge_id", "winner"])
            for r in self.rows:
                w.writerow([r.case_id, r.judge_id, r.winner])


def resample_cases(n_cases: int, resamples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, n_cases, size=(resamples, n_cases))


def expand_resample(table: WinnerTable, case_idx: Iterable[int]) -> list[WinnerRow]:
    """Rows of one resample; both judge rows of a drawn case travel together."""
    by_case: dict[str, list[WinnerRow]] = defaultdict(list)
    for r in table.rows:
        by_case[r.case_id].append(r)
    ids = table.case_ids
    return [row for i in case_idx for row in by_case[ids[i]]]


@dataclass(frozen=True)
class ClusterResult:
    shares: Mapping[str, Interval]
    margins: Mapping[tuple[str, str], Interval]


def case_cluster_bootstrap(
    table: WinnerTable,
    resamples: int = DEFAULT_RESAMPLES,
    alpha: float = 0.05,
    seed: int = 0,
    pairs: Sequence[tuple[str, str]] = (("cbea", "raw"), ("cbea", "validator")),
) -> ClusterResult:
    """Winner shares and pairwise margins with cases as the resampling unit."""
    counts = table.counts()
    n = counts.shape[0]
    if n == 0:
        raise EmptySamples("empty winner table")
    idx = resample_cases(n, resamples, seed)
    boot = counts[idx].sum(axis=1) / (2 * n)  # (resamples, systems)
    observed = counts.sum(axis=0) / (2 * n)
    shares = {}
    for j, w in enumerate(WINNERS):
        lo, hi = _percentile_ci(boot[:, j], alpha, 0.0, 1.0)
        shares[w] = Interval(float(observed[j]), lo, hi)
    margins = {}
    for a, b in pairs:
        ja, jb = WINNERS.index(a), WINNERS.index(b)
        diff = boot[:, ja] - boot[:, jb]
        lo, hi = _percentile_ci(diff, alpha, -1.0, 1.0)
        margins[(a, b)] = Interval(float(observed[ja] - observed[jb]), lo, hi)
    return ClusterResult(shares, margins)


def judge_agreement(scores_a: Sequence[int], scores_b: Sequence[int]) -> dict[str, float]:
    """Exact and within-one agreement between two judges' rubric scores."""
    if len(scores_a) != len(scores_b):
        raise ValueError("score lists differ in length")
    if not scores_a:
        raise EmptySamples("no scores")
    n = len(scores_a)
    exact = sum(1 for a, b in zip(scores_a, scores_b) if a == b)
    within = sum(1 for a, b in zip(scores_a, scores_b) if abs(a - b) <= 1)
    return {"n": n, "exact": exact / n, "within_1": within / n}


def reference_winner_table() -> WinnerTable:
    """90 cases x 2 judges with winner shares 0.5000 / 0.3056 / 0.1778 / 0.0167."""
    layout = (
        [("cbea", "cbea")] * 29
        + [("cbea", "raw")] * 17
        + [("cbea", "validator")] * 12
        + [("cbea", "tie")] * 3
        + [("raw", "raw")] * 17
        + [("validator", "validator")] * 8
        + [("raw", "validator")] * 4
    )
    rows = []
    for i, (w1, w2) in enumerate(layout):
        rows.append(WinnerRow(f"case{i:03d}", "judge_a", w1))
        rows.append(WinnerRow(f"case{i:03d}", "judge_b", w2))
    return WinnerTable(tuple(rows))
