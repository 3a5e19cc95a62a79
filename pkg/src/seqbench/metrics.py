"""Goal, policy and algorithm-following metrics.

Guessing environments are scored with ``err_min`` (closest guess) and
``err_sum`` (accumulated error); graph environments with ``coverage_min``
(unvisited fraction at the end) and ``coverage_sum`` (accumulated unvisited
fraction over the steps actually taken).  ``acc`` is the fraction of steps
that followed the intended algorithm; ``psacc`` is its per-step version over
a teacher-guided test set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence


def err_min(guesses: Sequence[int], target: int, low: int, high: int, literal_max: bool = False) -> float:
    """Smallest normalised guess error; 1.0 when no valid guess was made.

    ``literal_max=True`` takes the largest error instead, for comparison with
    tables computed under that reading.
    """
    if not guesses:
        return 1.0
    pick = max if literal_max else min
    return pick(abs(g - target) for g in guesses) / (high - low + 1)


def err_sum(guesses: Sequence[int], target: int, low: int, high: int) -> float:
    if not guesses:
        return 1.0
    return math.fsum(abs(g - target) for g in guesses) / (high - low + 1)


def coverage_min(timeline: Sequence[int], num_nodes: int) -> float:
    last = timeline[-1] if timeline else 1
    return 1.0 - last / num_nodes


def coverage_sum(timeline: Sequence[int], num_nodes: int) -> float:
    return math.fsum(1.0 - v / num_nodes for v in timeline)


def acc(follow_flags: Sequence[bool]) -> float:
    if not follow_flags:
        return 0.0
    return sum(bool(f) for f in follow_flags) / len(follow_flags)


@dataclass
class StepFollowMatrix:
    """Per-case follow flags indexed by optimal-policy step, with each case's k_max."""

    rows: list[list[bool]] = field(default_factory=list)
    k_max: list[int] = field(default_factory=list)

    def add(self, flags: Sequence[bool], case_k_max: int) -> None:
        if len(flags) > case_k_max:
            raise ValueError(f"{len(flags)} flags exceed k_max={case_k_max}")
        self.rows.append(list(flags))
        self.k_max.append(case_k_max)


def psacc(matrix: StepFollowMatrix) -> list[float]:
    """PSACC_k for k = 1..K_max, where K_max is the largest per-case k_max."""
    if not matrix.rows:
        return []
    big_k = max(matrix.k_max)
    out = []
    for k in range(1, big_k + 1):
        eligible = [i for i, km in enumerate(matrix.k_max) if km >= k]
        if not eligible:
            raise ValueError(f"no case reaches step {k}; k_max bookkeeping is inconsistent")
        hits = sum(
            1 for i in eligible if len(matrix.rows[i]) >= k and matrix.rows[i][k - 1]
        )
        out.append(hits / len(eligible))
    return out


def psacc_avg(matrix: StepFollowMatrix) -> float:
    per_step = psacc(matrix)
    if not per_step:
        return 0.0
    return math.fsum(per_step) / len(per_step)


@dataclass(frozen=True)
class Spread:
    avg: float
    margin_min: float
    margin_max: float


def aggregate(values: Sequence[float]) -> Spread:
    """Mean of repeated runs plus its distance to the smallest and largest run."""
    if not values:
        raise ValueError("aggregate needs at least one value")
    avg = math.fsum(values) / len(values)
    return Spread(avg, avg - min(values), max(values) - avg)


@dataclass
class EpisodeMetrics:
    kind: str
    k_total: int
    follow_flags: list[bool]
    acc: float
    err_min: float | None = None
    err_sum: float | None = None
    g_min: float | None = None
    g_sum: float | None = None

    @property
    def goal(self) -> float:
        return self.err_min if self.err_min is not None else self.g_min

    @property
    def policy(self) -> float:
        return self.err_sum if self.err_sum is not None else self.g_sum
