"""Difficulty statistics over collected trajectories and the API cost model."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .errors import InvariantViolation
from .records import Trajectory


@dataclass
class DifficultyStats:
    histogram: dict[int, int]
    mean_turns: Optional[float]
    n: int

    def recomputed_mean(self) -> Optional[float]:
        if self.n == 0:
            return None
        return sum(k * v for k, v in self.histogram.items()) / self.n


def difficulty_stats(trajectories: Iterable[Trajectory]) -> DifficultyStats:
    """One turn = one assistant tool call; mean is undefined for empty input."""
    histogram: dict[int, int] = {}
    n = 0
    total = 0
    for t in trajectories:
        count = t.tool_call_count
        histogram[count] = histogram.get(count, 0) + 1
        total += count
        n += 1
    mean = total / n if n else None
    return DifficultyStats(histogram=dict(sorted(histogram.items())), mean_turns=mean, n=n)


def stats_to_csv(stats: DifficultyStats, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tool_calls", "count"])
        for calls, count in sorted(stats.histogram.items()):
            writer.writerow([calls, count])


def stats_from_csv(path: str | Path) -> DifficultyStats:
    histogram: dict[int, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            histogram[int(row["tool_calls"])] = int(row["count"])
    n = sum(histogram.values())
    mean = sum(k * v for k, v in histogram.items()) / n if n else None
    return DifficultyStats(histogram=dict(sorted(histogram.items())), mean_turns=mean, n=n)


# Currency is held as integer micro-USD so the dollar examples and the
# linearity property are exact; floats appear only at the display edge.
_MICRO_PER_USD = 1_000_000


@dataclass(frozen=True)
class CostEstimate:
    n_calls: int
    micro_usd: int

    @property
    def usd(self) -> float:
        return self.micro_usd / _MICRO_PER_USD

    @property
    def cents(self) -> int:
        return self.micro_usd // 10_000

    def __add__(self, other: "CostEstimate") -> "CostEstimate":
        return CostEstimate(n_calls=self.n_calls + other.n_calls, micro_usd=self.micro_usd + other.micro_usd)


def estimate_api_cost(
    n_tasks: int,
    calls_per_task: float = 15.0,
    unit_price_per_1k: float = 1.0,
) -> CostEstimate:
    """Search API cost for ``n_tasks`` under a per-1000-calls unit price."""
    if n_tasks < 0 or calls_per_task < 0 or unit_price_per_1k < 0:
        raise InvariantViolation("cost model arguments must be non-negative")
    n_calls = round(n_tasks * calls_per_task)
    micro_per_call = round(unit_price_per_1k * _MICRO_PER_USD) // 1000
    return CostEstimate(n_calls=n_calls, micro_usd=n_calls * micro_per_call)
