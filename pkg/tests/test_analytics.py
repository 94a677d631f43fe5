import random

import pytest

from deepforge.analytics import (
    difficulty_stats,
    estimate_api_cost,
    stats_from_csv,
    stats_to_csv,
)
from deepforge.errors import InvariantViolation

from conftest import build_trajectory


def test_one_dollar_per_thousand_calls_exact():
    estimate = estimate_api_cost(1000, calls_per_task=1.0, unit_price_per_1k=1.0)
    assert estimate.n_calls == 1000
    assert estimate.usd == 1.00
    assert estimate.micro_usd == 1_000_000


def test_ten_thousand_tasks_at_fifteen_calls():
    estimate = estimate_api_cost(10_000)
    assert estimate.n_calls == 150_000
    assert estimate.usd == 150.00


def test_zero_tasks_zero_cost():
    estimate = estimate_api_cost(0)
    assert estimate.n_calls == 0
    assert estimate.usd == 0.0


def test_cost_linearity_over_random_splits():
    rng = random.Random(31337)
    for _ in range(100):
        total = rng.randrange(0, 200_000)
        a = rng.randrange(0, total + 1)
        b = total - a
        whole = estimate_api_cost(total)
        parts = estimate_api_cost(a) + estimate_api_cost(b)
        assert whole.micro_usd == parts.micro_usd
        assert whole.cents == parts.cents
        assert whole.n_calls == parts.n_calls


def test_negative_arguments_rejected():
    with pytest.raises(InvariantViolation):
        estimate_api_cost(-1)
    with pytest.raises(InvariantViolation):
        estimate_api_cost(1, calls_per_task=-0.5)


def test_difficulty_stats_hand_counts():
    trajectories = [build_trajectory(turns=n) for n in (2, 4, 6)]
    stats = difficulty_stats(trajectories)
    assert stats.n == 3
    assert stats.mean_turns == pytest.approx(4.0)
    assert stats.histogram == {2: 1, 4: 1, 6: 1}
    assert stats.recomputed_mean() == pytest.approx(stats.mean_turns, abs=1e-9)


def test_difficulty_stats_empty_input():
    stats = difficulty_stats([])
    assert stats.n == 0
    assert stats.mean_turns is None
    assert stats.histogram == {}


def test_difficulty_stats_single_trajectory():
    stats = difficulty_stats([build_trajectory(turns=11)])
    assert stats.n == 1
    assert stats.mean_turns == pytest.approx(11.0)


def test_stats_csv_round_trip(tmp_path):
    trajectories = [build_trajectory(turns=n) for n in (1, 1, 3, 5, 5, 5)]
    stats = difficulty_stats(trajectories)
    path = tmp_path / "hist.csv"
    stats_to_csv(stats, path)
    again = stats_from_csv(path)
    assert again.histogram == stats.histogram
    assert again.n == stats.n
    assert again.mean_turns == pytest.approx(stats.mean_turns, abs=1e-9)
