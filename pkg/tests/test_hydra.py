import random

import numpy as np
import pytest

from negoforge.agent import STRATEGY_SPACE
from negoforge.hydra import (
    best_ratio_report,
    contributes,
    fill_matrix,
    hydra,
    make_modified_metric,
    oracle_progression,
)
from negoforge.portfolio import (
    IncompleteMatrixError,
    PerformanceMatrix,
    Portfolio,
    PortfolioEntry,
)
from negoforge.selector import SelectorSearchSpec, constant_selector


def bimodal_space(n_settings=30, seed=0):
    """Two clusters of settings preferring opposite tradeoff values."""
    rng = np.random.default_rng(seed)
    settings, features, cluster_of = [], {}, {}
    for i in range(n_settings):
        setting_id = f"s{i:02d}"
        cluster = 0 if i < n_settings // 2 else 1
        settings.append(setting_id)
        cluster_of[setting_id] = cluster
        features[setting_id] = np.concatenate(
            [[cluster + rng.normal(0, 0.05)], rng.uniform(0, 1, 3)]
        )

    def metric(theta, setting_id, seed_):
        peak = 0.2 if cluster_of[setting_id] == 0 else 0.8
        return max(0.0, 1.0 - (theta.tradeoff - peak) ** 2)

    return settings, features, metric, cluster_of


def test_k_max_one_degenerates_to_constant_selector():
    settings, features, metric, _ = bimodal_space(10)
    result = hydra(STRATEGY_SPACE, settings, metric, k_max=1, seed=0, features=features,
                   smbo_budget=50, matrix_repetitions=2)
    assert len(result.portfolio) == 1
    assert result.selector.method == "constant"
    assert result.portfolio.entries[0].iteration == 1


def test_bimodal_portfolio_specializes_and_oracle_grows():
    settings, features, metric, cluster_of = bimodal_space(30)
    result = hydra(STRATEGY_SPACE, settings, metric, k_max=2, seed=3, features=features,
                   smbo_budget=250, matrix_repetitions=3)
    tradeoffs = sorted(entry.config.tradeoff for entry in result.portfolio.entries)
    assert tradeoffs[0] < 0.5 < tradeoffs[1]
    assert result.oracle_by_size[1] > result.oracle_by_size[0]
    assert all(result.contribution.values())


def test_construction_order_matches_iterations():
    settings, features, metric, _ = bimodal_space(12)
    result = hydra(STRATEGY_SPACE, settings, metric, k_max=3, seed=1, features=features,
                   smbo_budget=40, matrix_repetitions=1)
    assert [entry.iteration for entry in result.portfolio.entries] == [1, 2, 3]
    assert result.portfolio.ids == ["theta1", "theta2", "theta3"]


def test_checkpoint_called_each_iteration():
    settings, features, metric, _ = bimodal_space(10)
    seen = []
    hydra(STRATEGY_SPACE, settings, metric, k_max=2, seed=2, features=features,
          smbo_budget=30, matrix_repetitions=1,
          checkpoint=lambda k, portfolio, matrix, selector: seen.append((k, len(portfolio))))
    assert seen == [(1, 1), (2, 2)]


def test_matrix_repetition_counts():
    settings, features, metric, _ = bimodal_space(8)
    result = hydra(STRATEGY_SPACE, settings, metric, k_max=1, seed=4, features=features,
                   smbo_budget=20, matrix_repetitions=10)
    for setting_id in settings:
        assert result.matrix.count("theta1", setting_id) >= 10


# --- modified metric ---


def _one_strategy_portfolio():
    return Portfolio(entries=[PortfolioEntry(STRATEGY_SPACE.default(), 1, 0)])


def test_modified_metric_takes_the_max():
    portfolio = _one_strategy_portfolio()
    matrix = PerformanceMatrix()
    matrix.add_runs("theta1", "s", [0.8])
    features = {"s": np.zeros(3)}
    selector = constant_selector(1, 3)

    low = make_modified_metric(lambda *a: 0.6, selector, portfolio, matrix, features)
    high = make_modified_metric(lambda *a: 0.9, selector, portfolio, matrix, features)
    assert low(STRATEGY_SPACE.default(), "s", 0) == pytest.approx(0.8)
    assert high(STRATEGY_SPACE.default(), "s", 0) == pytest.approx(0.9)


def test_modified_metric_dominance_on_random_draws():
    portfolio = _one_strategy_portfolio()
    rng = random.Random(0)
    for _ in range(1000):
        base_value = rng.random()
        selected_value = rng.random()
        matrix = PerformanceMatrix()
        matrix.add_runs("theta1", "s", [selected_value])
        metric = make_modified_metric(
            lambda *a: base_value, constant_selector(1, 1), portfolio, matrix,
            {"s": np.zeros(1)},
        )
        value = metric(STRATEGY_SPACE.default(), "s", 0)
        assert value >= base_value and value >= selected_value
        assert value == max(base_value, selected_value)


def test_modified_metric_triggers_fill_for_missing_cell():
    portfolio = _one_strategy_portfolio()
    matrix = PerformanceMatrix(strategy_ids=["theta1"], setting_ids=["s"])
    filled = []

    def fill(strategy_id, setting_id):
        filled.append((strategy_id, setting_id))
        matrix.add_runs(strategy_id, setting_id, [0.5])

    metric = make_modified_metric(lambda *a: 0.2, constant_selector(1, 1), portfolio,
                                  matrix, {"s": np.zeros(1)}, fill)
    assert metric(STRATEGY_SPACE.default(), "s", 0) == pytest.approx(0.5)
    assert filled == [("theta1", "s")]
    with pytest.raises(KeyError):
        make_modified_metric(lambda *a: 0.2, constant_selector(1, 1), portfolio,
                             PerformanceMatrix(), {"s": np.zeros(1)})(
            STRATEGY_SPACE.default(), "s", 0
        )


# --- contribution ---


def _matrix_from_grid(grid):
    matrix = PerformanceMatrix()
    for strategy_id, row in grid.items():
        for setting_id, value in row.items():
            matrix.add_runs(strategy_id, setting_id, [value])
    return matrix


def test_contributes_strictly_best_somewhere():
    matrix = _matrix_from_grid(
        {
            "theta1": {"s1": 0.9, "s2": 0.2},
            "theta2": {"s1": 0.1, "s2": 0.8},
        }
    )
    assert contributes("theta1", matrix, ["theta1", "theta2"], ["s1", "s2"])
    assert contributes("theta2", matrix, ["theta1", "theta2"], ["s1", "s2"])


def test_contributes_false_when_dominated_or_tied():
    matrix = _matrix_from_grid(
        {
            "theta1": {"s1": 0.9, "s2": 0.8},
            "theta2": {"s1": 0.9, "s2": 0.7},
        }
    )
    # theta2 ties on s1 and loses s2: never strictly best
    assert not contributes("theta2", matrix, ["theta1", "theta2"], ["s1", "s2"])
    assert contributes("theta1", matrix, ["theta1", "theta2"], ["s1", "s2"])


def test_contributes_requires_complete_matrix():
    matrix = _matrix_from_grid({"theta1": {"s1": 0.9}, "theta2": {"s2": 0.8}})
    with pytest.raises(IncompleteMatrixError):
        contributes("theta1", matrix, ["theta1", "theta2"], ["s1", "s2"])


# --- best-ratio report ---


def test_best_ratios_dominating_strategy():
    matrix = _matrix_from_grid(
        {
            "theta1": {f"s{i}": 0.9 for i in range(5)},
            "theta2": {f"s{i}": 0.5 for i in range(5)},
        }
    )
    report = best_ratio_report(matrix, ["theta1", "theta2"], top_k=2)
    assert report["theta1"]["top_1"] == 1.0
    assert report["theta1"]["sum"] == 1.0
    assert report["theta2"]["top_1"] == 0.0
    assert report["theta2"]["sum"] == 0.0


def test_best_ratios_all_identical_mass_in_full_tier():
    strategies = ["theta1", "theta2", "theta3", "theta4"]
    matrix = _matrix_from_grid({t: {f"s{i}": 0.6 for i in range(4)} for t in strategies})
    report = best_ratio_report(matrix, strategies, top_k=4)
    for strategy_id in strategies:
        assert report[strategy_id]["top_4"] == 1.0
        assert report[strategy_id]["top_1"] == 0.0
        assert report[strategy_id]["sum"] == 1.0


def test_best_ratios_hand_counted_grid():
    # 4 strategies x 5 settings, hand-counted tie structure
    grid = {
        "theta1": {"s1": 0.9, "s2": 0.5, "s3": 0.7, "s4": 0.6, "s5": 0.6},
        "theta2": {"s1": 0.1, "s2": 0.5, "s3": 0.7, "s4": 0.5, "s5": 0.6},
        "theta3": {"s1": 0.1, "s2": 0.4, "s3": 0.2, "s4": 0.4, "s5": 0.6},
        "theta4": {"s1": 0.1, "s2": 0.5, "s3": 0.1, "s4": 0.3, "s5": 0.6},
    }
    # best groups: s1 {t1}, s2 {t1,t2,t4}, s3 {t1,t2}, s4 {t1}, s5 all four
    report = best_ratio_report(_matrix_from_grid(grid),
                               ["theta1", "theta2", "theta3", "theta4"], top_k=4)
    assert report["theta1"] == {
        "top_1": 0.4, "top_2": 0.2, "top_3": 0.2, "top_4": 0.2, "sum": 1.0
    }
    assert report["theta2"] == {
        "top_1": 0.0, "top_2": 0.2, "top_3": 0.2, "top_4": 0.2, "sum": 0.6
    }
    assert report["theta3"] == {
        "top_1": 0.0, "top_2": 0.0, "top_3": 0.0, "top_4": 0.2, "sum": 0.2
    }
    assert report["theta4"] == {
        "top_1": 0.0, "top_2": 0.0, "top_3": 0.2, "top_4": 0.2, "sum": 0.4
    }


def test_oracle_progression_monotone_on_random_matrices():
    rng = np.random.default_rng(5)
    for _ in range(10):
        matrix = PerformanceMatrix()
        strategies = [f"theta{k}" for k in range(1, 5)]
        for strategy_id in strategies:
            for s in range(8):
                matrix.add_runs(strategy_id, f"s{s}", [float(rng.uniform(0, 1))])
        progression = oracle_progression(matrix, strategies)
        assert all(a <= b + 1e-12 for a, b in zip(progression, progression[1:]))


def test_fill_matrix_is_idempotent_and_parallel_consistent():
    settings, features, metric, _ = bimodal_space(6)
    entry = PortfolioEntry(STRATEGY_SPACE.default(), 1, 0)
    sequential = PerformanceMatrix()
    fill_matrix(sequential, [entry], settings, metric, repetitions=4, seed=9)
    again = PerformanceMatrix()
    fill_matrix(again, [entry], settings, metric, repetitions=4, seed=9)
    fill_matrix(again, [entry], settings, metric, repetitions=4, seed=9)  # no-op
    assert sequential.to_rows() == again.to_rows()
