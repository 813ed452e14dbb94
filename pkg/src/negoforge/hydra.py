"""Iterative portfolio construction.

Each iteration configures one strategy, scores it on every training setting,
refits the selector, and swaps the optimisation metric for one that only
credits improvement over what the current portfolio-plus-selector already
achieves: max(own score, selected strategy's matrix score). The first
iteration runs on the unmodified metric, so the first portfolio member is
the plain single-best optimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable, Sequence

import numpy as np

from .agent import ConfigurationSpace, StrategyConfig
from .portfolio import PerformanceMatrix, Portfolio, PortfolioEntry
from .seeding import derive_seed
from .selector import SelectorModel, SelectorSearchSpec, fit_selector, oracle_mean
from .smbo import Metric, smbo


def _evaluate_cell(metric: Metric, job: tuple[StrategyConfig, str, int]) -> float:
    config, setting_id, seed = job
    return metric(config, setting_id, seed)


def fill_matrix(
    matrix: PerformanceMatrix,
    entries: Sequence[PortfolioEntry],
    setting_ids: Sequence[str],
    metric: Metric,
    repetitions: int,
    seed: int,
    map_fn: Callable = map,
) -> None:
    """Ensure every (entry, setting) cell holds at least ``repetitions`` runs.

    Cell seeds are derived from (strategy, setting, repetition), so parallel
    evaluation and sequential evaluation produce identical matrices.
    """
    jobs: list[tuple[StrategyConfig, str, int]] = []
    slots: list[tuple[str, str]] = []
    for entry in entries:
        for setting_id in setting_ids:
            have = matrix.count(entry.strategy_id, setting_id)
            for rep in range(have, repetitions):
                jobs.append(
                    (entry.config, setting_id, derive_seed(seed, "cell", entry.strategy_id, setting_id, rep))
                )
                slots.append((entry.strategy_id, setting_id))
    if not jobs:
        return
    values = list(map_fn(partial(_evaluate_cell, metric), jobs))
    for (strategy_id, setting_id), value in zip(slots, values):
        matrix.add_runs(strategy_id, setting_id, [float(value)])


def make_modified_metric(
    base_metric: Metric,
    selector: SelectorModel,
    portfolio: Portfolio,
    matrix: PerformanceMatrix,
    features: dict[str, np.ndarray],
    fill: Callable[[str, str], None] | None = None,
) -> Metric:
    """max(own observed score, matrix score of the selector's pick).

    The selected strategy's score is a matrix lookup, never a re-simulation;
    a missing cell triggers ``fill`` once to evaluate it.
    """
    strategy_ids = portfolio.ids

    def metric(theta: StrategyConfig, setting_id: str, seed: int) -> float:
        own = base_metric(theta, setting_id, seed)
        pick = strategy_ids[selector.select(features[setting_id])]
        if not matrix.has(pick, setting_id):
            if fill is None:
                raise KeyError(f"matrix cell ({pick}, {setting_id}) missing and no fill hook")
            fill(pick, setting_id)
        return max(own, matrix.mean(pick, setting_id))

    return metric


def contributes(
    strategy_id: str,
    matrix: PerformanceMatrix,
    strategy_ids: Sequence[str],
    setting_ids: Sequence[str],
) -> bool:
    """True iff the strategy is strictly best on at least one setting."""
    matrix.require_complete(list(strategy_ids), list(setting_ids))
    others = [t for t in strategy_ids if t != strategy_id]
    for setting_id in setting_ids:
        own = matrix.mean(strategy_id, setting_id)
        if all(own > matrix.mean(other, setting_id) for other in others):
            return True
    return False


def best_ratio_report(
    matrix: PerformanceMatrix,
    strategy_ids: Sequence[str],
    setting_ids: Sequence[str] | None = None,
    top_k: int = 4,
) -> dict[str, dict]:
    """Per strategy: the fraction of settings where it sits in the best
    tie-group, broken down by tie-group size (1 = single best), plus the sum.

    All-way ties land every strategy in the ``top_{n}`` tier, mirroring how a
    fully tied setting credits the whole portfolio equally.
    """
    settings = list(setting_ids if setting_ids is not None else matrix.setting_ids)
    matrix.require_complete(list(strategy_ids), settings)
    tallies = {t: {size: 0 for size in range(1, top_k + 1)} for t in strategy_ids}
    group_total = {t: 0 for t in strategy_ids}
    for setting_id in settings:
        column = matrix.column(setting_id, list(strategy_ids))
        best = column.max()
        group = [i for i, value in enumerate(column) if value == best]
        size = len(group)
        for i in group:
            group_total[strategy_ids[i]] += 1
            if size <= top_k:
                tallies[strategy_ids[i]][size] += 1
    n = len(settings)
    report = {}
    for strategy_id in strategy_ids:
        row = {f"top_{size}": tallies[strategy_id][size] / n for size in range(1, top_k + 1)}
        row["sum"] = group_total[strategy_id] / n
        report[strategy_id] = row
    return report


def oracle_progression(
    matrix: PerformanceMatrix,
    strategy_ids: Sequence[str],
    setting_ids: Sequence[str] | None = None,
) -> list[float]:
    """Oracle mean utility for each portfolio prefix (k = 1 .. len)."""
    settings = setting_ids if setting_ids is not None else matrix.setting_ids
    return [
        oracle_mean(matrix, list(strategy_ids[:k]), list(settings))
        for k in range(1, len(strategy_ids) + 1)
    ]


@dataclass
class HydraResult:
    portfolio: Portfolio
    selector: SelectorModel
    matrix: PerformanceMatrix
    oracle_by_size: list[float]
    contribution: dict[str, bool]


def hydra(
    space: ConfigurationSpace,
    settings: Sequence[str],
    base_metric: Metric,
    k_max: int,
    seed: int,
    *,
    features: dict[str, np.ndarray],
    smbo_budget: int = 300,
    matrix_repetitions: int = 10,
    selector_spec: SelectorSearchSpec | None = None,
    setting_features_for_surrogate: bool = True,
    map_fn: Callable = map,
    checkpoint: Callable[[int, Portfolio, PerformanceMatrix, SelectorModel], None] | None = None,
) -> HydraResult:
    """Build a k_max-strategy portfolio plus its selector over ``settings``.

    ``features`` must cover every setting id; they feed the configurator's
    surrogate, the selector, and the modified metric. ``checkpoint`` fires
    after each completed iteration, so a failing configurator run leaves the
    partial portfolio persisted.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    selector_spec = selector_spec or SelectorSearchSpec()
    setting_ids = list(settings)
    surrogate_features = features if setting_features_for_surrogate else None

    portfolio = Portfolio(entries=[])
    matrix = PerformanceMatrix(strategy_ids=[], setting_ids=setting_ids)
    selector: SelectorModel | None = None
    metric = base_metric

    for k in range(1, k_max + 1):
        smbo_seed = derive_seed(seed, "iteration", k)
        result = smbo(
            space,
            setting_ids,
            metric,
            smbo_budget,
            smbo_seed,
            setting_features=surrogate_features,
        )
        entry = PortfolioEntry(config=result.incumbent, iteration=k, seed=smbo_seed)
        portfolio.entries.append(entry)
        fill_matrix(
            matrix, [entry], setting_ids, base_metric, matrix_repetitions,
            derive_seed(seed, "matrix"), map_fn,
        )
        selector = fit_selector(
            portfolio, matrix, features, selector_spec, derive_seed(seed, "selector", k)
        )

        def fill(strategy_id: str, setting_id: str, _k: int = k) -> None:
            index = portfolio.ids.index(strategy_id)
            fill_matrix(
                matrix, [portfolio.entries[index]], [setting_id], base_metric,
                matrix_repetitions, derive_seed(seed, "matrix"), map_fn,
            )

        metric = make_modified_metric(base_metric, selector, portfolio, matrix, features, fill)
        if checkpoint is not None:
            checkpoint(k, portfolio, matrix, selector)

    contribution = {
        strategy_id: contributes(strategy_id, matrix, portfolio.ids, setting_ids)
        for strategy_id in portfolio.ids
    }
    return HydraResult(
        portfolio=portfolio,
        selector=selector,
        matrix=matrix,
        oracle_by_size=oracle_progression(matrix, portfolio.ids, setting_ids),
        contribution=contribution,
    )
