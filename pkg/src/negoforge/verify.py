"""Invariant suites behind the ``verify`` command.

Each check re-derives expected values through an independent route (plain
enumeration over itertools.product, pairwise dominance, explicit argmax) and
compares against the production implementations. Artifact checks diagnose
bad cells rather than failing wholesale.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agent import STRATEGY_SPACE
from .analysis import nash_point, pareto_frontier
from .features import problem_features
from .persistence import ArtifactError, load_features, load_matrix, load_portfolio, load_selector
from .portfolio import PerformanceMatrix, Portfolio
from .problems import BargainingProblem, ProblemGenSpec, generate_problem, utility
from .selector import (
    SelectorSearchSpec,
    fit_selector,
    normalized_score,
    oracle_mean,
    selection_score,
    single_best,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.detail}"


# --- independent oracles ---


def enumerate_outcomes(problem: BargainingProblem):
    return itertools.product(*(range(len(issue.values)) for issue in problem.issues))


def brute_force_problem_features(problem: BargainingProblem, side: str) -> list[float]:
    """The six problem descriptors via plain loops over every outcome."""
    profile = problem.profile(side)
    n_issues = len(problem.issues)
    sizes = [len(issue.values) for issue in problem.issues]
    utilities = [utility(profile, outcome) for outcome in enumerate_outcomes(problem)]
    mean_u = sum(utilities) / len(utilities)
    var_u = sum((u - mean_u) ** 2 for u in utilities) / len(utilities)
    mean_w = 1.0 / n_issues
    var_w = sum((w - mean_w) ** 2 for w in profile.weights) / n_issues
    return [
        float(n_issues),
        sum(sizes) / n_issues,
        float(len(utilities)),
        var_w**0.5,
        mean_u,
        var_u**0.5,
    ]


def brute_force_frontier(problem: BargainingProblem) -> set[tuple[int, ...]]:
    """Pairwise-dominance filter over all outcomes (chunked for speed)."""
    outcomes = list(enumerate_outcomes(problem))
    points = np.array(
        [
            (utility(problem.profile_a, o), utility(problem.profile_b, o))
            for o in outcomes
        ]
    )
    n = len(points)
    dominated = np.zeros(n, dtype=bool)
    chunk = 512
    for start in range(0, n, chunk):
        block = points[start : start + chunk]
        geq = (points[:, None, 0] >= block[None, :, 0]) & (points[:, None, 1] >= block[None, :, 1])
        gt = (points[:, None, 0] > block[None, :, 0]) | (points[:, None, 1] > block[None, :, 1])
        dominated[start : start + chunk] = np.any(geq & gt, axis=0)
    return {outcomes[i] for i in range(n) if not dominated[i]}


def brute_force_nash(problem: BargainingProblem) -> tuple[int, ...]:
    """Product argmax by explicit scan; ties keep the earliest outcome."""
    best_outcome, best_product = None, -1.0
    for outcome in enumerate_outcomes(problem):
        product = utility(problem.profile_a, outcome) * utility(problem.profile_b, outcome)
        if product > best_product:
            best_outcome, best_product = outcome, product
    return best_outcome


def _random_problems(count: int, seed: int, max_outcomes: int = 10_000):
    spec = ProblemGenSpec(issues=(2, 4), values_per_issue=(2, 10))
    problems = []
    salt = 0
    while len(problems) < count:
        problem = generate_problem(spec, seed * 100_003 + salt)
        salt += 1
        if int(np.prod(problem.shape)) <= max_outcomes:
            problems.append(problem)
    return problems


# --- checks ---


def check_feature_oracle(count: int = 50, seed: int = 0, tolerance: float = 1e-9) -> CheckResult:
    worst = 0.0
    for problem in _random_problems(count, seed):
        for side in ("A", "B"):
            expected = np.array(brute_force_problem_features(problem, side))
            actual = problem_features(problem, side).to_vector()
            worst = max(worst, float(np.max(np.abs(expected - actual))))
    return CheckResult(
        "feature-oracle",
        worst <= tolerance,
        f"{count} problems x 2 sides, max deviation {worst:.2e} (tolerance {tolerance})",
    )


def check_pareto_nash(count: int = 50, seed: int = 1) -> CheckResult:
    mismatches = 0
    for problem in _random_problems(count, seed):
        if set(pareto_frontier(problem)) != brute_force_frontier(problem):
            mismatches += 1
        if nash_point(problem) != brute_force_nash(problem):
            mismatches += 1
    return CheckResult(
        "pareto-nash-exactness",
        mismatches == 0,
        f"{count} problems, {mismatches} mismatches against brute force",
    )


def check_modified_metric_dominance(draws: int = 1000, seed: int = 2) -> CheckResult:
    """max(own, selected) dominates both inputs on random draws, exactly."""
    rng = random.Random(seed)
    violations = 0
    for _ in range(draws):
        base = rng.random()
        selected = rng.random()
        modified = max(base, selected)
        if modified < base or modified < selected:
            violations += 1
    return CheckResult(
        "modified-metric-dominance", violations == 0, f"{draws} draws, {violations} violations"
    )


def _separable_matrix(n_settings: int, seed: int):
    rng = np.random.default_rng(seed)
    features = {}
    matrix = PerformanceMatrix(strategy_ids=["theta1", "theta2"], setting_ids=[])
    for i in range(n_settings):
        setting_id = f"s{i:03d}"
        f1 = rng.uniform(0.0, 1.0)
        noise = rng.uniform(0.0, 1.0, size=3)
        features[setting_id] = np.concatenate([[f1], noise])
        first, second = (0.8, 0.6) if f1 <= 0.5 else (0.6, 0.8)
        matrix.add_runs("theta1", setting_id, [first])
        matrix.add_runs("theta2", setting_id, [second])
    return matrix, features


def check_selector_guarantee(seed: int = 3) -> CheckResult:
    matrix, features = _separable_matrix(120, seed)
    portfolio = Portfolio.from_list(
        [STRATEGY_SPACE.default().to_dict(), STRATEGY_SPACE.sample(random.Random(seed)).to_dict()]
    )
    model = fit_selector(portfolio, matrix, features, SelectorSearchSpec(), seed)
    score_as = selection_score(model, matrix, features)
    best = single_best(matrix)
    score_sb = matrix.strategy_mean(matrix.strategy_ids[best])
    score_or = oracle_mean(matrix)
    theta1 = matrix.strategy_mean("theta1")
    ok = score_or >= score_as >= theta1 and score_or >= score_sb
    normalized = normalized_score(model, matrix, features)
    return CheckResult(
        "selector-guarantee",
        ok,
        f"oracle {score_or:.3f} >= selector {score_as:.3f} >= theta1 {theta1:.3f}; "
        f"normalized {normalized:.3f}",
    )


def check_matrix_file(path: str | Path, portfolio_path: str | Path | None = None) -> CheckResult:
    """Parse and cell-level diagnostics for a matrix artifact."""
    try:
        matrix = load_matrix(path)
    except (ArtifactError, ValueError, KeyError) as exc:
        return CheckResult("matrix-file", False, str(exc))
    bad_cells = []
    for strategy_id in matrix.strategy_ids:
        for setting_id in matrix.setting_ids:
            if not matrix.has(strategy_id, setting_id):
                bad_cells.append(f"({strategy_id}, {setting_id}): missing")
                continue
            value = matrix.mean(strategy_id, setting_id)
            if not np.isfinite(value) or not 0.0 <= value <= 1.0:
                bad_cells.append(f"({strategy_id}, {setting_id}): mean_r {value!r} outside [0, 1]")
    if portfolio_path is not None:
        try:
            portfolio = load_portfolio(portfolio_path)
        except (ArtifactError, ValueError) as exc:
            return CheckResult("matrix-file", False, f"portfolio unreadable: {exc}")
        for strategy_id in portfolio.ids:
            if strategy_id not in matrix.strategy_ids:
                bad_cells.append(f"portfolio strategy {strategy_id} absent from matrix")
    if bad_cells:
        return CheckResult("matrix-file", False, "; ".join(bad_cells[:8]))
    return CheckResult(
        "matrix-file", True,
        f"{len(matrix.strategy_ids)} strategies x {len(matrix.setting_ids)} settings, all cells valid",
    )


def check_fitted_selector(
    selector_path: str | Path, matrix_path: str | Path, features_path: str | Path,
    portfolio_path: str | Path,
) -> CheckResult:
    """Training-set guarantee on persisted artifacts."""
    try:
        model = load_selector(selector_path)
        matrix = load_matrix(matrix_path)
        features, _ = load_features(features_path)
        portfolio = load_portfolio(portfolio_path)
    except (ArtifactError, ValueError, KeyError) as exc:
        return CheckResult("fitted-selector", False, str(exc))
    strategy_ids = portfolio.ids
    score_as = selection_score(model, matrix, features, strategy_ids)
    score_or = oracle_mean(matrix, strategy_ids)
    theta1 = matrix.strategy_mean(strategy_ids[0])
    ok = score_or >= score_as >= theta1
    return CheckResult(
        "fitted-selector", ok,
        f"oracle {score_or:.4f} >= selector {score_as:.4f} >= theta1 {theta1:.4f}",
    )


def run_checks(
    matrix: str | None = None,
    portfolio: str | None = None,
    selector: str | None = None,
    features: str | None = None,
    quick: bool = False,
    seed: int = 0,
) -> list[CheckResult]:
    count = 10 if quick else 50
    results = [
        check_feature_oracle(count=count, seed=seed),
        check_pareto_nash(count=count, seed=seed + 1),
        check_modified_metric_dominance(seed=seed + 2),
        check_selector_guarantee(seed=seed + 3),
    ]
    if matrix is not None:
        results.append(check_matrix_file(matrix, portfolio))
    if selector is not None and matrix is not None and features is not None and portfolio is not None:
        results.append(check_fitted_selector(selector, matrix, features, portfolio))
    return results
