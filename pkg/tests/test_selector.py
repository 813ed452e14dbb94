import random

import numpy as np
import pytest

from negoforge.agent import STRATEGY_SPACE
from negoforge.features import SettingFeatures, problem_features
from negoforge.portfolio import IncompleteMatrixError, PerformanceMatrix, Portfolio
from negoforge.problems import ProblemGenSpec, generate_problem
from negoforge.selector import (
    MissingFeaturesError,
    SelectorModel,
    SelectorSearchSpec,
    constant_selector,
    fit_selector,
    normalized_score,
    oracle,
    oracle_mean,
    selection_score,
    single_best,
)


def _portfolio(size):
    rng = random.Random(42)
    return Portfolio.from_list(
        [STRATEGY_SPACE.default().to_dict()]
        + [STRATEGY_SPACE.sample(rng).to_dict() for _ in range(size - 1)]
    )


def _matrix(values):
    """values: dict strategy_id -> dict setting_id -> mean."""
    matrix = PerformanceMatrix()
    for strategy_id, row in values.items():
        for setting_id, value in row.items():
            matrix.add_runs(strategy_id, setting_id, [value])
    return matrix


def separable_case(n_settings, seed, margin=0.2):
    """Strategy 2 wins exactly when feature f1 > 0.5, by `margin`."""
    rng = np.random.default_rng(seed)
    matrix = PerformanceMatrix(strategy_ids=["theta1", "theta2"], setting_ids=[])
    features = {}
    for i in range(n_settings):
        setting_id = f"s{i:03d}"
        f1 = float(rng.uniform(0, 1))
        features[setting_id] = np.concatenate([[f1], rng.uniform(0, 1, 3)])
        base = 0.6
        if f1 > 0.5:
            matrix.add_runs("theta1", setting_id, [base])
            matrix.add_runs("theta2", setting_id, [base + margin])
        else:
            matrix.add_runs("theta1", setting_id, [base + margin])
            matrix.add_runs("theta2", setting_id, [base])
    return matrix, features


# --- oracle / single best / normalized score ---


def test_oracle_argmax_and_tie_rule():
    matrix = _matrix(
        {"theta1": {"s": 0.2}, "theta2": {"s": 0.9}, "theta3": {"s": 0.4}}
    )
    assert oracle(matrix, "s") == 1
    tied = _matrix({"theta1": {"s": 0.5}, "theta2": {"s": 0.5}})
    assert oracle(tied, "s") == 0


def test_oracle_dominates_every_strategy_on_random_matrices():
    rng = np.random.default_rng(0)
    for _ in range(20):
        matrix = PerformanceMatrix()
        for t in range(4):
            for s in range(6):
                matrix.add_runs(f"theta{t + 1}", f"s{s}", [float(rng.uniform(0, 1))])
        upper = oracle_mean(matrix)
        for t in range(4):
            assert upper >= matrix.strategy_mean(f"theta{t + 1}") - 1e-12


def test_single_best_by_row_mean():
    matrix = _matrix(
        {"theta1": {"s1": 0.5, "s2": 0.7}, "theta2": {"s1": 0.6, "s2": 0.8}}
    )
    assert single_best(matrix) == 1
    assert matrix.strategy_mean("theta2") <= oracle_mean(matrix) + 1e-12


def test_single_best_requires_complete_matrix():
    matrix = _matrix({"theta1": {"s1": 0.5, "s2": 0.7}, "theta2": {"s1": 0.6}})
    with pytest.raises(IncompleteMatrixError):
        single_best(matrix)


def test_argmax_invariant_under_constant_shift():
    rng = np.random.default_rng(1)
    values = rng.uniform(0, 0.5, size=(3, 5))
    plain = PerformanceMatrix()
    shifted = PerformanceMatrix()
    for t in range(3):
        for s in range(5):
            plain.add_runs(f"theta{t + 1}", f"s{s}", [float(values[t, s])])
            shifted.add_runs(f"theta{t + 1}", f"s{s}", [float(values[t, s]) + 0.3])
    for s in range(5):
        assert oracle(plain, f"s{s}") == oracle(shifted, f"s{s}")
    assert single_best(plain) == single_best(shifted)


class _StubSelector:
    """Fixed mapping used to probe the normalized-score endpoints."""

    def __init__(self, picks):
        self.picks = picks

    def select(self, features):
        return self.picks[int(features[0])]


def test_normalized_score_endpoints_and_midpoint():
    matrix = _matrix(
        {
            "theta1": {"s0": 1.0, "s1": 1.0, "s2": 0.5, "s3": 0.5},
            "theta2": {"s0": 0.5, "s1": 0.5, "s2": 1.0, "s3": 1.0},
        }
    )
    features = {f"s{i}": np.array([float(i)]) for i in range(4)}
    oracle_picks = _StubSelector({0: 0, 1: 0, 2: 1, 3: 1})
    assert normalized_score(oracle_picks, matrix, features) == pytest.approx(1.0)
    single_best_picks = _StubSelector({0: 0, 1: 0, 2: 0, 3: 0})  # theta1 is the tie-winner
    assert normalized_score(single_best_picks, matrix, features) == pytest.approx(0.0)
    halfway = _StubSelector({0: 0, 1: 0, 2: 1, 3: 0})
    assert normalized_score(halfway, matrix, features) == pytest.approx(0.5)


def test_normalized_score_degenerate_returns_one():
    matrix = _matrix({"theta1": {"s0": 0.4, "s1": 0.4}})
    features = {"s0": np.array([0.0]), "s1": np.array([1.0])}
    model = constant_selector(1, 1)
    assert normalized_score(model, matrix, features) == 1.0


# --- fit_selector ---


def test_portfolio_of_one_returns_constant():
    matrix = _matrix({"theta1": {"s0": 0.4, "s1": 0.6}})
    features = {"s0": np.zeros(3), "s1": np.ones(3)}
    model = fit_selector(_portfolio(1), matrix, features, SelectorSearchSpec(), seed=0)
    assert model.method == "constant"
    assert model.select(np.zeros(3)) == 0
    assert model.select(np.ones(3)) == 0


def test_separable_case_held_out_score():
    matrix, features = separable_case(200, seed=0)
    train_ids = sorted(features)[:100]
    held_ids = sorted(features)[100:]
    train_matrix = PerformanceMatrix()
    for t in matrix.strategy_ids:
        for s in train_ids:
            train_matrix.add_runs(t, s, [matrix.mean(t, s)])
    model = fit_selector(
        _portfolio(2), train_matrix, {s: features[s] for s in train_ids},
        SelectorSearchSpec(), seed=1,
    )
    score = normalized_score(model, matrix, features, setting_ids=held_ids)
    assert score >= 0.95


def test_training_guarantee_under_adversarial_noise():
    rng = np.random.default_rng(3)
    matrix = PerformanceMatrix()
    features = {}
    for i in range(60):
        setting_id = f"s{i:03d}"
        features[setting_id] = rng.uniform(0, 1, 4)  # pure noise
        matrix.add_runs("theta1", setting_id, [float(rng.uniform(0.5, 1.0))])
        matrix.add_runs("theta2", setting_id, [float(rng.uniform(0.0, 0.5))])
    model = fit_selector(_portfolio(2), matrix, features, SelectorSearchSpec(), seed=2)
    score = selection_score(model, matrix, features)
    assert score >= matrix.strategy_mean("theta1") - 1e-12


def test_missing_features_error_lists_settings():
    matrix = _matrix({"theta1": {"s0": 0.4, "s1": 0.6}, "theta2": {"s0": 0.5, "s1": 0.5}})
    with pytest.raises(MissingFeaturesError) as info:
        fit_selector(_portfolio(2), matrix, {"s0": np.zeros(2)}, SelectorSearchSpec(), 0)
    assert "s1" in info.value.setting_ids


def test_selector_spec_validation():
    with pytest.raises(ValueError):
        SelectorSearchSpec(folds=1)
    spec = SelectorSearchSpec(max_candidates=3)
    assert len(spec.candidates()) == 3


# --- select ---


def test_select_is_pure_and_validates_shape():
    matrix, features = separable_case(80, seed=5)
    model = fit_selector(_portfolio(2), matrix, features, SelectorSearchSpec(), seed=3)
    vector = features[sorted(features)[0]]
    picks = {model.select(vector) for _ in range(10)}
    assert len(picks) == 1
    with pytest.raises(ValueError):
        model.select(np.zeros(9))
    with pytest.raises(ValueError):
        model.select(np.array([np.nan, 0, 0, 0]))


def test_missing_opponent_block_falls_back_to_first_strategy():
    problem = generate_problem(ProblemGenSpec(), 1)
    block = problem_features(problem, "A")
    matrix, features = separable_case(80, seed=6)
    model = fit_selector(_portfolio(2), matrix, features, SelectorSearchSpec(), seed=3)
    setting = SettingFeatures(problem=block, opponent=None)
    assert model.select(setting) == model.fallback_index == 0


def test_model_json_roundtrip_preserves_selections():
    matrix, features = separable_case(100, seed=7)
    model = fit_selector(_portfolio(2), matrix, features, SelectorSearchSpec(), seed=4)
    clone = SelectorModel.from_dict(model.to_dict())
    assert clone.to_dict() == model.to_dict()
    for setting_id in sorted(features)[:25]:
        assert clone.select(features[setting_id]) == model.select(features[setting_id])


def test_guarantee_chain_on_training_matrix():
    matrix, features = separable_case(120, seed=8)
    model = fit_selector(_portfolio(2), matrix, features, SelectorSearchSpec(), seed=5)
    score_as = selection_score(model, matrix, features)
    score_or = oracle_mean(matrix)
    theta1_mean = matrix.strategy_mean("theta1")
    assert score_or >= score_as >= theta1_mean
