import itertools
import math

import numpy as np
import pytest

from negoforge.features import (
    FEATURE_NAMES,
    InsufficientSamplesError,
    ObservationStore,
    OpponentObservation,
    SettingFeatures,
    aggregate,
    opponent_observation,
    problem_features,
)
from negoforge.problems import ProblemGenSpec, generate_problem, utility
from negoforge.protocol import Action, SessionResult, TraceEntry

from conftest import make_problem


def brute_force_features(problem, side):
    profile = problem.profile(side)
    n_issues = len(problem.issues)
    sizes = [len(issue.values) for issue in problem.issues]
    utilities = [
        utility(profile, outcome)
        for outcome in itertools.product(*(range(n) for n in sizes))
    ]
    mean_u = sum(utilities) / len(utilities)
    return [
        float(n_issues),
        sum(sizes) / n_issues,
        float(len(utilities)),
        math.sqrt(sum((w - 1 / n_issues) ** 2 for w in profile.weights) / n_issues),
        mean_u,
        math.sqrt(sum((u - mean_u) ** 2 for u in utilities) / len(utilities)),
    ]


def test_uniform_weights_give_zero_weight_std():
    problem = make_problem(
        "uniform",
        [("i", ["a", "b", "c"]), ("j", ["p", "q", "r", "s", "t"])],
        [0.5, 0.5], [[1.0, 0.5, 0.0], [1.0, 0.8, 0.6, 0.4, 0.2]],
        [0.5, 0.5], [[0.0, 0.5, 1.0], [0.2, 0.4, 0.6, 0.8, 1.0]],
    )
    features = problem_features(problem, "A")
    assert features.n_issues == 2
    assert features.avg_values_per_issue == 4.0
    assert features.n_outcomes == 15
    assert features.std_issue_weights == 0.0


def test_two_value_issue_mean_and_std():
    problem = make_problem(
        "binary",
        [("i", ["hi", "lo"])],
        [1.0], [[1.0, 0.0]],
        [1.0], [[0.0, 1.0]],
    )
    features = problem_features(problem, "A")
    assert features.mean_utility == pytest.approx(0.5)
    assert features.std_utility == pytest.approx(0.5)


def test_features_match_brute_force_enumerator():
    spec = ProblemGenSpec(issues=(2, 4), values_per_issue=(2, 6))
    for seed in range(25):
        problem = generate_problem(spec, seed)
        for side in "AB":
            expected = np.array(brute_force_features(problem, side))
            actual = problem_features(problem, side).to_vector()
            assert np.max(np.abs(expected - actual)) <= 1e-9


def test_structural_fields_side_independent(small_random_problems):
    for problem in small_random_problems[:8]:
        a = problem_features(problem, "A")
        b = problem_features(problem, "B")
        assert a.n_issues == b.n_issues
        assert a.avg_values_per_issue == b.avg_values_per_issue
        assert a.n_outcomes == b.n_outcomes


# --- opponent observations ---


def _session(problem, opponent_offers, agreement=None, t_agree=1.0):
    """Fabricate a SessionResult where B made the given offers."""
    trace = []
    t = 0.0
    for offer in opponent_offers:
        trace.append(TraceEntry("B", Action.offer(offer), t))
        t += 0.01
    agreed = agreement is not None
    return SessionResult(
        agreed=agreed,
        agreement=agreement,
        t_agree=t_agree if agreed else 1.0,
        utility_a=problem.view("A").utility(agreement) if agreed else 0.0,
        utility_b=problem.view("B").utility(agreement) if agreed else 0.0,
        trace=trace,
    )


@pytest.fixture
def ladder_problem():
    # A's utility ladder 1.0 .. 0.0 over five values; B opposed
    return make_problem(
        "ladder",
        [("i", ["v1", "v2", "v3", "v4", "v5"])],
        [1.0], [[1.0, 0.75, 0.5, 0.25, 0.0]],
        [1.0], [[0.0, 0.25, 0.5, 0.75, 1.0]],
    )


def test_concession_rate_full_when_lowest_reaches_our_best(ladder_problem):
    # opponent offered our best outcome: estimated floor <= estimate at our best
    result = _session(ladder_problem, [(4,), (0,)], agreement=(0,), t_agree=0.02)
    observation = opponent_observation(
        result, ladder_problem, "A", ladder_problem.view("B").utility
    )
    assert observation.concession_rate == 1.0


def test_concession_rate_formula_branch(ladder_problem):
    # u_B values: offer (1,) -> 0.25 is the lowest; our best (0,) -> u_B 0.0
    # wait: u_B((0,)) = 0.0 <= everything, so use a custom estimate instead
    estimates = {(0,): 0.4, (1,): 0.7, (2,): 0.9}
    result = _session(ladder_problem, [(2,), (1,)])
    observation = opponent_observation(
        result, ladder_problem, "A", lambda outcome: estimates[outcome]
    )
    # lowest offered estimate 0.7 > estimate of our best (0,) = 0.4
    assert observation.concession_rate == pytest.approx((1 - 0.7) / (1 - 0.4))
    # mean estimate (0.9 + 0.7)/2 = 0.8 -> (1-0.8)/(1-0.4)
    assert observation.avg_offer_rate == pytest.approx((1 - 0.8) / (1 - 0.4))


def test_failed_session_performance_clamps_to_zero(ladder_problem):
    result = _session(ladder_problem, [(4,)])
    observation = opponent_observation(
        result, ladder_problem, "A", ladder_problem.view("B").utility
    )
    # failure means agreement utility 0 <= worst-outcome utility
    assert observation.default_performance == 0.0
    assert observation.t_agree == 1.0


def test_default_performance_rescales_from_worst(ladder_problem):
    # agreement at (1,): u_A 0.75; worst possible u_A is 0.0
    result = _session(ladder_problem, [(4,), (1,)], agreement=(1,), t_agree=0.3)
    observation = opponent_observation(
        result, ladder_problem, "A", ladder_problem.view("B").utility
    )
    assert observation.default_performance == pytest.approx(0.75)
    assert observation.t_agree == pytest.approx(0.3)


def test_default_performance_with_nonzero_worst():
    problem = make_problem(
        "floor",
        [("i", ["a", "b"])],
        [1.0], [[1.0, 0.2]],
        [1.0], [[0.2, 1.0]],
    )
    result = _session(problem, [(1,)], agreement=(0,), t_agree=0.5)
    observation = opponent_observation(result, problem, "A", problem.view("B").utility)
    assert observation.default_performance == pytest.approx((1.0 - 0.2) / (1 - 0.2))
    below = _session(problem, [(1,)], agreement=(1,), t_agree=0.5)
    observation = opponent_observation(below, problem, "A", problem.view("B").utility)
    assert observation.default_performance == 0.0  # 0.2 <= worst 0.2


def test_zero_opponent_offers_unusable(ladder_problem):
    result = _session(ladder_problem, [], agreement=None)
    assert opponent_observation(
        result, ladder_problem, "A", ladder_problem.view("B").utility
    ) is None


def test_observation_fields_in_unit_interval(small_random_problems):
    import random

    from negoforge.agent import DynamicAgent, StrategyConfig
    from negoforge.opponents import default_roster, instantiate
    from negoforge.protocol import run_session

    roster = default_roster()
    rng = random.Random(0)
    seen = 0
    for problem in small_random_problems:
        opponent = roster[rng.randrange(len(roster))]
        result = run_session(
            DynamicAgent(StrategyConfig(population_size=50)), instantiate(opponent),
            problem, 30, seed=rng.randrange(1000),
        )
        observation = opponent_observation(result, problem, "A", problem.view("B").utility)
        if observation is None:
            continue
        seen += 1
        for field in ("t_agree", "concession_rate", "avg_offer_rate", "default_performance"):
            value = getattr(observation, field)
            assert 0.0 <= value <= 1.0 and np.isfinite(value)
    assert seen >= 5


# --- aggregation ---


def _obs(value):
    return OpponentObservation(value, value, value, value)


def test_aggregate_mean_and_cov():
    features = aggregate([_obs(0.4), _obs(0.6)])
    vector = features.to_vector()
    assert vector[0] == pytest.approx(0.5)   # mean
    assert vector[1] == pytest.approx(0.2)   # population std 0.1 / mean 0.5


def test_aggregate_identical_observations_cov_zero():
    features = aggregate([_obs(0.7)] * 5)
    vector = features.to_vector()
    assert vector[0::2].tolist() == pytest.approx([0.7] * 4)
    assert vector[1::2].tolist() == [0.0] * 4


def test_aggregate_single_observation_errors():
    with pytest.raises(InsufficientSamplesError):
        aggregate([_obs(0.5)])


def test_aggregate_zero_mean_cov_defined():
    features = aggregate([_obs(0.0), _obs(0.0)])
    assert features.to_vector()[1] == 0.0


def test_setting_features_dimension_and_missing_block():
    problem = generate_problem(ProblemGenSpec(), 3)
    block = problem_features(problem, "A")
    complete = SettingFeatures(problem=block, opponent=aggregate([_obs(0.2), _obs(0.4)]))
    assert complete.to_vector().shape == (14,)
    assert len(FEATURE_NAMES) == 14
    missing = SettingFeatures(problem=block, opponent=None)
    assert missing.opponent_missing
    with pytest.raises(ValueError):
        missing.to_vector()


def test_observation_store_roundtrip():
    store = ObservationStore()
    store.add("opp-1", _obs(0.25))
    store.add("opp-1", _obs(0.75))
    store.add("opp-2", _obs(0.5))
    parsed = ObservationStore.from_dict(store.to_dict())
    assert parsed.to_dict() == store.to_dict()
    assert parsed.count("opp-1") == 2
    assert parsed.features_for("opp-1").to_vector()[0] == pytest.approx(0.5)
