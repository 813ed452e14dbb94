import math

import numpy as np
import pytest

from negoforge.agent import STRATEGY_SPACE, DynamicAgent
from negoforge.analysis import nash_point
from negoforge.opponents import OpponentSpec, default_roster, instantiate
from negoforge.portfolio import Portfolio, PortfolioEntry
from negoforge.problems import ProblemGenSpec, generate_problem
from negoforge.protocol import run_session
from negoforge.seeding import derive_seed
from negoforge.selector import constant_selector
from negoforge.tournament import (
    SessionRecord,
    TournamentReport,
    TournamentSpec,
    compare_reports,
    run_tournament,
    session_metrics,
)

from conftest import make_problem


def small_portfolio(size=2):
    import random

    rng = random.Random(9)
    entries = [PortfolioEntry(STRATEGY_SPACE.default(), 1, 0)]
    for k in range(2, size + 1):
        entries.append(PortfolioEntry(STRATEGY_SPACE.sample(rng), k, 0))
    return Portfolio(entries=entries)


def small_spec(**overrides):
    problems = [
        generate_problem(ProblemGenSpec(issues=(2, 2), values_per_issue=(3, 4)), seed)
        for seed in range(3)
    ]
    roster = [o for o in default_roster() if o.split == "test"][:4]
    defaults = dict(
        portfolio=small_portfolio(),
        selector=constant_selector(2, 14),
        opponents=roster,
        problems=problems,
        repetitions=2,
        max_rounds=24,
        seed=5,
        warmup=True,
    )
    defaults.update(overrides)
    return TournamentSpec(**defaults)


def test_session_count_formula():
    spec = small_spec()
    report = run_tournament(spec)
    agents = len(spec.opponents) + 1
    pairs = agents * (agents - 1) // 2
    expected = spec.repetitions * len(spec.problems) * pairs
    assert len(report.sessions) == expected
    assert str(expected) in report.count_formula
    for agent, score in report.scores.items():
        per_agent = spec.repetitions * len(spec.problems) * (agents - 1)
        assert score.n_sessions == per_agent


def test_determinism_identical_hash():
    one = run_tournament(small_spec())
    two = run_tournament(small_spec())
    assert one.hash() == two.hash()
    different = run_tournament(small_spec(seed=6))
    assert one.hash() != different.hash()


def test_welfare_linearity():
    report = run_tournament(small_spec())
    for score in report.scores.values():
        assert score.social_welfare == pytest.approx(
            score.utility + score.opponent_utility, abs=1e-9
        )
        assert 0.0 <= score.agreement_ratio <= 1.0


def test_single_strategy_portfolio_matches_direct_sessions():
    spec = small_spec(portfolio=small_portfolio(1), selector=None, warmup=False,
                      repetitions=1)
    report = run_tournament(spec)
    config = spec.portfolio.entries[0].config
    ours = [r for r in report.sessions if "DA(AS)" in (r.agent_a, r.agent_b)]
    assert ours
    for record in ours:
        problem = next(p for p in spec.problems if p.id == record.problem_id)
        seed = derive_seed(spec.seed, "session", record.repetition,
                           record.agent_a, record.agent_b, record.problem_id)
        opponent_id = record.agent_b if record.agent_a == "DA(AS)" else record.agent_a
        opponent = next(o for o in spec.opponents if o.id == opponent_id)
        if record.agent_a == "DA(AS)":
            direct = run_session(DynamicAgent(config), instantiate(opponent), problem,
                                 spec.max_rounds, seed)
        else:
            direct = run_session(instantiate(opponent), DynamicAgent(config), problem,
                                 spec.max_rounds, seed)
        assert (direct.utility_a, direct.utility_b) == (record.utility_a, record.utility_b)
        assert record.strategy_id == "theta1"


def test_all_hardliner_pairs_never_agree():
    hardliners = [
        OpponentSpec(id=f"hard-{k}", family="Hardliner", split="test") for k in range(3)
    ]
    spec = small_spec(opponents=hardliners, warmup=False, repetitions=1)
    report = run_tournament(spec)
    zoo_only = [
        r for r in report.sessions if "DA(AS)" not in (r.agent_a, r.agent_b)
    ]
    assert zoo_only
    assert all(not r.agreed for r in zoo_only)


def test_selection_policy_invariants():
    spec = small_spec(repetitions=4)
    report = run_tournament(spec)
    # select() is never invoked with fewer than two recorded observations
    assert all(entry["observations"] >= 2 for entry in report.selection_log)
    # observations are only gathered from first-strategy sessions
    assert all(entry["strategy_index"] == 0 for entry in report.observation_log)
    # the first two encounters per opponent play theta1
    first_encounters = {}
    for record in report.sessions:
        if "DA(AS)" not in (record.agent_a, record.agent_b):
            continue
        opponent = record.agent_b if record.agent_a == "DA(AS)" else record.agent_a
        first_encounters.setdefault(opponent, []).append(record.strategy_id)
    for strategy_ids in first_encounters.values():
        assert strategy_ids[0] == "theta1"  # warmup consumed one sampling slot


def test_sides_alternate_across_repetitions():
    spec = small_spec(repetitions=2)
    report = run_tournament(spec)
    by_rep = {0: set(), 1: set()}
    for record in report.sessions:
        pair = frozenset((record.agent_a, record.agent_b))
        by_rep[record.repetition].add((pair, record.agent_a))
    for pair, first_mover in by_rep[0]:
        flipped = [(p, m) for p, m in by_rep[1] if p == pair]
        assert flipped and all(m != first_mover for _, m in flipped)


# --- session metrics ---


def test_session_metrics_nash_agreement_zero_distances(opposed_problem):
    nash = nash_point(opposed_problem)
    view_a, view_b = opposed_problem.view("A"), opposed_problem.view("B")
    from negoforge.protocol import SessionResult

    result = SessionResult(
        agreed=True, agreement=nash, t_agree=0.4,
        utility_a=view_a.utility(nash), utility_b=view_b.utility(nash), trace=[],
    )
    metrics = session_metrics(result, opposed_problem)
    assert metrics["nash_distance"] == pytest.approx(0.0, abs=1e-12)
    assert metrics["pareto_distance"] == pytest.approx(0.0, abs=1e-12)


def test_session_metrics_failure_scores_from_origin():
    problem = make_problem(
        "fail",
        [("i", ["x", "y"])],
        [1.0], [[1.0, 0.5]],
        [1.0], [[0.5, 1.0]],
    )
    from negoforge.protocol import SessionResult

    result = SessionResult(agreed=False, agreement=None, t_agree=1.0,
                           utility_a=0.0, utility_b=0.0, trace=[])
    metrics = session_metrics(result, problem)
    assert metrics["social_welfare"] == 0.0
    assert not metrics["agreed"]
    # frontier = {(1.0, 0.5), (0.5, 1.0)}; nearest to origin at distance
    expected = math.dist((0, 0), (1.0, 0.5))
    assert metrics["pareto_distance"] == pytest.approx(expected, abs=1e-12)


def test_session_metrics_hand_computed_tuple(two_value_problem):
    from negoforge.protocol import SessionResult

    result = SessionResult(agreed=True, agreement=(1,), t_agree=0.25,
                           utility_a=0.9, utility_b=0.6, trace=[])
    metrics = session_metrics(result, two_value_problem)
    assert metrics["utility_a"] == pytest.approx(0.9)
    assert metrics["utility_b"] == pytest.approx(0.6)
    assert metrics["social_welfare"] == pytest.approx(1.5)
    # frontier: (1.0, 1.0) at index 0 dominates (0.9, 0.6)? yes: both higher
    assert metrics["pareto_distance"] == pytest.approx(math.dist((0.9, 0.6), (1.0, 1.0)))


# --- report comparison ---


def _report_with_utility(utility):
    from negoforge.tournament import AgentScore

    scores = {
        "DA(AS)": dict(utility=utility, opponent_utility=0.6, social_welfare=utility + 0.6,
                       pareto_distance=0.1, nash_distance=0.2, agreement_ratio=0.9,
                       n_sessions=10),
    }
    return TournamentReport(
        scores={k: AgentScore(**v) for k, v in scores.items()},
        sessions=[],
        fingerprint={"problems": ["p"], "seed": 1},
        our_agent_id="DA(AS)",
        count_formula="x",
    )


def test_compare_identical_reports_all_zero():
    a = _report_with_utility(0.75)
    b = _report_with_utility(0.75)
    deltas = compare_reports(a, b)
    for metric in deltas.values():
        assert metric["absolute"] == pytest.approx(0.0)
        assert metric["relative"] == pytest.approx(0.0)


@pytest.mark.parametrize(
    "ours,theirs,expected",
    [(0.788, 0.742, 6.2), (0.788, 0.752, 4.8), (0.788, 0.746, 5.6)],
)
def test_compare_relative_deltas(ours, theirs, expected):
    deltas = compare_reports(_report_with_utility(ours), _report_with_utility(theirs))
    assert 100 * deltas["utility"]["relative"] == pytest.approx(expected, abs=0.05)


def test_compare_rejects_mismatched_specs():
    a = _report_with_utility(0.7)
    b = _report_with_utility(0.7)
    b.fingerprint = {"problems": ["other"], "seed": 2}
    with pytest.raises(ValueError):
        compare_reports(a, b)


def test_report_dict_roundtrip():
    report = run_tournament(small_spec(repetitions=1))
    clone = TournamentReport.from_dict(report.to_dict())
    assert clone.hash() == report.hash()


def test_parallel_workers_match_sequential():
    spec = small_spec(repetitions=1, warmup=False)
    sequential = run_tournament(spec)
    parallel = run_tournament(small_spec(repetitions=1, warmup=False), workers=2)
    assert sequential.hash() == parallel.hash()
