"""Round-robin tournament evaluation with per-setting strategy selection.

Every pair of agents plays every problem once per repetition, with profile
sides and the first mover alternating across repetitions. Our agent starts
each opponent relationship by playing the first portfolio strategy twice to
sample behaviour, gathers observations only from sessions where that
strategy was played, and switches to feature-based selection once two
observations exist. An optional warmup round gives opponents a head start:
one session each, after which our observation memory is wiped.
"""

from __future__ import annotations

import hashlib
import json
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .agent import DynamicAgent
from .analysis import frontier_utilities, nash_point
from .features import (
    ObservationStore,
    SettingFeatures,
    opponent_observation,
    problem_features,
)
from .opponents import OpponentSpec, instantiate
from .portfolio import Portfolio
from .problems import BargainingProblem
from .protocol import SessionResult, run_session
from .seeding import derive_seed
from .selector import SelectorModel

METRIC_NAMES = (
    "utility",
    "opponent_utility",
    "social_welfare",
    "pareto_distance",
    "nash_distance",
    "agreement_ratio",
)


@dataclass
class TournamentSpec:
    portfolio: Portfolio
    selector: SelectorModel | None  # None plays the first strategy throughout
    opponents: list[OpponentSpec]
    problems: list[BargainingProblem]
    repetitions: int = 10
    max_rounds: int = 1000
    seed: int = 0
    warmup: bool = True
    sample_encounters: int = 2  # forced first-strategy encounters per opponent
    our_agent_id: str = "DA(AS)"

    def fingerprint(self) -> dict:
        return {
            "problems": [p.id for p in self.problems],
            "opponents": [o.id for o in self.opponents],
            "repetitions": self.repetitions,
            "max_rounds": self.max_rounds,
            "seed": self.seed,
            "warmup": self.warmup,
            "sample_encounters": self.sample_encounters,
        }


@dataclass
class SessionRecord:
    repetition: int
    problem_id: str
    agent_a: str  # plays profile A and moves first
    agent_b: str
    strategy_id: str | None  # portfolio member our agent played, if involved
    agreed: bool
    t_agree: float
    utility_a: float
    utility_b: float
    pareto_distance: float
    nash_distance: float
    violator: str | None

    def to_dict(self) -> dict:
        return {
            "repetition": self.repetition,
            "problem_id": self.problem_id,
            "agent_a": self.agent_a,
            "agent_b": self.agent_b,
            "strategy_id": self.strategy_id,
            "agreed": self.agreed,
            "t_agree": self.t_agree,
            "utility_a": self.utility_a,
            "utility_b": self.utility_b,
            "pareto_distance": self.pareto_distance,
            "nash_distance": self.nash_distance,
            "violator": self.violator,
        }


@dataclass
class AgentScore:
    utility: float
    opponent_utility: float
    social_welfare: float
    pareto_distance: float
    nash_distance: float
    agreement_ratio: float
    n_sessions: int

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES} | {
            "n_sessions": self.n_sessions
        }

    @staticmethod
    def from_dict(raw: dict) -> "AgentScore":
        return AgentScore(
            **{name: float(raw[name]) for name in METRIC_NAMES},
            n_sessions=int(raw["n_sessions"]),
        )


@dataclass
class TournamentReport:
    scores: dict[str, AgentScore]
    sessions: list[SessionRecord]
    fingerprint: dict
    our_agent_id: str
    count_formula: str
    selection_log: list[dict] = field(default_factory=list)
    observation_log: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "our_agent_id": self.our_agent_id,
            "count_formula": self.count_formula,
            "scores": {agent: score.to_dict() for agent, score in self.scores.items()},
            "sessions": [record.to_dict() for record in self.sessions],
        }

    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    @staticmethod
    def from_dict(raw: dict) -> "TournamentReport":
        return TournamentReport(
            scores={agent: AgentScore.from_dict(s) for agent, s in raw["scores"].items()},
            sessions=[
                SessionRecord(
                    repetition=int(r["repetition"]),
                    problem_id=r["problem_id"],
                    agent_a=r["agent_a"],
                    agent_b=r["agent_b"],
                    strategy_id=r["strategy_id"],
                    agreed=bool(r["agreed"]),
                    t_agree=float(r["t_agree"]),
                    utility_a=float(r["utility_a"]),
                    utility_b=float(r["utility_b"]),
                    pareto_distance=float(r["pareto_distance"]),
                    nash_distance=float(r["nash_distance"]),
                    violator=r["violator"],
                )
                for r in raw["sessions"]
            ],
            fingerprint=raw["fingerprint"],
            our_agent_id=raw["our_agent_id"],
            count_formula=raw["count_formula"],
        )


class _ProblemGeometry:
    """Cached frontier and Nash utilities per problem for distance metrics."""

    def __init__(self, problems: list[BargainingProblem]):
        self.frontiers: dict[str, np.ndarray] = {}
        self.nash_points: dict[str, tuple[float, float]] = {}
        for problem in problems:
            self.frontiers[problem.id] = frontier_utilities(problem)
            nash = nash_point(problem)
            self.nash_points[problem.id] = (
                problem.view("A").utility(nash),
                problem.view("B").utility(nash),
            )

    def distances(self, problem_id: str, point: tuple[float, float]) -> tuple[float, float]:
        diffs = self.frontiers[problem_id] - np.asarray(point)
        pareto = float(np.sqrt(np.min(np.sum(diffs * diffs, axis=1))))
        nash_u = self.nash_points[problem_id]
        nash = float(np.hypot(point[0] - nash_u[0], point[1] - nash_u[1]))
        return pareto, nash


def session_metrics(
    result: SessionResult, problem: BargainingProblem, geometry: _ProblemGeometry | None = None
) -> dict:
    """Utility pair, welfare, distances (from (0,0) on failure), agreement flag."""
    if geometry is None:
        geometry = _ProblemGeometry([problem])
    point = (result.utility_a, result.utility_b)
    pareto, nash = geometry.distances(problem.id, point)
    return {
        "utility_a": result.utility_a,
        "utility_b": result.utility_b,
        "social_welfare": result.utility_a + result.utility_b,
        "pareto_distance": pareto,
        "nash_distance": nash,
        "agreed": result.agreed,
        "t_agree": result.t_agree,
    }


def _zoo_session(job) -> SessionResult:
    first_spec, second_spec, problem, max_rounds, seed = job
    return run_session(instantiate(first_spec), instantiate(second_spec), problem, max_rounds, seed)


def run_tournament(spec: TournamentSpec, workers: int = 1) -> TournamentReport:
    if spec.repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    agents = [spec.our_agent_id] + [o.id for o in spec.opponents]
    opponent_by_id = {o.id: o for o in spec.opponents}
    geometry = _ProblemGeometry(spec.problems)
    feature_cache: dict[tuple[str, str], object] = {}

    def problem_block(problem: BargainingProblem, side: str):
        key = (problem.id, side)
        if key not in feature_cache:
            feature_cache[key] = problem_features(problem, side)
        return feature_cache[key]

    store = ObservationStore()
    encounters: dict[str, int] = {o.id: 0 for o in spec.opponents}
    selection_log: list[dict] = []
    observation_log: list[dict] = []
    records: list[SessionRecord] = []
    samples: dict[str, list[dict]] = {agent: [] for agent in agents}

    def run_our_session(opponent_id: str, problem: BargainingProblem, repetition: int,
                        our_side: str, session_seed: int, scored: bool) -> None:
        opponent_spec = opponent_by_id[opponent_id]
        if spec.selector is None or len(spec.portfolio) == 1:
            index = 0
            reason = "fixed"
        elif encounters[opponent_id] < spec.sample_encounters:
            index = 0
            reason = "sampling"
        elif store.count(opponent_id) >= 2:
            setting_features = SettingFeatures(
                problem=problem_block(problem, our_side),
                opponent=store.features_for(opponent_id),
            )
            index = spec.selector.select(setting_features)
            reason = "selected"
            selection_log.append(
                {"opponent": opponent_id, "observations": store.count(opponent_id), "index": index}
            )
        else:
            index = 0
            reason = "fallback"

        agent = DynamicAgent(spec.portfolio.entries[index].config)
        opponent_agent = instantiate(opponent_spec)
        if our_side == "A":
            result = run_session(agent, opponent_agent, problem, spec.max_rounds, session_seed)
        else:
            result = run_session(opponent_agent, agent, problem, spec.max_rounds, session_seed)

        encounters[opponent_id] += 1
        if index == 0:  # features come only from first-strategy sessions
            observation = opponent_observation(
                result, problem, our_side, agent.opponent_model.estimate
            )
            if observation is not None:
                store.add(opponent_id, observation)
                observation_log.append(
                    {"opponent": opponent_id, "strategy_index": index, "reason": reason}
                )

        if scored:
            strategy_id = spec.portfolio.entries[index].strategy_id
            a_name = spec.our_agent_id if our_side == "A" else opponent_id
            b_name = opponent_id if our_side == "A" else spec.our_agent_id
            _record(result, problem, repetition, a_name, b_name, strategy_id)

    def run_zoo_session(first_id: str, second_id: str, problem: BargainingProblem,
                        repetition: int, session_seed: int) -> None:
        result = _zoo_session(
            (opponent_by_id[first_id], opponent_by_id[second_id], problem,
             spec.max_rounds, session_seed)
        )
        _record(result, problem, repetition, first_id, second_id, None)

    def _record(result: SessionResult, problem: BargainingProblem, repetition: int,
                a_name: str, b_name: str, strategy_id: str | None) -> None:
        metrics = session_metrics(result, problem, geometry)
        records.append(
            SessionRecord(
                repetition=repetition,
                problem_id=problem.id,
                agent_a=a_name,
                agent_b=b_name,
                strategy_id=strategy_id,
                agreed=result.agreed,
                t_agree=result.t_agree,
                utility_a=result.utility_a,
                utility_b=result.utility_b,
                pareto_distance=metrics["pareto_distance"],
                nash_distance=metrics["nash_distance"],
                violator=result.violator,
            )
        )
        for name, own, other in ((a_name, result.utility_a, result.utility_b),
                                 (b_name, result.utility_b, result.utility_a)):
            samples[name].append(
                {
                    "utility": own,
                    "opponent_utility": other,
                    "social_welfare": own + other,
                    "pareto_distance": metrics["pareto_distance"],
                    "nash_distance": metrics["nash_distance"],
                    "agreement_ratio": 1.0 if result.agreed else 0.0,
                }
            )

    # warmup: one unscored session per opponent, then wipe our memory
    if spec.warmup and spec.problems:
        warmup_rng_seed = derive_seed(spec.seed, "warmup")
        for position, opponent in enumerate(spec.opponents):
            problem = spec.problems[
                derive_seed(warmup_rng_seed, opponent.id) % len(spec.problems)
            ]
            run_our_session(
                opponent.id, problem, repetition=-1, our_side="A",
                session_seed=derive_seed(spec.seed, "warmup", opponent.id, position),
                scored=False,
            )
        store.wipe()
        observation_log.clear()

    # main phase: every pair x every problem, seeded-random order per repetition.
    # Pairs not involving our agent carry no shared state and may evaluate on
    # parallel workers; our agent's sessions stay sequential in schedule order.
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for repetition in range(spec.repetitions):
            schedule = []
            for i in range(len(agents)):
                for j in range(i + 1, len(agents)):
                    for problem in spec.problems:
                        schedule.append((agents[i], agents[j], problem))
            random.Random(derive_seed(spec.seed, "order", repetition)).shuffle(schedule)

            resolved = []
            for first, second, problem in schedule:
                # sides and first mover alternate across repetitions
                if repetition % 2 == 1:
                    first, second = second, first
                seed = derive_seed(spec.seed, "session", repetition, first, second, problem.id)
                resolved.append((first, second, problem, seed))

            zoo_results: dict[int, SessionResult] = {}
            if pool is not None:
                jobs = [
                    (idx, (opponent_by_id[f], opponent_by_id[s], p, spec.max_rounds, seed))
                    for idx, (f, s, p, seed) in enumerate(resolved)
                    if spec.our_agent_id not in (f, s)
                ]
                for (idx, _), result in zip(jobs, pool.map(_zoo_session, [j for _, j in jobs])):
                    zoo_results[idx] = result

            for idx, (first, second, problem, session_seed) in enumerate(resolved):
                if first == spec.our_agent_id:
                    run_our_session(second, problem, repetition, "A", session_seed, scored=True)
                elif second == spec.our_agent_id:
                    run_our_session(first, problem, repetition, "B", session_seed, scored=True)
                elif idx in zoo_results:
                    _record(zoo_results[idx], problem, repetition, first, second, None)
                else:
                    run_zoo_session(first, second, problem, repetition, session_seed)
    finally:
        if pool is not None:
            pool.shutdown()

    scores = {}
    for agent in agents:
        rows = samples[agent]
        scores[agent] = AgentScore(
            utility=float(np.mean([r["utility"] for r in rows])),
            opponent_utility=float(np.mean([r["opponent_utility"] for r in rows])),
            social_welfare=float(np.mean([r["social_welfare"] for r in rows])),
            pareto_distance=float(np.mean([r["pareto_distance"] for r in rows])),
            nash_distance=float(np.mean([r["nash_distance"] for r in rows])),
            agreement_ratio=float(np.mean([r["agreement_ratio"] for r in rows])),
            n_sessions=len(rows),
        )

    n_agents = len(agents)
    pairs = n_agents * (n_agents - 1) // 2
    count_formula = (
        f"sessions = repetitions({spec.repetitions}) x problems({len(spec.problems)}) "
        f"x pairs C({n_agents},2)={pairs} = {spec.repetitions * len(spec.problems) * pairs}"
    )
    return TournamentReport(
        scores=scores,
        sessions=records,
        fingerprint=spec.fingerprint(),
        our_agent_id=spec.our_agent_id,
        count_formula=count_formula,
        selection_log=selection_log,
        observation_log=observation_log,
    )


def compare_reports(report: TournamentReport, baseline: TournamentReport,
                    agent_id: str | None = None) -> dict[str, dict]:
    """Per-metric absolute and relative deltas for one agent across two runs
    of the same schedule."""
    if report.fingerprint != baseline.fingerprint:
        raise ValueError("reports were produced from different tournament specs")
    agent = agent_id or report.our_agent_id
    deltas = {}
    for name in METRIC_NAMES:
        ours = getattr(report.scores[agent], name)
        theirs = getattr(baseline.scores[agent], name)
        deltas[name] = {
            "value": ours,
            "baseline": theirs,
            "absolute": ours - theirs,
            "relative": (ours - theirs) / theirs if theirs != 0 else None,
        }
    return deltas
