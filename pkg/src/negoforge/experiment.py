"""End-to-end experiment orchestration.

The pipeline mirrors the evaluation procedure: generate problem corpora and
an opponent roster, gather opponent features with the default strategy using
the true opposing utilities, build the portfolio and selector on the train
settings, then run the test-set tournament twice (selector on / first
strategy only) and compare. Every stage derives its randomness from the one
experiment seed through named sub-streams.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import STRATEGY_SPACE, DynamicAgent, StrategyConfig
from .features import (
    FEATURE_NAMES,
    ObservationStore,
    features_to_rows,
    opponent_observation,
    problem_features,
)
from .hydra import HydraResult, best_ratio_report, hydra
from .opponents import OpponentSpec, default_roster, instantiate
from .persistence import (
    load_features,
    load_matrix,
    load_portfolio,
    load_problems,
    load_roster,
    load_selector,
    save_features,
    save_matrix,
    save_portfolio,
    save_problems,
    save_roster,
    save_selector,
    write_csv_artifact,
    write_json_artifact,
)
from .problems import BargainingProblem, ProblemGenSpec, Setting, generate_problem
from .protocol import run_session
from .reporting import (
    comparison_markdown,
    plot_data_rows,
    render_comparison_figure,
    render_report_figure,
    report_markdown,
    sessions_csv_rows,
    utility_delta_sentence,
)
from .seeding import derive_seed
from .selector import SelectorSearchSpec
from .tournament import TournamentReport, TournamentSpec, compare_reports, run_tournament


@dataclass
class ExperimentConfig:
    """Desk-scale experiment description; JSON-serializable."""

    seed: int = 7
    out_dir: str = "runs/desk"
    train_problems: int = 40
    test_problems: int = 20
    issues: tuple[int, int] = (2, 5)
    values_per_issue: tuple[int, int] = (2, 8)
    weight_skew: float = 2.0
    max_rounds: int = 60
    warmup_problems_per_opponent: int = 5
    warmup_repetitions: int = 2
    smbo_budget: int = 200
    hydra_k: int = 3
    matrix_repetitions: int = 10
    selector_folds: int = 5
    tournament_repetitions: int = 3
    tournament_warmup: bool = True
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "problems": {
                "train": self.train_problems,
                "test": self.test_problems,
                "issues": list(self.issues),
                "values_per_issue": list(self.values_per_issue),
                "weight_skew": self.weight_skew,
            },
            "max_rounds": self.max_rounds,
            "warmup": {
                "problems_per_opponent": self.warmup_problems_per_opponent,
                "repetitions": self.warmup_repetitions,
            },
            "smbo": {"budget": self.smbo_budget},
            "hydra": {"k_max": self.hydra_k, "matrix_repetitions": self.matrix_repetitions},
            "selector": {"folds": self.selector_folds},
            "tournament": {
                "repetitions": self.tournament_repetitions,
                "warmup": self.tournament_warmup,
            },
            "workers": self.workers,
        }

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        problems = raw.get("problems", {})
        warmup = raw.get("warmup", {})
        smbo_cfg = raw.get("smbo", {})
        hydra_cfg = raw.get("hydra", {})
        selector_cfg = raw.get("selector", {})
        tournament_cfg = raw.get("tournament", {})
        defaults = ExperimentConfig()
        config = ExperimentConfig(
            seed=int(raw.get("seed", defaults.seed)),
            out_dir=raw.get("out_dir", defaults.out_dir),
            train_problems=int(problems.get("train", defaults.train_problems)),
            test_problems=int(problems.get("test", defaults.test_problems)),
            issues=tuple(problems.get("issues", defaults.issues)),
            values_per_issue=tuple(problems.get("values_per_issue", defaults.values_per_issue)),
            weight_skew=float(problems.get("weight_skew", defaults.weight_skew)),
            max_rounds=int(raw.get("max_rounds", defaults.max_rounds)),
            warmup_problems_per_opponent=int(
                warmup.get("problems_per_opponent", defaults.warmup_problems_per_opponent)
            ),
            warmup_repetitions=int(warmup.get("repetitions", defaults.warmup_repetitions)),
            smbo_budget=int(smbo_cfg.get("budget", defaults.smbo_budget)),
            hydra_k=int(hydra_cfg.get("k_max", defaults.hydra_k)),
            matrix_repetitions=int(
                hydra_cfg.get("matrix_repetitions", defaults.matrix_repetitions)
            ),
            selector_folds=int(selector_cfg.get("folds", defaults.selector_folds)),
            tournament_repetitions=int(
                tournament_cfg.get("repetitions", defaults.tournament_repetitions)
            ),
            tournament_warmup=bool(tournament_cfg.get("warmup", defaults.tournament_warmup)),
            workers=int(raw.get("workers", defaults.workers)),
        )
        for name in ("max_rounds", "smbo_budget", "hydra_k", "matrix_repetitions",
                     "tournament_repetitions", "train_problems", "test_problems"):
            if getattr(config, name) < 1:
                raise ValueError(f"{name} must be positive")
        return config

    @staticmethod
    def load(path: str | Path) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class ExperimentPaths:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def problems(self) -> Path:
        return self.root / "problems.json"

    @property
    def roster(self) -> Path:
        return self.root / "roster.json"

    @property
    def features(self) -> Path:
        return self.root / "features.json"

    @property
    def features_csv(self) -> Path:
        return self.root / "features.csv"

    @property
    def portfolio(self) -> Path:
        return self.root / "portfolio.json"

    @property
    def matrix(self) -> Path:
        return self.root / "matrix.csv"

    @property
    def selector(self) -> Path:
        return self.root / "selector.json"

    @property
    def hydra_report(self) -> Path:
        return self.root / "hydra_report.json"

    def history(self, iteration: int) -> Path:
        return self.root / f"history-k{iteration}.jsonl"

    @property
    def reports(self) -> Path:
        return self.root / "reports"


class SessionMetric:
    """Observed utility of playing a configuration in one setting.

    Picklable, so matrix fill can fan out to worker processes. Setting ids
    follow ``opponent|problem|side``.
    """

    def __init__(self, problems: dict[str, BargainingProblem],
                 opponents: dict[str, OpponentSpec], max_rounds: int):
        self.problems = problems
        self.opponents = opponents
        self.max_rounds = max_rounds

    def __call__(self, config: StrategyConfig, setting_id: str, seed: int) -> float:
        opponent_id, problem_id, side = setting_id.split("|")
        problem = self.problems[problem_id]
        agent = DynamicAgent(config)
        opponent = instantiate(self.opponents[opponent_id])
        if side == "A":
            result = run_session(agent, opponent, problem, self.max_rounds, seed)
        else:
            result = run_session(opponent, agent, problem, self.max_rounds, seed)
        return result.utility_for(side)


def train_settings(problems: list[BargainingProblem], roster: list[OpponentSpec]) -> list[Setting]:
    return [
        Setting(problem_id=p.id, side="A", opponent_id=o.id)
        for o in roster
        for p in problems
    ]


def stage_problems(config: ExperimentConfig) -> tuple[list[BargainingProblem], list[BargainingProblem]]:
    spec = ProblemGenSpec(
        issues=config.issues, values_per_issue=config.values_per_issue, weight_skew=config.weight_skew
    )
    train = [
        generate_problem(spec, derive_seed(config.seed, "problems", "train", i), f"train-p{i + 1:03d}")
        for i in range(config.train_problems)
    ]
    test = [
        generate_problem(spec, derive_seed(config.seed, "problems", "test", i), f"test-p{i + 1:03d}")
        for i in range(config.test_problems)
    ]
    return train, test


def stage_features(
    config: ExperimentConfig,
    problems: list[BargainingProblem],
    roster: list[OpponentSpec],
) -> tuple[dict[str, np.ndarray], ObservationStore]:
    """Problem features for every train setting plus per-opponent behaviour
    features gathered with the default strategy against the true opposing
    utilities."""
    store = ObservationStore()
    default_config = STRATEGY_SPACE.default()
    for opponent in roster:
        target = config.warmup_problems_per_opponent * config.warmup_repetitions
        order = np.random.default_rng(
            derive_seed(config.seed, "warmup-problems", opponent.id)
        ).permutation(len(problems))
        # instant accepts leave no opponent offers and thus no usable
        # observation; keep widening the problem sample until two exist
        for index in order:
            if store.count(opponent.id) >= max(target, 2):
                break
            problem = problems[int(index)]
            for rep in range(config.warmup_repetitions):
                seed = derive_seed(config.seed, "warmup", opponent.id, problem.id, rep)
                agent = DynamicAgent(default_config)
                result = run_session(
                    agent, instantiate(opponent), problem, config.max_rounds, seed
                )
                observation = opponent_observation(
                    result, problem, "A", problem.view("B").utility
                )
                if observation is not None:
                    store.add(opponent.id, observation)
        if store.count(opponent.id) < 2:
            raise RuntimeError(
                f"opponent {opponent.id} produced fewer than 2 usable observations "
                f"across {len(problems)} problems"
            )

    features: dict[str, np.ndarray] = {}
    for setting in train_settings(problems, roster):
        problem = next(p for p in problems if p.id == setting.problem_id)
        block = problem_features(problem, setting.side)
        opponent_block = store.features_for(setting.opponent_id)
        features[setting.id] = np.concatenate([block.to_vector(), opponent_block.to_vector()])
    return features, store


def stage_hydra(
    config: ExperimentConfig,
    problems: list[BargainingProblem],
    roster: list[OpponentSpec],
    features: dict[str, np.ndarray],
    paths: ExperimentPaths | None = None,
) -> HydraResult:
    metric = SessionMetric({p.id: p for p in problems}, {o.id: o for o in roster}, config.max_rounds)
    settings = [s.id for s in train_settings(problems, roster)]

    pool = ProcessPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    map_fn = pool.map if pool is not None else map

    def checkpoint(iteration, portfolio, matrix, selector):
        if paths is None:
            return
        save_portfolio(paths.portfolio, portfolio, config.seed)
        save_matrix(paths.matrix, matrix, config.seed)
        save_selector(paths.selector, selector, config.seed)

    try:
        result = hydra(
            STRATEGY_SPACE,
            settings,
            metric,
            config.hydra_k,
            derive_seed(config.seed, "hydra"),
            features=features,
            smbo_budget=config.smbo_budget,
            matrix_repetitions=config.matrix_repetitions,
            selector_spec=SelectorSearchSpec(folds=config.selector_folds),
            map_fn=map_fn,
            checkpoint=checkpoint,
        )
    finally:
        if pool is not None:
            pool.shutdown()

    if paths is not None:
        ratios = best_ratio_report(result.matrix, result.portfolio.ids, top_k=len(result.portfolio))
        write_json_artifact(
            paths.hydra_report,
            "hydra-report",
            config.seed,
            {
                "oracle_by_size": result.oracle_by_size,
                "contribution": result.contribution,
                "best_ratios": ratios,
            },
        )
    return result


def stage_tournament(
    config: ExperimentConfig,
    test_problems: list[BargainingProblem],
    test_roster: list[OpponentSpec],
    portfolio,
    selector,
    paths: ExperimentPaths | None = None,
) -> tuple[TournamentReport, TournamentReport, dict]:
    """Test-set tournament with the selector, re-run with the first strategy
    pinned, plus per-metric deltas."""
    base = dict(
        portfolio=portfolio,
        opponents=test_roster,
        problems=test_problems,
        repetitions=config.tournament_repetitions,
        max_rounds=config.max_rounds,
        seed=derive_seed(config.seed, "tournament"),
        warmup=config.tournament_warmup,
    )
    report_selector = run_tournament(
        TournamentSpec(selector=selector, our_agent_id="DA(AS)", **base), workers=config.workers
    )
    report_fixed = run_tournament(
        TournamentSpec(selector=None, our_agent_id="DA(AS)", **base), workers=config.workers
    )
    deltas = compare_reports(report_selector, report_fixed)

    if paths is not None:
        reports = paths.reports
        write_json_artifact(
            reports / "tournament_selector.json", "tournament-report", config.seed,
            {"report": report_selector.to_dict()},
        )
        write_json_artifact(
            reports / "tournament_theta1.json", "tournament-report", config.seed,
            {"report": report_fixed.to_dict()},
        )
        (reports / "report.md").parent.mkdir(parents=True, exist_ok=True)
        (reports / "report.md").write_text(report_markdown(report_selector), encoding="utf-8")
        header, rows = sessions_csv_rows(report_selector)
        write_csv_artifact(reports / "sessions.csv", header, rows, config.seed)
        header, rows = plot_data_rows(report_selector)
        write_csv_artifact(reports / "plot_data.csv", header, rows, config.seed)
        render_report_figure(report_selector, reports / "report_metrics.png")
        (reports / "comparison.md").write_text(
            comparison_markdown(deltas, "DA(AS)", "DA(theta1)"), encoding="utf-8"
        )
        render_comparison_figure(deltas, reports / "comparison.png", "DA(AS)", "DA(theta1)")
    return report_selector, report_fixed, deltas


def run_pipeline(config: ExperimentConfig, echo=print) -> dict:
    """Full desk run; returns the summary dict that is also written to disk."""
    paths = ExperimentPaths(config.out_dir)
    paths.root.mkdir(parents=True, exist_ok=True)

    echo("[1/5] generating problems")
    train_probs, test_probs = stage_problems(config)
    save_problems(paths.problems, train_probs + test_probs, config.seed)

    echo("[2/5] building opponent roster")
    roster = default_roster()
    save_roster(paths.roster, roster, config.seed)
    train_roster = [o for o in roster if o.split == "train"]
    test_roster = [o for o in roster if o.split == "test"]

    echo("[3/5] extracting setting features")
    features, store = stage_features(config, train_probs, train_roster)
    save_features(paths.features, {k: v.tolist() for k, v in features.items()}, store, config.seed)
    write_csv_artifact(
        paths.features_csv, ["setting_id", *FEATURE_NAMES], features_to_rows(features), config.seed
    )

    echo("[4/5] building the portfolio (hydra)")
    result = stage_hydra(config, train_probs, train_roster, features, paths)

    echo("[5/5] running the test tournament")
    report_selector, report_fixed, deltas = stage_tournament(
        config, test_probs, test_roster, result.portfolio, result.selector, paths
    )
    sentence = utility_delta_sentence(deltas, "DA(AS)", "DA(theta1)")
    echo(sentence)

    summary = {
        "report_hash": report_selector.hash(),
        "baseline_hash": report_fixed.hash(),
        "utility_delta": deltas["utility"],
        "delta_sentence": sentence,
        "oracle_by_size": result.oracle_by_size,
        "contribution": result.contribution,
        "portfolio_size": len(result.portfolio),
    }
    write_json_artifact(paths.reports / "summary.json", "summary", config.seed, {"summary": summary})
    return summary


def load_artifacts(paths: ExperimentPaths):
    """Convenience loader for the pipeline's persisted artifacts."""
    return {
        "problems": load_problems(paths.problems),
        "roster": load_roster(paths.roster),
        "features": load_features(paths.features)[0],
        "portfolio": load_portfolio(paths.portfolio),
        "matrix": load_matrix(paths.matrix),
        "selector": load_selector(paths.selector),
    }
