"""Command-line interface.

Every subcommand reads the experiment config, validates its input artifacts,
and writes versioned artifacts embedding the seed. Exit codes: 0 on success,
1 on verification or artifact failure, 2 on usage errors. The NEGOFORGE_LOG
environment variable sets the log level.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path

import click

from . import __version__
from .experiment import (
    ExperimentConfig,
    ExperimentPaths,
    SessionMetric,
    run_pipeline,
    stage_features,
    stage_hydra,
    stage_problems,
    stage_tournament,
    train_settings,
)
from .opponents import default_roster
from .persistence import (
    ArtifactError,
    load_features,
    load_history,
    load_matrix,
    load_portfolio,
    load_problems,
    load_roster,
    load_selector,
    read_json_artifact,
    save_features,
    save_history,
    save_problems,
    save_roster,
    save_selector,
    write_csv_artifact,
    write_json_artifact,
)
from .agent import STRATEGY_SPACE
from .features import FEATURE_NAMES, features_to_rows
from .reporting import (
    comparison_markdown,
    plot_data_rows,
    render_comparison_figure,
    render_report_figure,
    report_markdown,
    sessions_csv_rows,
    utility_delta_sentence,
)
from .selector import SelectorSearchSpec, fit_selector
from .smbo import smbo
from .tournament import TournamentReport, compare_reports
from .verify import run_checks

logger = logging.getLogger("negoforge")


def _setup_logging() -> None:
    level = os.environ.get("NEGOFORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config(config_path: str | None, seed: int | None, workers: int | None,
                 out: str | None) -> ExperimentConfig:
    if config_path is not None:
        config = ExperimentConfig.load(config_path)
    else:
        config = ExperimentConfig()
    if seed is not None:
        config.seed = seed
    if workers is not None:
        config.workers = workers
    if out is not None:
        config.out_dir = out
    return config


def _fail(message: str) -> None:
    raise click.ClickException(message)


config_option = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                             default=None, help="Experiment config JSON.")
seed_option = click.option("--seed", type=int, default=None, help="Override the experiment seed.")
workers_option = click.option("--workers", type=int, default=None,
                              help="Parallel evaluation workers (default 1).")
out_option = click.option("--out", type=click.Path(file_okay=False), default=None,
                          help="Output directory (overrides the config).")


@click.group()
@click.version_option(__version__, prog_name="negoforge")
def main() -> None:
    """Build and evaluate portfolios of negotiation strategies."""
    _setup_logging()


@main.command("gen-problems")
@config_option
@seed_option
@out_option
def gen_problems(config_path, seed, out):
    """Generate the train/test problem corpora."""
    config = _load_config(config_path, seed, None, out)
    paths = ExperimentPaths(config.out_dir)
    train, test = stage_problems(config)
    save_problems(paths.problems, train + test, config.seed)
    click.echo(f"wrote {len(train)} train + {len(test)} test problems to {paths.problems}")


@main.command("gen-roster")
@config_option
@seed_option
@out_option
def gen_roster(config_path, seed, out):
    """Write the deterministic opponent roster."""
    config = _load_config(config_path, seed, None, out)
    paths = ExperimentPaths(config.out_dir)
    roster = default_roster()
    save_roster(paths.roster, roster, config.seed)
    train = sum(1 for o in roster if o.split == "train")
    click.echo(f"wrote roster ({train} train / {len(roster) - train} test) to {paths.roster}")


def _split_problems(problems):
    train = [p for p in problems if p.id.startswith("train-")]
    test = [p for p in problems if p.id.startswith("test-")]
    if not train or not test:
        _fail("problem ids must carry train-/test- prefixes (use gen-problems)")
    return train, test


@main.command("extract-features")
@config_option
@seed_option
@out_option
def extract_features(config_path, seed, out):
    """Gather problem and opponent features for every training setting."""
    config = _load_config(config_path, seed, None, out)
    paths = ExperimentPaths(config.out_dir)
    try:
        problems = load_problems(paths.problems)
        roster = load_roster(paths.roster)
    except (ArtifactError, FileNotFoundError, KeyError) as exc:
        _fail(f"cannot load inputs: {exc}")
    train_probs, _ = _split_problems(problems)
    train_roster = [o for o in roster if o.split == "train"]
    features, store = stage_features(config, train_probs, train_roster)
    save_features(paths.features, {k: v.tolist() for k, v in features.items()}, store, config.seed)
    write_csv_artifact(paths.features_csv, ["setting_id", *FEATURE_NAMES],
                       features_to_rows(features), config.seed)
    click.echo(f"wrote features for {len(features)} settings to {paths.features}")


@main.command("configure")
@config_option
@seed_option
@workers_option
@out_option
@click.option("--history", "history_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Resume from an existing run-history file.")
def configure(config_path, seed, workers, out, history_path):
    """One configurator run on the train settings (no portfolio loop)."""
    config = _load_config(config_path, seed, workers, out)
    paths = ExperimentPaths(config.out_dir)
    try:
        problems = load_problems(paths.problems)
        roster = load_roster(paths.roster)
        features, _ = load_features(paths.features)
    except (ArtifactError, FileNotFoundError, KeyError) as exc:
        _fail(f"cannot load inputs: {exc}")
    train_probs, _ = _split_problems(problems)
    train_roster = [o for o in roster if o.split == "train"]
    metric = SessionMetric({p.id: p for p in train_probs},
                           {o.id: o for o in train_roster}, config.max_rounds)
    settings = [s.id for s in train_settings(train_probs, train_roster)]
    initial = load_history(history_path) if history_path else None
    result = smbo(STRATEGY_SPACE, settings, metric, config.smbo_budget, config.seed,
                  setting_features=features, initial_history=initial)
    save_history(paths.history(1), result.history)
    write_json_artifact(paths.root / "incumbent.json", "configuration", config.seed,
                        {"configuration": result.incumbent.to_dict()})
    click.echo(
        f"incumbent after {result.sessions_used} sessions "
        f"({result.iterations} iterations) -> {paths.root / 'incumbent.json'}"
    )


@main.command("hydra")
@config_option
@seed_option
@workers_option
@out_option
def hydra_cmd(config_path, seed, workers, out):
    """Build the strategy portfolio and selector on the train settings."""
    config = _load_config(config_path, seed, workers, out)
    paths = ExperimentPaths(config.out_dir)
    try:
        problems = load_problems(paths.problems)
        roster = load_roster(paths.roster)
        features, _ = load_features(paths.features)
    except (ArtifactError, FileNotFoundError, KeyError) as exc:
        _fail(f"cannot load inputs: {exc}")
    train_probs, _ = _split_problems(problems)
    train_roster = [o for o in roster if o.split == "train"]
    result = stage_hydra(config, train_probs, train_roster, features, paths)
    click.echo(f"portfolio of {len(result.portfolio)} strategies -> {paths.portfolio}")
    click.echo(f"oracle by size: {[round(v, 4) for v in result.oracle_by_size]}")
    for strategy_id, ok in result.contribution.items():
        click.echo(f"  {strategy_id} contributes: {ok}")


@main.command("fit-selector")
@config_option
@seed_option
@out_option
def fit_selector_cmd(config_path, seed, out):
    """Refit the selector from the persisted matrix and features."""
    config = _load_config(config_path, seed, None, out)
    paths = ExperimentPaths(config.out_dir)
    try:
        portfolio = load_portfolio(paths.portfolio)
        matrix = load_matrix(paths.matrix)
        features, _ = load_features(paths.features)
    except (ArtifactError, FileNotFoundError, KeyError) as exc:
        _fail(f"cannot load inputs: {exc}")
    model = fit_selector(portfolio, matrix, features,
                         SelectorSearchSpec(folds=config.selector_folds), config.seed)
    save_selector(paths.selector, model, config.seed)
    click.echo(f"selector ({model.method}) -> {paths.selector}")


@main.command("tournament")
@config_option
@seed_option
@workers_option
@out_option
def tournament_cmd(config_path, seed, workers, out):
    """Run the test tournament with and without the selector and compare."""
    config = _load_config(config_path, seed, workers, out)
    paths = ExperimentPaths(config.out_dir)
    try:
        problems = load_problems(paths.problems)
        roster = load_roster(paths.roster)
        portfolio = load_portfolio(paths.portfolio)
        selector = load_selector(paths.selector)
    except (ArtifactError, FileNotFoundError, KeyError) as exc:
        _fail(f"cannot load inputs: {exc}")
    _, test_probs = _split_problems(problems)
    test_roster = [o for o in roster if o.split == "test"]
    report, baseline, deltas = stage_tournament(
        config, test_probs, test_roster, portfolio, selector, paths
    )
    click.echo(report.count_formula)
    click.echo(utility_delta_sentence(deltas, "DA(AS)", "DA(theta1)"))
    click.echo(f"report hash {report.hash()}")


@main.command("report")
@click.option("--report", "report_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--baseline", "baseline_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@seed_option
def report_cmd(report_path, baseline_path, out, seed):
    """Render markdown, CSV, and figures from a tournament report artifact."""
    try:
        data = read_json_artifact(report_path, "tournament-report")
        report = TournamentReport.from_dict(data["report"])
    except (ArtifactError, KeyError, TypeError, ValueError) as exc:
        _fail(f"cannot load report: {exc}")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifact_seed = seed if seed is not None else int(data.get("seed", 0))
    (out_dir / "report.md").write_text(report_markdown(report), encoding="utf-8")
    header, rows = sessions_csv_rows(report)
    write_csv_artifact(out_dir / "sessions.csv", header, rows, artifact_seed)
    header, rows = plot_data_rows(report)
    write_csv_artifact(out_dir / "plot_data.csv", header, rows, artifact_seed)
    render_report_figure(report, out_dir / "report_metrics.png")
    click.echo(f"report rendered to {out_dir}")
    if baseline_path is not None:
        try:
            base_data = read_json_artifact(baseline_path, "tournament-report")
            baseline = TournamentReport.from_dict(base_data["report"])
            deltas = compare_reports(report, baseline)
        except (ArtifactError, KeyError, ValueError) as exc:
            _fail(f"cannot compare: {exc}")
        (out_dir / "comparison.md").write_text(
            comparison_markdown(deltas, report.our_agent_id, baseline.our_agent_id),
            encoding="utf-8",
        )
        render_comparison_figure(deltas, out_dir / "comparison.png",
                                 report.our_agent_id, baseline.our_agent_id)
        click.echo("comparison rendered")


@main.command("verify")
@click.option("--matrix", "matrix_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--portfolio", "portfolio_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--selector", "selector_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--features", "features_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--quick", is_flag=True, help="Smaller problem sample for fast validation.")
@seed_option
@click.pass_context
def verify_cmd(ctx, matrix_path, portfolio_path, selector_path, features_path, quick, seed):
    """Re-run the invariant suites; exit 1 on any failure."""
    results = run_checks(
        matrix=matrix_path,
        portfolio=portfolio_path,
        selector=selector_path,
        features=features_path,
        quick=quick,
        seed=seed if seed is not None else 0,
    )
    failed = False
    for result in results:
        click.echo(result.line())
        failed = failed or not result.passed
    if failed:
        ctx.exit(1)


@main.command("run")
@config_option
@seed_option
@workers_option
@out_option
def run_cmd(config_path, seed, workers, out):
    """Full pipeline: problems, roster, features, hydra, tournament, report."""
    config = _load_config(config_path, seed, workers, out)
    summary = run_pipeline(config, echo=click.echo)
    click.echo(f"report hash {summary['report_hash']}")


if __name__ == "__main__":
    main()
