"""Tournament report rendering: markdown, delimited data, and figures.

The markdown table follows the tournament result layout (agents sorted by
utility, best value per column in bold, worst underlined). Figures are
rendered to PNG files next to the CSV output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .tournament import METRIC_NAMES, TournamentReport

METRIC_LABELS = {
    "utility": "Utility",
    "opponent_utility": "Opponent utility",
    "social_welfare": "Social welfare",
    "pareto_distance": "Pareto distance",
    "nash_distance": "Nash distance",
    "agreement_ratio": "Agreement ratio",
}

HIGHER_IS_BETTER = {
    "utility": True,
    "opponent_utility": True,
    "social_welfare": True,
    "pareto_distance": False,
    "nash_distance": False,
    "agreement_ratio": True,
}


def report_markdown(report: TournamentReport) -> str:
    agents = sorted(report.scores, key=lambda a: report.scores[a].utility)
    best, worst = {}, {}
    for metric in METRIC_NAMES:
        values = {a: getattr(report.scores[a], metric) for a in agents}
        ordered = sorted(values.items(), key=lambda kv: kv[1], reverse=HIGHER_IS_BETTER[metric])
        best[metric] = ordered[0][0]
        worst[metric] = ordered[-1][0]

    lines = [
        "| Agent | " + " | ".join(METRIC_LABELS[m] for m in METRIC_NAMES) + " |",
        "|" + "---|" * (len(METRIC_NAMES) + 1),
    ]
    for agent in agents:
        cells = [agent]
        for metric in METRIC_NAMES:
            text = f"{getattr(report.scores[agent], metric):.3f}"
            if agent == best[metric]:
                text = f"**{text}**"
            elif agent == worst[metric]:
                text = f"<u>{text}</u>"
            cells.append(text)
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    lines.append(f"Sessions: {report.count_formula}")
    return "\n".join(lines) + "\n"


def comparison_markdown(deltas: dict, label: str, baseline_label: str) -> str:
    lines = [
        f"Comparison: {label} vs {baseline_label}",
        "",
        "| Metric | " + label + " | " + baseline_label + " | Absolute | Relative |",
        "|---|---|---|---|---|",
    ]
    for metric in METRIC_NAMES:
        d = deltas[metric]
        relative = "n/a" if d["relative"] is None else f"{100 * d['relative']:+.1f}%"
        lines.append(
            f"| {METRIC_LABELS[metric]} | {d['value']:.3f} | {d['baseline']:.3f} "
            f"| {d['absolute']:+.4f} | {relative} |"
        )
    return "\n".join(lines) + "\n"


def utility_delta_sentence(deltas: dict, label: str, baseline_label: str) -> str:
    """The headline signed comparison, e.g. '(0.788-0.742)/0.742 = +6.2%'."""
    d = deltas["utility"]
    relative = "n/a" if d["relative"] is None else f"{100 * d['relative']:+.1f}%"
    return (
        f"{label} mean utility {d['value']:.3f} vs {baseline_label} {d['baseline']:.3f}: "
        f"({d['value']:.3f}-{d['baseline']:.3f})/{d['baseline']:.3f} = {relative}"
    )


def sessions_csv_rows(report: TournamentReport) -> tuple[list[str], list[list]]:
    header = [
        "repetition", "problem_id", "agent_a", "agent_b", "strategy_id", "agreed",
        "t_agree", "utility_a", "utility_b", "pareto_distance", "nash_distance", "violator",
    ]
    rows = []
    for record in report.sessions:
        rows.append(
            [
                record.repetition, record.problem_id, record.agent_a, record.agent_b,
                record.strategy_id or "", int(record.agreed), record.t_agree,
                record.utility_a, record.utility_b, record.pareto_distance,
                record.nash_distance, record.violator or "",
            ]
        )
    return header, rows


def plot_data_rows(report: TournamentReport) -> tuple[list[str], list[list]]:
    header = ["agent", "metric", "value"]
    rows = []
    for agent in sorted(report.scores):
        for metric in METRIC_NAMES:
            rows.append([agent, metric, float(getattr(report.scores[agent], metric))])
    return header, rows


def render_report_figure(report: TournamentReport, path: str | Path) -> Path:
    """Six bar panels, one per metric; our agent highlighted."""
    agents = sorted(report.scores, key=lambda a: report.scores[a].utility, reverse=True)
    colors = ["#d62728" if a == report.our_agent_id else "#1f77b4" for a in agents]
    fig, axes = plt.subplots(2, 3, figsize=(14, 7))
    for ax, metric in zip(axes.ravel(), METRIC_NAMES):
        values = [getattr(report.scores[a], metric) for a in agents]
        ax.barh(range(len(agents)), values, color=colors)
        ax.set_yticks(range(len(agents)))
        ax.set_yticklabels(agents, fontsize=7)
        ax.invert_yaxis()
        ax.set_title(METRIC_LABELS[metric], fontsize=10)
        ax.tick_params(axis="x", labelsize=7)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_comparison_figure(deltas: dict, path: str | Path,
                             label: str, baseline_label: str) -> Path:
    """Grouped bars per metric for the two strategy variants."""
    metrics = list(METRIC_NAMES)
    ours = [deltas[m]["value"] for m in metrics]
    base = [deltas[m]["baseline"] for m in metrics]
    x = np.arange(len(metrics))
    width = 0.38
    fig, ax = plt.subplots(figsize=(10, 4.5))
    ax.bar(x - width / 2, base, width, label=baseline_label, color="#1f77b4")
    ax.bar(x + width / 2, ours, width, label=label, color="#d62728")
    ax.set_xticks(x)
    ax.set_xticklabels([METRIC_LABELS[m] for m in metrics], fontsize=8)
    ax.legend(fontsize=8)
    ax.set_ylabel("Mean value")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
