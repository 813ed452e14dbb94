"""Setting features: 6 problem descriptors plus 8 aggregated opponent descriptors.

Problem features come from exhaustive enumeration of the outcome space and
use population-form standard deviations. Opponent observations are computed
per session against a supplied opponent-utility estimate; during training
that estimate is the true opposing profile, in tournaments it is the
frequency model fitted within the session. Aggregation needs at least two
usable observations and reports mean plus coefficient of variation per field.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .problems import DEFAULT_ENUMERATION_CAP, BargainingProblem, Outcome
from .protocol import SessionResult

PROBLEM_FEATURE_NAMES = (
    "n_issues",
    "avg_values_per_issue",
    "n_outcomes",
    "std_issue_weights",
    "mean_utility",
    "std_utility",
)

OBSERVATION_FIELDS = (
    "t_agree",
    "concession_rate",
    "avg_offer_rate",
    "default_performance",
)

OPPONENT_FEATURE_NAMES = tuple(
    f"{field}_{stat}" for field in OBSERVATION_FIELDS for stat in ("mean", "cov")
)

FEATURE_NAMES = PROBLEM_FEATURE_NAMES + OPPONENT_FEATURE_NAMES


class InsufficientSamplesError(ValueError):
    """Opponent aggregation needs at least two usable observations."""


@dataclass(frozen=True)
class ProblemFeatures:
    n_issues: int
    avg_values_per_issue: float
    n_outcomes: int
    std_issue_weights: float
    mean_utility: float
    std_utility: float

    def to_vector(self) -> np.ndarray:
        return np.array(
            [
                float(self.n_issues),
                self.avg_values_per_issue,
                float(self.n_outcomes),
                self.std_issue_weights,
                self.mean_utility,
                self.std_utility,
            ]
        )


@dataclass(frozen=True)
class OpponentObservation:
    t_agree: float
    concession_rate: float
    avg_offer_rate: float
    default_performance: float

    def to_dict(self) -> dict:
        return {
            "t_agree": self.t_agree,
            "concession_rate": self.concession_rate,
            "avg_offer_rate": self.avg_offer_rate,
            "default_performance": self.default_performance,
        }

    @staticmethod
    def from_dict(raw: dict) -> "OpponentObservation":
        return OpponentObservation(**{k: float(raw[k]) for k in OBSERVATION_FIELDS})


@dataclass(frozen=True)
class OpponentFeatures:
    """Mean and coefficient of variation of each observation field (8 scalars)."""

    values: tuple[float, ...]

    def to_vector(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class SettingFeatures:
    """Fixed 14-dimensional description of a negotiation setting.

    ``opponent`` is None when no opponent block is available yet; selection
    then falls back to the portfolio's first strategy.
    """

    problem: ProblemFeatures
    opponent: OpponentFeatures | None

    @property
    def opponent_missing(self) -> bool:
        return self.opponent is None

    def to_vector(self) -> np.ndarray:
        if self.opponent is None:
            raise ValueError("opponent feature block is missing")
        return np.concatenate([self.problem.to_vector(), self.opponent.to_vector()])


def problem_features(
    problem: BargainingProblem, side: str, cap: int = DEFAULT_ENUMERATION_CAP
) -> ProblemFeatures:
    view = problem.view(side)
    n_issues = len(problem.issues)
    sizes = [len(issue.values) for issue in problem.issues]
    weights = np.asarray(problem.profile(side).weights, dtype=float)
    utilities = view.all_utilities(cap)
    mean_u = float(utilities.mean())
    return ProblemFeatures(
        n_issues=n_issues,
        avg_values_per_issue=float(sum(sizes) / n_issues),
        n_outcomes=int(np.prod(sizes)),
        std_issue_weights=float(np.sqrt(np.mean((weights - 1.0 / n_issues) ** 2))),
        mean_utility=mean_u,
        std_utility=float(np.sqrt(np.mean((utilities - mean_u) ** 2))),
    )


def opponent_observation(
    result: SessionResult,
    problem: BargainingProblem,
    side: str,
    opponent_utility: Callable[[Outcome], float],
) -> OpponentObservation | None:
    """Per-session behaviour snapshot of the opponent, or None when the
    opponent never offered (unusable for aggregation)."""
    opponent_side = "B" if side == "A" else "A"
    offers = [outcome for _, outcome in result.offers_by(opponent_side)]
    if not offers:
        return None
    view = problem.view(side)

    estimates = [opponent_utility(outcome) for outcome in offers]
    best_for_us = opponent_utility(view.best_outcome())

    def clamp(value: float) -> float:
        return min(1.0, max(0.0, value))

    lowest = min(estimates)
    if lowest <= best_for_us:
        concession_rate = 1.0
    else:
        concession_rate = clamp((1.0 - lowest) / (1.0 - best_for_us))

    mean_estimate = sum(estimates) / len(estimates)
    if mean_estimate <= best_for_us:
        avg_offer_rate = 1.0
    else:
        avg_offer_rate = clamp((1.0 - mean_estimate) / (1.0 - best_for_us))

    agreement_utility = result.utility_for(side) if result.agreed else 0.0
    worst_utility = view.utility(view.worst_outcome())
    if agreement_utility <= worst_utility:
        default_performance = 0.0
    else:
        default_performance = (agreement_utility - worst_utility) / (1.0 - worst_utility)

    return OpponentObservation(
        t_agree=result.t_agree,
        concession_rate=concession_rate,
        avg_offer_rate=avg_offer_rate,
        default_performance=default_performance,
    )


def aggregate(observations: list[OpponentObservation]) -> OpponentFeatures:
    """Mean and CoV (population std / mean; 0 at mean 0) per observation field."""
    if len(observations) < 2:
        raise InsufficientSamplesError(
            f"need at least 2 observations, got {len(observations)}"
        )
    values = []
    for field in OBSERVATION_FIELDS:
        samples = np.asarray([getattr(obs, field) for obs in observations], dtype=float)
        mean = float(samples.mean())
        std = float(np.sqrt(np.mean((samples - mean) ** 2)))
        cov = std / mean if mean != 0.0 else 0.0
        values.extend((mean, cov))
    return OpponentFeatures(values=tuple(values))


class ObservationStore:
    """Append-only per-opponent observation log."""

    def __init__(self):
        self.observations: dict[str, list[OpponentObservation]] = {}

    def add(self, opponent_id: str, observation: OpponentObservation) -> None:
        self.observations.setdefault(opponent_id, []).append(observation)

    def count(self, opponent_id: str) -> int:
        return len(self.observations.get(opponent_id, []))

    def features_for(self, opponent_id: str) -> OpponentFeatures:
        return aggregate(self.observations.get(opponent_id, []))

    def wipe(self) -> None:
        self.observations.clear()

    def to_dict(self) -> dict:
        return {
            opponent: [obs.to_dict() for obs in entries]
            for opponent, entries in sorted(self.observations.items())
        }

    @staticmethod
    def from_dict(raw: dict) -> "ObservationStore":
        store = ObservationStore()
        for opponent, entries in raw.items():
            for entry in entries:
                store.add(opponent, OpponentObservation.from_dict(entry))
        return store


def features_to_rows(features: dict) -> list[list]:
    """Rows for the feature CSV: setting id followed by the 14 feature columns.

    Values may be SettingFeatures or plain vectors.
    """
    rows = []
    for setting_id in sorted(features):
        value = features[setting_id]
        vector = value.to_vector() if isinstance(value, SettingFeatures) else np.asarray(value)
        rows.append([setting_id] + [float(v) for v in vector])
    return rows


def features_from_rows(rows: list[list]) -> dict[str, np.ndarray]:
    return {row[0]: np.asarray([float(v) for v in row[1:]], dtype=float) for row in rows}
