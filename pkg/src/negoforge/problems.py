"""Multi-issue bargaining problems with linear-additive utilities.

An outcome assigns one value index per issue; a profile scores it as the
weight-sum of per-issue valuations. Both profiles of a problem share the
same issue structure. Problems carry no discount factor and no reservation
value: a failed negotiation is worth 0 to both sides.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

Outcome = tuple[int, ...]

WEIGHT_TOLERANCE = 1e-9
DEFAULT_ENUMERATION_CAP = 10**6


class InvalidProblemError(ValueError):
    """A problem or profile violates a structural invariant."""


class InvalidOutcomeError(ValueError):
    """An outcome does not fit the problem's issue structure."""


class EnumerationCapError(RuntimeError):
    """The outcome space is too large to enumerate."""


@dataclass(frozen=True)
class Issue:
    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) < 2:
            raise InvalidProblemError(f"issue {self.name!r} needs at least 2 values")
        if len(set(self.values)) != len(self.values):
            raise InvalidProblemError(f"issue {self.name!r} has duplicate value labels")


@dataclass(frozen=True)
class UtilityProfile:
    """Per-issue weights and value scores; weights sum to 1, best value per issue scores 1."""

    weights: tuple[float, ...]
    valuations: tuple[tuple[float, ...], ...]  # aligned with issue value order

    def validate(self, issues: tuple[Issue, ...]) -> None:
        if len(self.weights) != len(issues) or len(self.valuations) != len(issues):
            raise InvalidProblemError("profile does not cover every issue exactly once")
        if abs(sum(self.weights) - 1.0) > WEIGHT_TOLERANCE:
            raise InvalidProblemError(f"issue weights sum to {sum(self.weights)!r}, expected 1")
        for issue, scores in zip(issues, self.valuations):
            if len(scores) != len(issue.values):
                raise InvalidProblemError(f"valuations for issue {issue.name!r} mismatch its values")
            if any(s < 0.0 or s > 1.0 for s in scores):
                raise InvalidProblemError(f"issue {issue.name!r} has a score outside [0,1]")
            if max(scores) != 1.0:
                raise InvalidProblemError(f"issue {issue.name!r} has no value scoring exactly 1")
        if any(w < 0.0 or w > 1.0 for w in self.weights):
            raise InvalidProblemError("issue weight outside [0,1]")


@dataclass
class BargainingProblem:
    id: str
    issues: tuple[Issue, ...]
    profile_a: UtilityProfile
    profile_b: UtilityProfile
    _views: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.issues:
            raise InvalidProblemError("problem needs at least one issue")
        self.profile_a.validate(self.issues)
        self.profile_b.validate(self.issues)

    def __getstate__(self):
        # cached views are rebuilt on demand; keep pickles small for workers
        state = self.__dict__.copy()
        state["_views"] = {}
        return state

    def profile(self, side: str) -> UtilityProfile:
        if side == "A":
            return self.profile_a
        if side == "B":
            return self.profile_b
        raise ValueError(f"unknown side {side!r}")

    def view(self, side: str) -> "ProblemView":
        view = self._views.get(side)
        if view is None:
            view = ProblemView(self, side)
            self._views[side] = view
        return view

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(issue.values) for issue in self.issues)


@dataclass(frozen=True)
class Setting:
    """One negotiation setting: a problem side faced against a specific opponent."""

    problem_id: str
    side: str
    opponent_id: str

    @property
    def id(self) -> str:
        return f"{self.opponent_id}|{self.problem_id}|{self.side}"


def check_outcome(problem: BargainingProblem, outcome: Outcome) -> None:
    if len(outcome) != len(problem.issues):
        raise InvalidOutcomeError(
            f"outcome has {len(outcome)} assignments for {len(problem.issues)} issues"
        )
    for idx, issue in zip(outcome, problem.issues):
        if not 0 <= idx < len(issue.values):
            raise InvalidOutcomeError(f"value index {idx} out of range for issue {issue.name!r}")


def utility(profile: UtilityProfile, outcome: Outcome) -> float:
    """Weighted sum of per-issue valuation scores for ``outcome``."""
    if len(outcome) != len(profile.weights):
        raise InvalidOutcomeError("outcome dimension does not match profile")
    return float(sum(w * vals[idx] for w, vals, idx in zip(profile.weights, profile.valuations, outcome)))


def outcome_count(problem: BargainingProblem) -> int:
    return math.prod(problem.shape)


class ProblemView:
    """One side's read-only handle on a problem: own utility plus outcome-space helpers.

    Vectorized lookups are cached; views are shared across sessions and safe
    to read from parallel workers.
    """

    def __init__(self, problem: BargainingProblem, side: str):
        self.problem = problem
        self.side = side
        profile = problem.profile(side)
        self.weights = np.asarray(profile.weights, dtype=float)
        # weighted per-issue score tables: utility(outcome) = sum_i table[i][outcome[i]]
        self.score_tables = [
            w * np.asarray(vals, dtype=float) for w, vals in zip(profile.weights, profile.valuations)
        ]
        self.shape = problem.shape
        self.n_outcomes = math.prod(self.shape)
        self._all_utilities: np.ndarray | None = None
        self._by_utility: tuple[np.ndarray, np.ndarray] | None = None

    def utility(self, outcome: Outcome) -> float:
        return float(sum(table[idx] for table, idx in zip(self.score_tables, outcome)))

    def utilities_of(self, assignments: np.ndarray) -> np.ndarray:
        """Utilities for an (n, n_issues) int array of outcomes."""
        total = np.zeros(len(assignments), dtype=float)
        for i, table in enumerate(self.score_tables):
            total += table[assignments[:, i]]
        return total

    def all_utilities(self, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
        """Utility of every outcome in lexicographic (row-major) order."""
        if self.n_outcomes > cap:
            raise EnumerationCapError(
                f"{self.n_outcomes} outcomes exceed enumeration cap {cap}"
            )
        if self._all_utilities is None:
            total = self.score_tables[0]
            for table in self.score_tables[1:]:
                total = np.add.outer(total, table).ravel()
            self._all_utilities = total
        return self._all_utilities

    def outcome_at(self, flat_index: int) -> Outcome:
        return tuple(int(v) for v in np.unravel_index(flat_index, self.shape))

    def best_outcome(self) -> Outcome:
        return tuple(int(np.argmax(table)) for table in self.score_tables)

    def worst_outcome(self) -> Outcome:
        return tuple(int(np.argmin(table)) for table in self.score_tables)

    def sorted_by_utility(self, cap: int = DEFAULT_ENUMERATION_CAP) -> tuple[np.ndarray, np.ndarray]:
        """(ascending utilities, matching flat outcome indexes); stable for ties."""
        if self._by_utility is None:
            utils = self.all_utilities(cap)
            order = np.argsort(utils, kind="stable")
            self._by_utility = (utils[order], order)
        return self._by_utility

    def cheapest_outcome_at_least(self, target: float) -> Outcome:
        """Outcome with the lowest own utility >= target; own best if none reaches it."""
        utils, order = self.sorted_by_utility()
        pos = int(np.searchsorted(utils, target, side="left"))
        if pos >= len(utils):
            return self.best_outcome()
        return self.outcome_at(int(order[pos]))


@dataclass(frozen=True)
class ProblemGenSpec:
    """Ranges for the random problem generator."""

    issues: tuple[int, int] = (2, 5)
    values_per_issue: tuple[int, int] = (2, 8)
    weight_skew: float = 2.0  # per-problem skew drawn from [0, weight_skew]

    def __post_init__(self):
        if self.issues[0] < 1 or self.issues[0] > self.issues[1]:
            raise InvalidProblemError(f"infeasible issue range {self.issues}")
        if self.values_per_issue[0] < 2 or self.values_per_issue[0] > self.values_per_issue[1]:
            raise InvalidProblemError(f"infeasible values range {self.values_per_issue}")
        if self.weight_skew < 0:
            raise InvalidProblemError("weight_skew must be >= 0")


def _random_weights(rng: random.Random, n: int, skew: float) -> tuple[float, ...]:
    # floor keeps every weight strictly positive even at high skew
    raw = [(0.01 + 0.99 * rng.random()) ** skew if skew > 0 else 1.0 for _ in range(n)]
    total = sum(raw)
    return tuple(r / total for r in raw)


def _random_valuations(rng: random.Random, n_values: int) -> tuple[float, ...]:
    raw = [rng.random() for _ in range(n_values)]
    top = max(raw)
    return tuple(r / top for r in raw)


def generate_problem(spec: ProblemGenSpec, seed: int, problem_id: str | None = None) -> BargainingProblem:
    """Deterministically generate a problem satisfying all profile invariants."""
    rng = random.Random(seed)
    n_issues = rng.randint(*spec.issues)
    issues = []
    for i in range(n_issues):
        n_values = rng.randint(*spec.values_per_issue)
        issues.append(Issue(name=f"issue{i + 1}", values=tuple(f"v{j + 1}" for j in range(n_values))))
    issues = tuple(issues)

    profiles = []
    for _ in range(2):
        skew = rng.uniform(0.0, spec.weight_skew)
        weights = _random_weights(rng, n_issues, skew)
        valuations = tuple(_random_valuations(rng, len(issue.values)) for issue in issues)
        profiles.append(UtilityProfile(weights=weights, valuations=valuations))

    return BargainingProblem(
        id=problem_id or f"problem-{seed}",
        issues=issues,
        profile_a=profiles[0],
        profile_b=profiles[1],
    )


# --- JSON wire format ({"format": 1, "id", "issues", "profiles"}) ---

PROBLEM_FORMAT = 1


def problem_to_dict(problem: BargainingProblem) -> dict:
    def profile_dict(profile: UtilityProfile) -> dict:
        return {
            "weights": {issue.name: w for issue, w in zip(problem.issues, profile.weights)},
            "valuations": {
                issue.name: {value: score for value, score in zip(issue.values, scores)}
                for issue, scores in zip(problem.issues, profile.valuations)
            },
        }

    return {
        "format": PROBLEM_FORMAT,
        "id": problem.id,
        "issues": [{"name": issue.name, "values": list(issue.values)} for issue in problem.issues],
        "profiles": {"A": profile_dict(problem.profile_a), "B": profile_dict(problem.profile_b)},
    }


def problem_from_dict(data: dict) -> BargainingProblem:
    if data.get("format") != PROBLEM_FORMAT:
        raise InvalidProblemError(f"unsupported problem format {data.get('format')!r}")
    issues = tuple(Issue(name=entry["name"], values=tuple(entry["values"])) for entry in data["issues"])

    def parse_profile(raw: dict) -> UtilityProfile:
        weights = tuple(float(raw["weights"][issue.name]) for issue in issues)
        valuations = tuple(
            tuple(float(raw["valuations"][issue.name][value]) for value in issue.values)
            for issue in issues
        )
        return UtilityProfile(weights=weights, valuations=valuations)

    return BargainingProblem(
        id=data["id"],
        issues=issues,
        profile_a=parse_profile(data["profiles"]["A"]),
        profile_b=parse_profile(data["profiles"]["B"]),
    )
