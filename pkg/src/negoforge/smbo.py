"""Model-based configuration of the negotiation strategy.

The optimizer alternates between fitting a random-forest surrogate on the
full run history, proposing challengers (expected-improvement local search
interleaved with uniform random picks), and intensifying them against the
incumbent with a run-doubling comparison on shared settings. All budgets
count sessions, never wall-clock time, so runs replay exactly.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm
from sklearn.ensemble import RandomForestRegressor

from .agent import ConfigurationSpace, StrategyConfig, validate_configuration
from .seeding import derive_seed

Metric = Callable[[StrategyConfig, str, int], float]


@dataclass(frozen=True)
class RunRecord:
    theta: StrategyConfig
    setting_id: str
    utility: float
    seed: int
    ordinal: int

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.to_dict(),
            "setting_id": self.setting_id,
            "utility": self.utility,
            "seed": self.seed,
            "ordinal": self.ordinal,
        }

    @staticmethod
    def from_dict(raw: dict) -> "RunRecord":
        return RunRecord(
            theta=validate_configuration(raw["theta"]),
            setting_id=raw["setting_id"],
            utility=float(raw["utility"]),
            seed=int(raw["seed"]),
            ordinal=int(raw["ordinal"]),
        )


class RunHistory:
    """Append-only log of (configuration, setting, observed utility) runs."""

    def __init__(self):
        self.records: list[RunRecord] = []
        self._cells: dict[tuple[StrategyConfig, str], list[float]] = {}

    def add(self, record: RunRecord) -> None:
        self.records.append(record)
        self._cells.setdefault((record.theta, record.setting_id), []).append(record.utility)

    def count(self, theta: StrategyConfig, setting_id: str) -> int:
        return len(self._cells.get((theta, setting_id), ()))

    def mean(self, theta: StrategyConfig, setting_id: str) -> float:
        values = self._cells[(theta, setting_id)]
        return sum(values) / len(values)

    def mean_over(self, theta: StrategyConfig, setting_ids: Sequence[str]) -> float:
        """Average of per-setting means: the optimisation metric over a set."""
        return sum(self.mean(theta, s) for s in setting_ids) / len(setting_ids)

    def settings_run(self, theta: StrategyConfig) -> set[str]:
        return {s for (t, s) in self._cells if t == theta}

    @property
    def next_ordinal(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)

    @staticmethod
    def from_jsonl(text: str) -> "RunHistory":
        history = RunHistory()
        for line in text.splitlines():
            if line.strip():
                history.add(RunRecord.from_dict(json.loads(line)))
        return history


class SessionBudget:
    """Session counter standing in for the original wall-clock budgets."""

    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def spend(self) -> None:
        self.used += 1

    @property
    def exhausted(self) -> bool:
        return self.used >= self.limit


class SurrogateModel:
    """Random forest over (encoded configuration, setting features) -> utility.

    Predictions marginalize over a fixed sample of setting feature vectors
    and report the mean and variance across trees.
    """

    def __init__(
        self,
        space: ConfigurationSpace,
        feature_sample: np.ndarray | None,
        seed: int,
        n_trees: int = 50,
        max_depth: int = 20,
    ):
        self.space = space
        # (m, d) marginalization sample; None when settings carry no features
        self.feature_sample = feature_sample
        self.forest = RandomForestRegressor(
            n_estimators=n_trees, max_depth=max_depth, bootstrap=True, random_state=seed % (2**32)
        )
        self.fitted = False

    def _rows(self, configs: Sequence[StrategyConfig], features: np.ndarray | None) -> np.ndarray:
        encoded = np.stack([self.space.encode(c) for c in configs])
        if features is None:
            return encoded
        k, m = len(configs), len(features)
        return np.hstack([np.repeat(encoded, m, axis=0), np.tile(features, (k, 1))])

    def fit(self, X_settings: list[np.ndarray] | None, configs: list[StrategyConfig], y: list[float]) -> None:
        encoded = np.stack([self.space.encode(c) for c in configs])
        if X_settings is not None:
            encoded = np.hstack([encoded, np.stack(X_settings)])
        self.forest.fit(encoded, np.asarray(y, dtype=float))
        self.fitted = True

    def predict(self, configs: Sequence[StrategyConfig]) -> tuple[np.ndarray, np.ndarray]:
        """Per-config (mean, variance) marginalized over the feature sample."""
        rows = self._rows(configs, self.feature_sample)
        m = 1 if self.feature_sample is None else len(self.feature_sample)
        per_tree = np.stack([tree.predict(rows) for tree in self.forest.estimators_])
        per_tree = per_tree.reshape(len(self.forest.estimators_), len(configs), m).mean(axis=2)
        return per_tree.mean(axis=0), per_tree.var(axis=0)

    def expected_improvement(
        self, configs: Sequence[StrategyConfig], incumbent: StrategyConfig
    ) -> np.ndarray:
        """EI over the incumbent's predicted performance, Gaussian proxy."""
        mu_inc = self.predict([incumbent])[0][0]
        mu, var = self.predict(configs)
        sigma = np.sqrt(var)
        gain = mu - mu_inc
        ei = np.where(gain > 0.0, gain, 0.0)
        positive = sigma > 0.0
        if positive.any():
            z = gain[positive] / sigma[positive]
            ei[positive] = gain[positive] * norm.cdf(z) + sigma[positive] * norm.pdf(z)
        return ei


def fit_surrogate(
    space: ConfigurationSpace,
    history: RunHistory,
    setting_features: dict[str, np.ndarray] | None,
    seed: int,
    feature_sample: np.ndarray | None,
) -> SurrogateModel:
    model = SurrogateModel(space, feature_sample, seed)
    if not history.records:
        return model
    configs = [r.theta for r in history.records]
    y = [r.utility for r in history.records]
    rows = None
    if setting_features is not None:
        rows = [setting_features[r.setting_id] for r in history.records]
    model.fit(rows, configs, y)
    return model


def select_configurations(
    model: SurrogateModel,
    incumbent: StrategyConfig,
    space: ConfigurationSpace,
    count: int,
    rng: random.Random,
    search_steps: int = 15,
    restarts: int = 4,
) -> list[StrategyConfig]:
    """``count`` challengers: EI local-search picks interleaved 50/50 with
    uniform random configurations. Falls back to pure random sampling when
    the model has not been fitted."""
    if not model.fitted:
        return [space.sample(rng) for _ in range(count)]

    seeds = [incumbent] + [space.sample(rng) for _ in range(restarts)]
    current = list(seeds)
    current_ei = model.expected_improvement(current, incumbent)
    visited: dict[StrategyConfig, float] = dict(zip(current, current_ei))
    for _ in range(search_steps):
        neighbors: list[StrategyConfig] = []
        owners: list[int] = []
        for idx, config in enumerate(current):
            for _ in range(3):
                neighbors.append(space.neighbor(config, rng))
                owners.append(idx)
        neighbor_ei = model.expected_improvement(neighbors, incumbent)
        improved = False
        for idx in range(len(current)):
            best_j, best_ei = None, current_ei[idx]
            for j, owner in enumerate(owners):
                if owner == idx and neighbor_ei[j] > best_ei:
                    best_j, best_ei = j, neighbor_ei[j]
            if best_j is not None:
                current[idx] = neighbors[best_j]
                current_ei[idx] = best_ei
                visited[current[idx]] = float(best_ei)
                improved = True
        if not improved:
            break

    by_ei = sorted(visited.items(), key=lambda kv: -kv[1])
    n_guided = count - count // 2
    guided = [config for config, _ in by_ei[:n_guided]]
    while len(guided) < n_guided:
        guided.append(space.sample(rng))
    randoms = [space.sample(rng) for _ in range(count // 2)]
    interleaved: list[StrategyConfig] = []
    for i in range(count):
        pool = guided if i % 2 == 0 else randoms
        idx = i // 2
        interleaved.append(pool[idx] if idx < len(pool) else space.sample(rng))
    return interleaved


def intensify(
    challengers: Sequence[StrategyConfig],
    incumbent: StrategyConfig,
    history: RunHistory,
    settings: Sequence[str],
    run: Callable[[StrategyConfig, str], None],
    rng: random.Random,
    budget: SessionBudget,
    intensify_cap: int,
    trajectory: list[StrategyConfig] | None = None,
) -> StrategyConfig:
    """Run-doubling comparison of each challenger against the incumbent.

    A challenger is rejected as soon as its mean on the shared settings falls
    strictly below the incumbent's; it is promoted once it has matched every
    setting the incumbent has run and is strictly better on them. At least
    two challengers are processed before the per-call session cap applies.
    """
    spent_at_entry = budget.used
    for i, challenger in enumerate(challengers, start=1):
        if budget.exhausted:
            break
        counts = {s: history.count(incumbent, s) for s in settings}
        least = min(counts.values())
        run(incumbent, rng.choice([s for s in settings if counts[s] == least]))

        n_next = 1
        while not budget.exhausted:
            missing = [
                s for s in settings
                if history.count(incumbent, s) > 0 and history.count(challenger, s) == 0
            ]
            to_run = rng.sample(missing, min(n_next, len(missing)))
            for s in to_run:
                if budget.exhausted:
                    break
                run(challenger, s)
            common = [
                s for s in settings
                if history.count(challenger, s) > 0 and history.count(incumbent, s) > 0
            ]
            if not common:
                break
            missing = [
                s for s in settings
                if history.count(incumbent, s) > 0 and history.count(challenger, s) == 0
            ]
            challenger_mean = history.mean_over(challenger, common)
            incumbent_mean = history.mean_over(incumbent, common)
            if challenger_mean < incumbent_mean:
                break
            if not missing:
                if challenger_mean > incumbent_mean:  # exact tie keeps the incumbent
                    incumbent = challenger
                    if trajectory is not None:
                        trajectory.append(challenger)
                break
            n_next = min(2 * n_next, len(settings))

        if budget.used - spent_at_entry >= intensify_cap and i >= 2:
            break
    return incumbent


@dataclass
class SmboResult:
    incumbent: StrategyConfig
    history: RunHistory
    iterations: int
    sessions_used: int
    trajectory: list[StrategyConfig] = field(default_factory=list)


def smbo(
    space: ConfigurationSpace,
    settings: Sequence[str],
    metric: Metric,
    budget: int,
    seed: int,
    *,
    setting_features: dict[str, np.ndarray] | None = None,
    challenger_count: int = 10,
    intensify_cap: int | None = None,
    initial_history: RunHistory | None = None,
    marginal_sample_size: int = 10,
) -> SmboResult:
    """Optimize the strategy configuration over ``settings`` with a session budget.

    ``metric(theta, setting_id, seed)`` must return the observed utility in
    [0, 1]. Fully deterministic for a fixed seed.
    """
    if not settings:
        raise ValueError("need at least one setting")
    if budget < 1:
        raise ValueError("budget too small for initialization")
    rng = random.Random(derive_seed(seed, "smbo"))
    history = initial_history if initial_history is not None else RunHistory()
    session_budget = SessionBudget(budget)
    if intensify_cap is None:
        intensify_cap = max(10, budget // 10)

    def run(theta: StrategyConfig, setting_id: str) -> None:
        run_seed = derive_seed(seed, "run", history.next_ordinal)
        utility = metric(theta, setting_id, run_seed)
        history.add(
            RunRecord(theta=theta, setting_id=setting_id, utility=float(utility),
                      seed=run_seed, ordinal=history.next_ordinal)
        )
        session_budget.spend()

    feature_sample = None
    if setting_features is not None:
        sample_ids = rng.sample(list(settings), min(marginal_sample_size, len(settings)))
        feature_sample = np.stack([setting_features[s] for s in sample_ids])

    incumbent = space.default()
    run(incumbent, rng.choice(list(settings)))
    trajectory = [incumbent]

    iterations = 0
    while not session_budget.exhausted:
        iterations += 1
        model = fit_surrogate(
            space, history, setting_features, derive_seed(seed, "forest", iterations), feature_sample
        )
        challengers = select_configurations(model, incumbent, space, challenger_count, rng)
        incumbent = intensify(
            challengers, incumbent, history, settings, run, rng, session_budget, intensify_cap,
            trajectory,
        )
    return SmboResult(
        incumbent=incumbent,
        history=history,
        iterations=iterations,
        sessions_used=session_budget.used,
        trajectory=trajectory,
    )
