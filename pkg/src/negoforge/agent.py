"""The configurable negotiation strategy: acceptance, concession, GA bid search.

Thirteen parameters shape the behaviour: four acceptance parameters, three
bidding parameters, and six controlling the genetic search over the outcome
space. The wire format uses the short parameter names (``alpha`` ...
``R_e``); in code each field is named for what it does.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .problems import Outcome, ProblemView
from .protocol import Action


class WindowMode(Enum):
    """Late-acceptance threshold over the trailing window of opponent offers."""

    MAX = "MAX_W"
    AVG = "AVG_W"


class ConfigurationError(ValueError):
    """One or more strategy parameters fall outside their domain."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class StrategyConfig:
    """One point in the 13-parameter strategy space."""

    scale_factor: float = 1.05        # alpha, [1, 1.1]
    utility_gap: float = 0.1          # beta, (0, 0.2]
    accept_time: float = 0.95         # t_acc, [0.9, 1]
    window_mode: WindowMode = WindowMode.MAX   # gamma
    tradeoff: float = 0.5             # delta, [0, 1]
    concession_exponent: float = 1.0  # e, (0, 2]
    offer_rank: int = 1               # n, {1..5}
    population_size: int = 200        # N_p, [50, 400]
    tournament_size: int = 5          # N_t, [1, 10]
    generations: int = 3              # E, [1, 5]
    crossover_rate: float = 0.3       # R_c, [0.1, 0.5]
    mutation_rate: float = 0.1        # R_m, [0, 0.2]
    elitism_rate: float = 0.1         # R_e, [0, 0.2]

    def to_dict(self) -> dict:
        return {
            "alpha": self.scale_factor,
            "beta": self.utility_gap,
            "t_acc": self.accept_time,
            "gamma": self.window_mode.value,
            "delta": self.tradeoff,
            "e": self.concession_exponent,
            "n": self.offer_rank,
            "N_p": self.population_size,
            "N_t": self.tournament_size,
            "E": self.generations,
            "R_c": self.crossover_rate,
            "R_m": self.mutation_rate,
            "R_e": self.elitism_rate,
        }


@dataclass(frozen=True)
class FloatParam:
    key: str
    attr: str
    low: float
    high: float
    low_exclusive: bool = False

    def contains(self, value: float) -> bool:
        if self.low_exclusive and value <= self.low:
            return False
        return self.low <= value <= self.high

    def domain_text(self) -> str:
        left = "(" if self.low_exclusive else "["
        return f"{left}{self.low}, {self.high}]"

    def sample(self, rng: random.Random) -> float:
        # high - span*random() lands in (low, high], honouring exclusive lows
        return self.high - (self.high - self.low) * rng.random()

    def neighbor(self, value: float, rng: random.Random) -> float:
        span = self.high - self.low
        moved = value + rng.gauss(0.0, 0.2 * span)
        moved = min(max(moved, self.low), self.high)
        if self.low_exclusive and moved <= self.low:
            moved = self.low + 0.01 * span
        return moved


@dataclass(frozen=True)
class IntParam:
    key: str
    attr: str
    low: int
    high: int

    def contains(self, value) -> bool:
        return isinstance(value, int) and self.low <= value <= self.high

    def domain_text(self) -> str:
        return f"[{self.low}, {self.high}] integer"

    def sample(self, rng: random.Random) -> int:
        return rng.randint(self.low, self.high)

    def neighbor(self, value: int, rng: random.Random) -> int:
        step = max(1, round(0.2 * (self.high - self.low)))
        moved = value + rng.randint(-step, step)
        return min(max(moved, self.low), self.high)


@dataclass(frozen=True)
class CatParam:
    key: str
    attr: str
    choices: tuple[str, ...]

    def contains(self, value) -> bool:
        return value in self.choices

    def domain_text(self) -> str:
        return "{" + ", ".join(self.choices) + "}"

    def sample(self, rng: random.Random) -> str:
        return rng.choice(self.choices)

    def neighbor(self, value: str, rng: random.Random) -> str:
        others = [c for c in self.choices if c != value]
        return rng.choice(others) if others else value


PARAMETERS = (
    FloatParam("alpha", "scale_factor", 1.0, 1.1),
    FloatParam("beta", "utility_gap", 0.0, 0.2, low_exclusive=True),
    FloatParam("t_acc", "accept_time", 0.9, 1.0),
    CatParam("gamma", "window_mode", (WindowMode.MAX.value, WindowMode.AVG.value)),
    FloatParam("delta", "tradeoff", 0.0, 1.0),
    FloatParam("e", "concession_exponent", 0.0, 2.0, low_exclusive=True),
    IntParam("n", "offer_rank", 1, 5),
    IntParam("N_p", "population_size", 50, 400),
    IntParam("N_t", "tournament_size", 1, 10),
    IntParam("E", "generations", 1, 5),
    FloatParam("R_c", "crossover_rate", 0.1, 0.5),
    FloatParam("R_m", "mutation_rate", 0.0, 0.2),
    FloatParam("R_e", "elitism_rate", 0.0, 0.2),
)

_BY_KEY = {p.key: p for p in PARAMETERS}


def validate_configuration(raw: dict) -> StrategyConfig:
    """Build a StrategyConfig from wire-format values, reporting every bad field."""
    problems = []
    kwargs = {}
    for param in PARAMETERS:
        if param.key not in raw:
            problems.append(f"{param.key}: missing")
            continue
        value = raw[param.key]
        if isinstance(param, IntParam) and isinstance(value, float) and value.is_integer():
            value = int(value)
        if not param.contains(value):
            problems.append(f"{param.key}={value!r} outside {param.domain_text()}")
            continue
        kwargs[param.attr] = WindowMode(value) if isinstance(param, CatParam) else value
    unknown = set(raw) - set(_BY_KEY)
    for key in sorted(unknown):
        problems.append(f"{key}: unknown parameter")
    if problems:
        raise ConfigurationError(problems)
    return StrategyConfig(**kwargs)


class ConfigurationSpace:
    """Sampling, perturbation, and numeric encoding of the strategy space."""

    parameters = PARAMETERS

    def default(self) -> StrategyConfig:
        return StrategyConfig()

    def sample(self, rng: random.Random) -> StrategyConfig:
        raw = {p.key: p.sample(rng) for p in PARAMETERS}
        return validate_configuration(raw)

    def neighbor(self, config: StrategyConfig, rng: random.Random) -> StrategyConfig:
        """Perturb one uniformly chosen parameter."""
        raw = config.to_dict()
        param = rng.choice(PARAMETERS)
        raw[param.key] = param.neighbor(raw[param.key], rng)
        return validate_configuration(raw)

    def encode(self, config: StrategyConfig) -> np.ndarray:
        """Numeric vector for surrogate models; categoricals one-hot."""
        raw = config.to_dict()
        columns: list[float] = []
        for param in PARAMETERS:
            if isinstance(param, CatParam):
                columns.extend(1.0 if raw[param.key] == c else 0.0 for c in param.choices)
            else:
                columns.append(float(raw[param.key]))
        return np.asarray(columns, dtype=float)

    @property
    def encoded_dim(self) -> int:
        return sum(len(p.choices) if isinstance(p, CatParam) else 1 for p in PARAMETERS)


STRATEGY_SPACE = ConfigurationSpace()


def target_utility(t: float, config: StrategyConfig) -> float:
    """Concession curve 1 - t^(1/e): 1 at t=0, 0 at t=1, non-increasing."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    if t == 0.0:
        return 1.0
    return 1.0 - t ** (1.0 / config.concession_exponent)


def should_accept(
    config: StrategyConfig,
    t: float,
    incoming_utility: float,
    planned_utility: float,
    window_utilities: list[float],
) -> bool:
    """Accept when the scaled incoming offer beats our planned bid, or late in
    the session when it clears the trailing-window threshold."""
    if config.scale_factor * incoming_utility + config.utility_gap >= planned_utility:
        return True
    if t >= config.accept_time and window_utilities:
        if config.window_mode is WindowMode.MAX:
            threshold = max(window_utilities)
        else:
            threshold = sum(window_utilities) / len(window_utilities)
        return incoming_utility >= threshold
    return False


class FrequencyOpponentModel:
    """Opponent utility estimate from per-issue value frequencies.

    With no observations the estimate is a flat 1.0. Issue weights derive
    from how concentrated the opponent's choices are: low count entropy on
    an issue reads as high importance.
    """

    def __init__(self, shape: tuple[int, ...]):
        self.counts = [np.zeros(n, dtype=float) for n in shape]
        self.n_observations = 0

    def observe(self, outcome: Outcome) -> None:
        for issue_counts, idx in zip(self.counts, outcome):
            issue_counts[idx] += 1.0
        self.n_observations += 1

    def issue_weights(self) -> np.ndarray:
        raw = []
        for issue_counts in self.counts:
            total = issue_counts.sum()
            n_values = len(issue_counts)
            if total == 0 or n_values < 2:
                raw.append(0.0)
                continue
            p = issue_counts[issue_counts > 0] / total
            entropy = float(-(p * np.log(p)).sum()) / math.log(n_values)
            raw.append(1.0 - entropy)
        weights = np.asarray(raw, dtype=float)
        if weights.sum() <= 0.0:
            return np.full(len(self.counts), 1.0 / len(self.counts))
        return weights / weights.sum()

    def _ratio_tables(self) -> list[np.ndarray]:
        tables = []
        for issue_counts in self.counts:
            peak = issue_counts.max()
            tables.append(issue_counts / peak if peak > 0 else np.ones_like(issue_counts))
        return tables

    def estimate(self, outcome: Outcome) -> float:
        if self.n_observations == 0:
            return 1.0
        weights = self.issue_weights()
        tables = self._ratio_tables()
        return float(sum(w * table[idx] for w, table, idx in zip(weights, tables, outcome)))

    def estimate_of(self, assignments: np.ndarray) -> np.ndarray:
        if self.n_observations == 0:
            return np.ones(len(assignments), dtype=float)
        weights = self.issue_weights()
        tables = self._ratio_tables()
        total = np.zeros(len(assignments), dtype=float)
        for i, (w, table) in enumerate(zip(weights, tables)):
            total += w * table[assignments[:, i]]
        return total


@dataclass
class SearchResult:
    """GA output: final population ranked by fitness, plus per-generation bests."""

    ranked: list[tuple[Outcome, float]]          # fitness descending
    best_per_generation: list[float]             # initial population first


def ga_search(
    view: ProblemView,
    config: StrategyConfig,
    opponent_model: FrequencyOpponentModel,
    target: float,
    rng: np.random.Generator,
) -> SearchResult:
    """Evolve a population of outcomes toward fitness
    tradeoff*(1 - |u - target|) + (1 - tradeoff)*estimated opponent utility."""
    shape = np.asarray(view.shape)
    n_issues = len(shape)
    pop_size = config.population_size

    def fitness_of(pop: np.ndarray) -> np.ndarray:
        own = view.utilities_of(pop)
        estimated = opponent_model.estimate_of(pop)
        return config.tradeoff * (1.0 - np.abs(own - target)) + (1.0 - config.tradeoff) * estimated

    population = rng.integers(0, shape, size=(pop_size, n_issues))
    fitness = fitness_of(population)
    best_per_generation = [float(fitness.max())]

    n_elite = 0
    if config.elitism_rate > 0.0:
        n_elite = min(pop_size, max(1, round(config.elitism_rate * pop_size)))

    for _ in range(config.generations):
        order = np.argsort(-fitness, kind="stable")
        elite = population[order[:n_elite]]
        n_children = pop_size - n_elite

        # tournament selection: two parents per child
        entrants = rng.integers(0, pop_size, size=(2 * n_children, config.tournament_size))
        winners = entrants[np.arange(2 * n_children), np.argmax(fitness[entrants], axis=1)]
        parent_a = population[winners[:n_children]]
        parent_b = population[winners[n_children:]]

        swap = rng.random((n_children, n_issues)) < config.crossover_rate
        children = np.where(swap, parent_b, parent_a)
        mutate = rng.random((n_children, n_issues)) < config.mutation_rate
        if mutate.any():
            replacements = rng.integers(0, shape, size=(n_children, n_issues))
            children = np.where(mutate, replacements, children)

        population = np.vstack([elite, children])
        fitness = fitness_of(population)
        best_per_generation.append(float(fitness.max()))

    order = np.argsort(-fitness, kind="stable")
    ranked = [(tuple(int(v) for v in population[i]), float(fitness[i])) for i in order]
    return SearchResult(ranked=ranked, best_per_generation=best_per_generation)


RETARGET_SLACK = 0.05


def choose_bid(
    ranked: list[tuple[Outcome, float]],
    view: ProblemView,
    config: StrategyConfig,
    target: float,
) -> Outcome:
    """Pick the rank-n distinct candidate whose own utility clears target - slack."""
    floor = target - RETARGET_SLACK
    seen: set[Outcome] = set()
    distinct: list[Outcome] = []
    for outcome, _ in ranked:
        if outcome not in seen:
            seen.add(outcome)
            distinct.append(outcome)
    eligible = [o for o in distinct if view.utility(o) >= floor]
    if eligible:
        return eligible[min(config.offer_rank, len(eligible)) - 1]
    return max(distinct, key=view.utility)


class DynamicAgent:
    """Session agent driven by a StrategyConfig; deterministic given its seed."""

    def __init__(self, config: StrategyConfig):
        self.config = config
        self.view: ProblemView | None = None
        self.opponent_model: FrequencyOpponentModel | None = None

    def begin(self, view: ProblemView, seed: int, max_rounds: int) -> None:
        self.view = view
        self.rng = np.random.default_rng(seed)
        self.opponent_model = FrequencyOpponentModel(view.shape)
        self.opponent_offers: list[tuple[float, Outcome]] = []
        self.incoming: Outcome | None = None

    def observe(self, action: Action, t: float) -> None:
        if action.outcome is not None:
            self.opponent_offers.append((t, action.outcome))
            self.opponent_model.observe(action.outcome)
            self.incoming = action.outcome

    def act(self, t: float) -> Action:
        target = target_utility(t, self.config)
        result = ga_search(self.view, self.config, self.opponent_model, target, self.rng)
        planned = choose_bid(result.ranked, self.view, self.config, target)
        if self.incoming is not None:
            window_start = 2.0 * t - 1.0
            window = [
                self.view.utility(outcome)
                for offer_t, outcome in self.opponent_offers
                if offer_t >= window_start
            ]
            incoming_utility = self.view.utility(self.incoming)
            if should_accept(self.config, t, incoming_utility, self.view.utility(planned), window):
                return Action.accept()
        return Action.offer(planned)
