"""Scripted baseline opponents, split into train and test rosters.

Five families span the behaviour space: time-dependent conceders (fast and
slow), a non-conceder, a noisy thresholded bidder, a concession mirrorer,
and a frequency-fitting joint-gain seeker. The test split holds parameter
values, and one whole family, that the train split never sees.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .agent import FrequencyOpponentModel
from .problems import Outcome, ProblemView
from .protocol import Action
from .seeding import derive_seed


class OpponentSpecError(ValueError):
    pass


@dataclass(frozen=True)
class OpponentSpec:
    id: str
    family: str
    split: str  # "train" or "test"
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"id": self.id, "family": self.family, "split": self.split, "params": dict(self.params)}


def _time_dependent_target(t: float, exponent: float, floor: float) -> float:
    return floor + (1.0 - floor) * (1.0 - t ** (1.0 / exponent))


class TimeDependentOpponent:
    """Concedes along floor + (1-floor)(1 - t^(1/e)); accepts anything at or above target."""

    def __init__(self, exponent: float, floor: float):
        if exponent <= 0:
            raise OpponentSpecError("concession exponent must be positive")
        self.exponent = exponent
        self.floor = floor

    def begin(self, view: ProblemView, seed: int, max_rounds: int) -> None:
        self.view = view
        self.incoming: Outcome | None = None

    def observe(self, action: Action, t: float) -> None:
        if action.outcome is not None:
            self.incoming = action.outcome

    def target(self, t: float) -> float:
        return _time_dependent_target(t, self.exponent, self.floor)

    def act(self, t: float) -> Action:
        target = self.target(t)
        if self.incoming is not None and self.view.utility(self.incoming) >= target:
            return Action.accept()
        return Action.offer(self.view.cheapest_outcome_at_least(target))


class HardlinerOpponent:
    """Always demands its best outcome; accepts nothing less."""

    def begin(self, view: ProblemView, seed: int, max_rounds: int) -> None:
        self.view = view
        self.best = view.best_outcome()
        self.threshold = view.utility(self.best)
        self.incoming: Outcome | None = None

    def observe(self, action: Action, t: float) -> None:
        if action.outcome is not None:
            self.incoming = action.outcome

    def act(self, t: float) -> Action:
        if self.incoming is not None and self.view.utility(self.incoming) >= self.threshold:
            return Action.accept()
        return Action.offer(self.best)


class RandomAboveThresholdOpponent:
    """Offers uniformly among outcomes clearing a utility floor."""

    def __init__(self, floor: float, salt: int = 0):
        self.floor = floor
        self.salt = salt

    def begin(self, view: ProblemView, seed: int, max_rounds: int) -> None:
        self.view = view
        self.rng = random.Random(derive_seed(seed, "salt", self.salt))
        utils, order = view.sorted_by_utility()
        pos = int(np.searchsorted(utils, self.floor, side="left"))
        self.candidates = order[pos:]
        self.incoming: Outcome | None = None

    def observe(self, action: Action, t: float) -> None:
        if action.outcome is not None:
            self.incoming = action.outcome

    def act(self, t: float) -> Action:
        if self.incoming is not None and self.view.utility(self.incoming) >= self.floor:
            return Action.accept()
        if len(self.candidates) == 0:
            return Action.offer(self.view.best_outcome())
        flat = int(self.candidates[self.rng.randrange(len(self.candidates))])
        return Action.offer(self.view.outcome_at(flat))


class RelativeTitForTatOpponent:
    """Mirrors the opponent's last concession step, measured in own utility."""

    def __init__(self, floor: float):
        self.floor = floor

    def begin(self, view: ProblemView, seed: int, max_rounds: int) -> None:
        self.view = view
        self.current_target = 1.0
        self.previous_offer_utility: float | None = None
        self.incoming: Outcome | None = None

    def observe(self, action: Action, t: float) -> None:
        if action.outcome is None:
            return
        self.incoming = action.outcome
        offered = self.view.utility(action.outcome)
        if self.previous_offer_utility is not None:
            concession = offered - self.previous_offer_utility
            self.current_target = min(1.0, max(self.floor, self.current_target - concession))
        self.previous_offer_utility = offered

    def act(self, t: float) -> Action:
        if self.incoming is not None and self.view.utility(self.incoming) >= self.current_target:
            return Action.accept()
        return Action.offer(self.view.cheapest_outcome_at_least(self.current_target))


class FrequencyFittedOpponent:
    """Time-dependent conceder that picks, among outcomes above target, the one
    its frequency model rates best for the other side."""

    SCAN_WIDTH = 64

    def __init__(self, exponent: float, floor: float):
        if exponent <= 0:
            raise OpponentSpecError("concession exponent must be positive")
        self.exponent = exponent
        self.floor = floor

    def begin(self, view: ProblemView, seed: int, max_rounds: int) -> None:
        self.view = view
        self.model = FrequencyOpponentModel(view.shape)
        self.incoming: Outcome | None = None

    def observe(self, action: Action, t: float) -> None:
        if action.outcome is not None:
            self.incoming = action.outcome
            self.model.observe(action.outcome)

    def act(self, t: float) -> Action:
        target = _time_dependent_target(t, self.exponent, self.floor)
        if self.incoming is not None and self.view.utility(self.incoming) >= target:
            return Action.accept()
        utils, order = self.view.sorted_by_utility()
        pos = int(np.searchsorted(utils, target, side="left"))
        band = order[pos : pos + self.SCAN_WIDTH]
        if len(band) == 0:
            return Action.offer(self.view.best_outcome())
        assignments = np.column_stack(np.unravel_index(band, self.view.shape))
        best = int(np.argmax(self.model.estimate_of(assignments)))
        return Action.offer(tuple(int(v) for v in assignments[best]))


FAMILIES = {
    "TimeDependent": lambda p, seed: TimeDependentOpponent(p["exponent"], p["floor"]),
    "Hardliner": lambda p, seed: HardlinerOpponent(),
    "RandomAboveThreshold": lambda p, seed: RandomAboveThresholdOpponent(p["floor"], salt=seed),
    "RelativeTitForTat": lambda p, seed: RelativeTitForTatOpponent(p["floor"]),
    "FrequencyFitted": lambda p, seed: FrequencyFittedOpponent(p["exponent"], p["floor"]),
}


def instantiate(spec: OpponentSpec, seed: int = 0):
    """Fresh per-session agent for the spec; raises for unknown families.

    ``seed`` differentiates stochastic instances; session-level randomness is
    still derived from the session seed at ``begin``.
    """
    factory = FAMILIES.get(spec.family)
    if factory is None:
        raise OpponentSpecError(f"unknown opponent family {spec.family!r}")
    try:
        return factory(spec.params, seed)
    except KeyError as exc:
        raise OpponentSpecError(f"{spec.id}: missing parameter {exc}") from exc


def default_roster() -> list[OpponentSpec]:
    """Deterministic 10-train / 8-test roster. FrequencyFitted appears only in
    the test split, and every test member uses parameter values absent from train."""

    def spec(id_, family, split, **params):
        return OpponentSpec(id=id_, family=family, split=split, params=params)

    return [
        spec("td-boulware-a", "TimeDependent", "train", exponent=0.2, floor=0.40),
        spec("td-boulware-b", "TimeDependent", "train", exponent=0.5, floor=0.50),
        spec("td-linear", "TimeDependent", "train", exponent=1.0, floor=0.30),
        spec("td-conceder-a", "TimeDependent", "train", exponent=1.5, floor=0.20),
        spec("td-conceder-b", "TimeDependent", "train", exponent=2.0, floor=0.10),
        spec("hardliner", "Hardliner", "train"),
        spec("random-60", "RandomAboveThreshold", "train", floor=0.60),
        spec("random-75", "RandomAboveThreshold", "train", floor=0.75),
        spec("tft-soft", "RelativeTitForTat", "train", floor=0.30),
        spec("tft-firm", "RelativeTitForTat", "train", floor=0.50),
        spec("freqfit-linear", "FrequencyFitted", "test", exponent=1.0, floor=0.30),
        spec("freqfit-boulware", "FrequencyFitted", "test", exponent=0.4, floor=0.45),
        spec("td-boulware-c", "TimeDependent", "test", exponent=0.35, floor=0.45),
        spec("td-linear-low", "TimeDependent", "test", exponent=1.0, floor=0.15),
        spec("td-conceder-c", "TimeDependent", "test", exponent=1.8, floor=0.25),
        spec("hardliner-2", "Hardliner", "test"),
        spec("random-68", "RandomAboveThreshold", "test", floor=0.68),
        spec("tft-mid", "RelativeTitForTat", "test", floor=0.40),
    ]


def roster_to_list(roster: list[OpponentSpec]) -> list[dict]:
    return [spec.to_dict() for spec in roster]


def roster_from_list(raw: list[dict]) -> list[OpponentSpec]:
    roster = []
    seen = set()
    for entry in raw:
        spec = OpponentSpec(
            id=entry["id"], family=entry["family"], split=entry["split"], params=dict(entry.get("params", {}))
        )
        if spec.family not in FAMILIES:
            raise OpponentSpecError(f"unknown opponent family {spec.family!r}")
        if spec.split not in ("train", "test"):
            raise OpponentSpecError(f"{spec.id}: bad split {spec.split!r}")
        if spec.id in seen:
            raise OpponentSpecError(f"duplicate opponent id {spec.id!r}")
        seen.add(spec.id)
        roster.append(spec)
    return roster
