"""Bilateral alternating-offers sessions with a round-based normalized deadline.

Each action consumes one round; the clock value handed to agents is
``round / max_rounds`` in [0, 1). The session aborts without agreement when
the clock would reach 1. Agent crashes and malformed actions are protocol
violations: the session scores as a failure attributed to the violator
instead of raising, so tournaments survive broken agents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, runtime_checkable

from .problems import BargainingProblem, InvalidOutcomeError, Outcome, ProblemView, check_outcome
from .seeding import derive_seed


class ActionKind(Enum):
    OFFER = "offer"
    ACCEPT = "accept"
    END = "end"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    outcome: Outcome | None = None

    @staticmethod
    def offer(outcome: Outcome) -> "Action":
        return Action(ActionKind.OFFER, outcome)

    @staticmethod
    def accept() -> "Action":
        return Action(ActionKind.ACCEPT)

    @staticmethod
    def end() -> "Action":
        return Action(ActionKind.END)


@runtime_checkable
class NegotiatingAgent(Protocol):
    """Contract session agents implement.

    ``begin`` is called once with the agent's own side view and a derived
    sub-seed; ``observe`` reports each opponent action; ``act`` must return
    the agent's next action for clock value ``t``.
    """

    def begin(self, view: ProblemView, seed: int, max_rounds: int) -> None: ...

    def observe(self, action: Action, t: float) -> None: ...

    def act(self, t: float) -> Action: ...


@dataclass(frozen=True)
class TraceEntry:
    actor: str  # "A" or "B"
    action: Action
    t: float


@dataclass
class SessionResult:
    agreed: bool
    agreement: Outcome | None
    t_agree: float  # 1.0 on failure
    utility_a: float
    utility_b: float
    trace: list[TraceEntry]
    violator: str | None = None  # side that broke the protocol, if any

    @property
    def utilities(self) -> tuple[float, float]:
        return (self.utility_a, self.utility_b)

    def utility_for(self, side: str) -> float:
        return self.utility_a if side == "A" else self.utility_b

    def offers_by(self, side: str) -> list[tuple[float, Outcome]]:
        return [
            (entry.t, entry.action.outcome)
            for entry in self.trace
            if entry.actor == side and entry.action.kind is ActionKind.OFFER
        ]


class ProtocolViolation(Exception):
    def __init__(self, actor: str, reason: str):
        super().__init__(f"{actor}: {reason}")
        self.actor = actor
        self.reason = reason


def run_session(
    agent_a: NegotiatingAgent,
    agent_b: NegotiatingAgent,
    problem: BargainingProblem,
    max_rounds: int,
    seed: int,
) -> SessionResult:
    """Run one session; agent A moves first. Deterministic for a fixed seed."""
    if max_rounds < 2:
        raise ValueError("max_rounds must be >= 2")
    agent_a.begin(problem.view("A"), derive_seed(seed, "A"), max_rounds)
    agent_b.begin(problem.view("B"), derive_seed(seed, "B"), max_rounds)

    trace: list[TraceEntry] = []
    actors = (("A", agent_a, agent_b), ("B", agent_b, agent_a))
    standing_offer: Outcome | None = None

    def failure(violator: str | None = None) -> SessionResult:
        return SessionResult(False, None, 1.0, 0.0, 0.0, trace, violator)

    for round_no in range(max_rounds):
        t = round_no / max_rounds
        name, mover, other = actors[round_no % 2]
        try:
            action = mover.act(t)
            if not isinstance(action, Action):
                raise ProtocolViolation(name, "agent returned a non-action")
            if action.kind is ActionKind.OFFER:
                if action.outcome is None:
                    raise ProtocolViolation(name, "offer without an outcome")
                try:
                    check_outcome(problem, action.outcome)
                except InvalidOutcomeError as exc:
                    raise ProtocolViolation(name, f"malformed outcome: {exc}") from exc
            elif action.kind is ActionKind.ACCEPT and standing_offer is None:
                raise ProtocolViolation(name, "accept with no standing offer")
        except ProtocolViolation as exc:
            trace.append(TraceEntry(name, Action.end(), t))
            return failure(violator=exc.actor)
        except Exception:
            # agent crash counts against the agent, not the tournament
            trace.append(TraceEntry(name, Action.end(), t))
            return failure(violator=name)

        trace.append(TraceEntry(name, action, t))

        if action.kind is ActionKind.ACCEPT:
            agreement = standing_offer
            return SessionResult(
                True,
                agreement,
                t,
                problem.view("A").utility(agreement),
                problem.view("B").utility(agreement),
                trace,
            )
        if action.kind is ActionKind.END:
            return failure()

        standing_offer = action.outcome
        try:
            other.observe(action, t)
        except Exception:
            trace.append(TraceEntry("B" if name == "A" else "A", Action.end(), t))
            return failure(violator="B" if name == "A" else "A")

    return failure()


def trace_to_jsonl(result: SessionResult) -> str:
    """One JSON object per action: {actor, kind, outcome?, t}."""
    lines = []
    for entry in result.trace:
        record: dict = {"actor": entry.actor, "kind": entry.action.kind.value, "t": entry.t}
        if entry.action.outcome is not None:
            record["outcome"] = list(entry.action.outcome)
        lines.append(json.dumps(record, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")
