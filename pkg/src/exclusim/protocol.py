"""Message types and the two ledger protocols (continuous and periodic).

Agents are numbered 1..n. Nature hands each agent private factual updates;
agents may push ledger updates; after pushes the ledger broadcasts the
aggregation algorithm's output over everything pushed so far. An agent's
strategy is a pure function of its observed history: its own factual
deliveries, its own ledger updates, and every broadcast, in run order.

Simultaneity is resolved by polling agents in fixed ascending order. In the
continuous protocol a single nature element opens an activity loop: agents are
polled repeatedly, each accepted update is broadcast immediately, and an
anti-flooding guard suppresses an agent once it authored the last `ell`
consecutive ledger updates (the guard models how many consecutive identities
one party controls). The periodic protocol delivers a round's factual updates,
polls every agent exactly once, then broadcasts exactly once per round; `ell`
plays no role there.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, Union

from .algorithms import (
    Algorithm,
    AlgorithmOutput,
    NoOutputError,
    NotEnoughPointsError,
    NullOutput,
    UpdatePayload,
)

DEFAULT_SAFETY_CAP = 10_000
SAFETY_CAP_ENV = "EXCLUSIM_SAFETY_CAP"


class InputError(ValueError):
    """A nature input or engine argument violates the protocol's rules."""


class SafetyCapExceededError(RuntimeError):
    """A single nature element kept the activity loop alive beyond the cap."""


# =============================================================================
# Messages, nature inputs, runs
# =============================================================================


@dataclass(frozen=True)
class FactualDelivery:
    agent: int
    payload: UpdatePayload


@dataclass(frozen=True)
class LedgerUpdate:
    agent: int
    payload: UpdatePayload


@dataclass(frozen=True)
class OutputBroadcast:
    output: AlgorithmOutput


Message = Union[FactualDelivery, LedgerUpdate, OutputBroadcast]

KIND_FACTUAL = "factual"
KIND_LEDGER = "ledger"
KIND_BROADCAST = "broadcast"


@dataclass(frozen=True)
class NatureElement:
    """One element of the nature input: agent, payload, and (periodic) round."""

    agent: int
    payload: UpdatePayload
    round: Optional[int] = None


NatureInput = tuple[NatureElement, ...]


@dataclass(frozen=True)
class Run:
    """A full protocol transcript."""

    protocol: str  # "continuous" | "periodic"
    agent_count: int
    messages: tuple[Message, ...]
    ell: Optional[int] = None

    def broadcasts(self) -> tuple[AlgorithmOutput, ...]:
        return tuple(m.output for m in self.messages if isinstance(m, OutputBroadcast))

    def final_output(self) -> Optional[AlgorithmOutput]:
        outs = self.broadcasts()
        return outs[-1] if outs else None


def extract(run: Run, kind: str, agent: Optional[int] = None) -> tuple[UpdatePayload, ...]:
    """The ordered payload subsequence of one message kind, optionally one agent's."""
    if kind == KIND_LEDGER:
        wanted = LedgerUpdate
    elif kind == KIND_FACTUAL:
        wanted = FactualDelivery
    else:
        raise InputError(f"extract kind must be '{KIND_LEDGER}' or '{KIND_FACTUAL}'")
    return tuple(
        m.payload
        for m in run.messages
        if isinstance(m, wanted) and (agent is None or m.agent == agent)
    )


# =============================================================================
# Observed histories and strategies
# =============================================================================


@dataclass(frozen=True)
class ObservedHistory:
    """What a single agent has seen so far, in run order."""

    agent: int
    items: tuple[Message, ...]

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, index) -> Union[Message, "ObservedHistory"]:
        if isinstance(index, slice):
            return ObservedHistory(self.agent, self.items[index])
        return self.items[index]

    def last(self) -> Optional[Message]:
        return self.items[-1] if self.items else None

    def broadcasts(self) -> tuple[AlgorithmOutput, ...]:
        return tuple(m.output for m in self.items if isinstance(m, OutputBroadcast))

    def last_broadcast(self) -> Optional[AlgorithmOutput]:
        for item in reversed(self.items):
            if isinstance(item, OutputBroadcast):
                return item.output
        return None

    def own_factuals(self) -> tuple[UpdatePayload, ...]:
        return tuple(m.payload for m in self.items if isinstance(m, FactualDelivery))

    def own_ledger_updates(self) -> tuple[UpdatePayload, ...]:
        return tuple(m.payload for m in self.items if isinstance(m, LedgerUpdate))


Strategy = Callable[[ObservedHistory], Optional[UpdatePayload]]


def observed_history(run: Run, agent: int, upto: Optional[int] = None) -> ObservedHistory:
    """Project a run onto one agent's view (optionally only the first `upto` messages)."""
    messages = run.messages if upto is None else run.messages[:upto]
    items = tuple(
        m
        for m in messages
        if isinstance(m, OutputBroadcast)
        or (isinstance(m, (FactualDelivery, LedgerUpdate)) and m.agent == agent)
    )
    return ObservedHistory(agent, items)


def truthful_strategy(obs: ObservedHistory) -> Optional[UpdatePayload]:
    """Echo a factual update onto the ledger the moment it arrives; otherwise stay silent."""
    last = obs.last()
    if isinstance(last, FactualDelivery):
        return last.payload
    return None


# =============================================================================
# Input validation
# =============================================================================


def _validate_agents(elements: Sequence[NatureElement], agent_count: int) -> None:
    for el in elements:
        if not 1 <= el.agent <= agent_count:
            raise InputError(f"agent {el.agent} outside 1..{agent_count}")


def validate_continuous_input(elements: Sequence[NatureElement], agent_count: int) -> None:
    _validate_agents(elements, agent_count)
    for el in elements:
        if el.round is not None:
            raise InputError("continuous nature elements must not carry rounds")


def validate_periodic_input(elements: Sequence[NatureElement], agent_count: int) -> None:
    _validate_agents(elements, agent_count)
    seen: set[tuple[int, int]] = set()
    previous = None
    for el in elements:
        if el.round is None or el.round < 1:
            raise InputError("periodic nature elements need a positive round")
        if previous is not None and el.round < previous:
            raise InputError("periodic rounds must be non-decreasing")
        previous = el.round
        key = (el.agent, el.round)
        if key in seen:
            raise InputError(f"agent {el.agent} has two elements in round {el.round}")
        seen.add(key)
    if elements and elements[0].round != 1:
        raise InputError("periodic inputs start at round 1")


# =============================================================================
# Engines
# =============================================================================


def _safety_cap(explicit: Optional[int]) -> int:
    if explicit is not None:
        return explicit
    raw = os.environ.get(SAFETY_CAP_ENV)
    if raw is not None:
        try:
            value = int(raw)
        except ValueError as exc:
            raise InputError(f"{SAFETY_CAP_ENV} must be an integer, got {raw!r}") from exc
        if value < 1:
            raise InputError(f"{SAFETY_CAP_ENV} must be positive")
        return value
    return DEFAULT_SAFETY_CAP


def _compute_or_null(algorithm: Algorithm, ledger: Sequence[UpdatePayload]) -> AlgorithmOutput:
    # A broadcast can come due before the aggregation is well defined (no
    # updates yet, or fewer distinct points than centers); it then carries
    # the Null output rather than aborting the run.
    try:
        return algorithm.compute(tuple(ledger))
    except (NoOutputError, NotEnoughPointsError):
        return NullOutput()


class _Views:
    """Incrementally maintained per-agent observed histories."""

    def __init__(self, agent_count: int):
        self.items: list[list[Message]] = [[] for _ in range(agent_count + 1)]

    def deliver(self, message: Message, agent_count: int) -> None:
        if isinstance(message, OutputBroadcast):
            for a in range(1, agent_count + 1):
                self.items[a].append(message)
        else:
            self.items[message.agent].append(message)

    def snapshot(self, agent: int) -> ObservedHistory:
        return ObservedHistory(agent, tuple(self.items[agent]))


def run_continuous(
    ninput: Sequence[NatureElement],
    strategies: Mapping[int, Strategy],
    algorithm: Algorithm,
    ell: int,
    agent_count: int,
    safety_cap: Optional[int] = None,
) -> Run:
    """Execute the continuous protocol and return the full transcript."""
    if ell < 1:
        raise InputError("ell must be at least 1")
    if agent_count < 1:
        raise InputError("need at least one agent")
    validate_continuous_input(ninput, agent_count)
    cap = _safety_cap(safety_cap)

    messages: list[Message] = []
    views = _Views(agent_count)
    ledger: list[UpdatePayload] = []
    ledger_authors: list[int] = []

    def post(message: Message) -> None:
        messages.append(message)
        views.deliver(message, agent_count)

    for element in ninput:
        post(FactualDelivery(element.agent, element.payload))
        active = True
        passes = 0
        while active:
            passes += 1
            if passes > cap:
                raise SafetyCapExceededError(
                    f"activity loop exceeded {cap} polling passes for one nature element"
                )
            active = False
            for agent in range(1, agent_count + 1):
                strategy = strategies.get(agent, truthful_strategy)
                wish = strategy(views.snapshot(agent))
                if wish is None:
                    continue
                if len(ledger_authors) >= ell and all(
                    author == agent for author in ledger_authors[-ell:]
                ):
                    # Guard: this agent wrote the last `ell` updates. The wish
                    # is dropped and does not keep the loop alive.
                    continue
                ledger.append(wish)
                ledger_authors.append(agent)
                post(LedgerUpdate(agent, wish))
                post(OutputBroadcast(_compute_or_null(algorithm, ledger)))
                active = True

    return Run("continuous", agent_count, tuple(messages), ell=ell)


def run_periodic(
    ninput: Sequence[NatureElement],
    strategies: Mapping[int, Strategy],
    algorithm: Algorithm,
    agent_count: int,
) -> Run:
    """Execute the periodic protocol: per round, deliver, poll once each, broadcast once."""
    if agent_count < 1:
        raise InputError("need at least one agent")
    validate_periodic_input(ninput, agent_count)

    messages: list[Message] = []
    views = _Views(agent_count)
    ledger: list[UpdatePayload] = []

    def post(message: Message) -> None:
        messages.append(message)
        views.deliver(message, agent_count)

    last_round = max((el.round for el in ninput), default=0)
    for round_no in range(1, last_round + 1):
        for element in ninput:
            if element.round == round_no:
                post(FactualDelivery(element.agent, element.payload))
        for agent in range(1, agent_count + 1):
            strategy = strategies.get(agent, truthful_strategy)
            wish = strategy(views.snapshot(agent))
            if wish is not None:
                ledger.append(wish)
                post(LedgerUpdate(agent, wish))
        post(OutputBroadcast(_compute_or_null(algorithm, ledger)))

    return Run("periodic", agent_count, tuple(messages), ell=None)


def run_protocol(
    protocol: str,
    ninput: Sequence[NatureElement],
    strategies: Mapping[int, Strategy],
    algorithm: Algorithm,
    agent_count: int,
    ell: Optional[int] = None,
    safety_cap: Optional[int] = None,
) -> Run:
    if protocol == "continuous":
        if ell is None:
            raise InputError("continuous runs need ell")
        return run_continuous(ninput, strategies, algorithm, ell, agent_count, safety_cap)
    if protocol == "periodic":
        return run_periodic(ninput, strategies, algorithm, agent_count)
    raise InputError(f"unknown protocol {protocol!r}")


# =============================================================================
# Transcript invariants
# =============================================================================


def ell_guard_respected(run: Run) -> bool:
    """No agent authored more than `ell` consecutive ledger updates."""
    if run.protocol != "continuous" or run.ell is None:
        return True
    streak_agent = None
    streak = 0
    for message in run.messages:
        if not isinstance(message, LedgerUpdate):
            continue
        if message.agent == streak_agent:
            streak += 1
        else:
            streak_agent, streak = message.agent, 1
        if streak > run.ell:
            return False
    return True


def broadcast_pairing_ok(run: Run) -> bool:
    """Continuous: every ledger update is immediately followed by one broadcast."""
    if run.protocol != "continuous":
        return True
    for index, message in enumerate(run.messages):
        if isinstance(message, LedgerUpdate):
            nxt = run.messages[index + 1] if index + 1 < len(run.messages) else None
            if not isinstance(nxt, OutputBroadcast):
                return False
        if isinstance(message, OutputBroadcast):
            prev = run.messages[index - 1] if index > 0 else None
            if not isinstance(prev, LedgerUpdate):
                return False
    return True


def replay_matches(run: Run, strategies: Mapping[int, Strategy]) -> bool:
    """Check a transcript is reproducible from the strategies' observed histories.

    Re-derives each agent's view immediately before every ledger update it
    authored and re-invokes the strategy; a pure strategy must return the
    very payload recorded in the transcript.
    """
    for index, message in enumerate(run.messages):
        if not isinstance(message, LedgerUpdate):
            continue
        strategy = strategies.get(message.agent, truthful_strategy)
        obs = observed_history(run, message.agent, upto=index)
        if strategy(obs) != message.payload:
            return False
    return True
