"""Attack strategies: the sneak swap-and-repair template, probing attacks for
max and average, the triangulation probe ladder for linear regression, and the
exact inference helpers that decode what the truthful outcome would have been.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

from .algorithms import (
    AlgorithmOutput,
    CentersOutput,
    CoefficientsOutput,
    Empty,
    MomentPair,
    NullOutput,
    ParamError,
    Point,
    PointSet,
    Row,
    RowMultiset,
    Scalar,
    ScalarOutput,
    UpdatePayload,
    as_point,
    moments,
    multiset_points,
    payload_difference,
    payload_union,
)
from .numerics import RationalLike, RMatrix, rational
from .protocol import (
    KIND_FACTUAL,
    KIND_LEDGER,
    FactualDelivery,
    LedgerUpdate,
    Message,
    ObservedHistory,
    OutputBroadcast,
    Run,
    Strategy,
    extract,
    truthful_strategy,
)


class InferenceError(Exception):
    """An observed history cannot be decoded into a truthful-outcome estimate."""


def _coerce_point(value: Union[RationalLike, Sequence[RationalLike]]) -> Point:
    if isinstance(value, (tuple, list)):
        return as_point(value)
    return (rational(value),)


# =============================================================================
# Sneak attack: swap one payload, repair the ledger later
# =============================================================================


@dataclass(frozen=True)
class SneakParams:
    """Parameters of a sneak attack.

    The attack waits for the factual payload `u_cond` to arrive while the last
    broadcast equals `rho_cond`, sends `u_attack` in its place, and repairs the
    ledger with `u_resync` as soon as any later factual update lands.
    """

    u_cond: UpdatePayload
    rho_cond: AlgorithmOutput
    u_attack: UpdatePayload
    u_resync: UpdatePayload

    def __post_init__(self) -> None:
        if self.u_cond == self.u_attack:
            raise ParamError(
                "u_attack must differ from u_cond, or the swap cannot be told "
                "apart from a truthful echo"
            )

    def is_omission(self) -> bool:
        """True when the swap only withholds points and the repair restores them."""
        if not isinstance(self.u_cond, PointSet) or not isinstance(self.u_attack, PointSet):
            return False
        if not set(self.u_attack.points) <= set(self.u_cond.points):
            return False
        return self.u_resync == payload_difference(self.u_cond, self.u_attack)


def _sneak_start(items: Sequence[Message], agent: int, params: SneakParams) -> Optional[int]:
    """Index of the broadcast that completes the first swap signature, if any."""
    for t in range(len(items) - 2):
        first, second, third = items[t : t + 3]
        if (
            isinstance(first, FactualDelivery)
            and first.agent == agent
            and first.payload == params.u_cond
            and isinstance(second, LedgerUpdate)
            and second.agent == agent
            and second.payload == params.u_attack
            and isinstance(third, OutputBroadcast)
        ):
            return t + 2
    return None


def sneak_attack_started(o: ObservedHistory, params: SneakParams) -> bool:
    """Whether the swap signature (own factual, swapped update, broadcast) appeared."""
    return _sneak_start(o.items, o.agent, params) is not None


def sneak_attack_ended(o: ObservedHistory, params: SneakParams) -> bool:
    """Whether the agent has sent the repair update after the swap signature."""
    start = _sneak_start(o.items, o.agent, params)
    if start is None:
        return False
    return any(
        isinstance(item, LedgerUpdate) and item.agent == o.agent
        for item in o.items[start + 1 :]
    )


def sneak_attack(params: SneakParams) -> Strategy:
    """The three-branch swap-then-repair strategy.

    Branch one sends `u_attack` instead of the watched factual payload when the
    last broadcast equals `rho_cond`. Branch two fires at the first factual
    update after the swap, visible either as one extra broadcast or as an own
    delivery right behind the signature, and sends `u_resync` joined with the
    new own payload when there is one. Every other history is played truthfully.
    """

    def strategy(o: ObservedHistory) -> Optional[UpdatePayload]:
        start = _sneak_start(o.items, o.agent, params)
        if start is None:
            last = o.last()
            if (
                isinstance(last, FactualDelivery)
                and last.payload == params.u_cond
                and o.last_broadcast() == params.rho_cond
            ):
                return params.u_attack
            return truthful_strategy(o)
        if not sneak_attack_ended(o, params) and len(o.items) == start + 2:
            last = o.last()
            if isinstance(last, FactualDelivery):
                return payload_union(last.payload, params.u_resync)
            if isinstance(last, OutputBroadcast):
                return params.u_resync
        return truthful_strategy(o)

    return strategy


# =============================================================================
# Max: echo and overbid
# =============================================================================


def max_echo_attack() -> Strategy:
    """Suppress own scalars by re-sending the last broadcast value instead."""

    def strategy(o: ObservedHistory) -> Optional[UpdatePayload]:
        last = o.last()
        if isinstance(last, FactualDelivery):
            previous = o.last_broadcast()
            if isinstance(previous, ScalarOutput):
                return Scalar(previous.value)
        return truthful_strategy(o)

    return strategy


def max_overbid(value: RationalLike) -> Strategy:
    """Push one fixed high value whenever the ledger is live; never echo own data."""
    bid = Scalar(rational(value))

    def strategy(o: ObservedHistory) -> Optional[UpdatePayload]:
        if o.broadcasts():
            return bid
        return None

    return strategy


def max_infer(o: ObservedHistory) -> AlgorithmOutput:
    """The truthful maximum: largest value among broadcasts and own factual scalars."""
    best: Optional[Fraction] = None
    for output in o.broadcasts():
        if isinstance(output, ScalarOutput):
            best = output.value if best is None else max(best, output.value)
    for payload in o.own_factuals():
        if isinstance(payload, Scalar):
            best = payload.value if best is None else max(best, payload.value)
    if best is None:
        return NullOutput()
    return ScalarOutput(best)


# =============================================================================
# Average: the two-probe counting attack
# =============================================================================


_PROBE_ZERO = PointSet(((0,),))
_PROBE_ONE = PointSet(((1,),))


@dataclass(frozen=True)
class AverageInference:
    """Hidden totals recovered from the two probe responses."""

    others_count: int
    others_sum: Fraction
    true_average: Fraction


def _response_after_own_update(o: ObservedHistory, ordinal: int) -> Optional[Fraction]:
    """Scalar broadcast value right behind the agent's ordinal-th ledger update."""
    seen = 0
    for t, item in enumerate(o.items):
        if isinstance(item, LedgerUpdate) and item.agent == o.agent:
            if seen == ordinal:
                follower = o.items[t + 1] if t + 1 < len(o.items) else None
                if isinstance(follower, OutputBroadcast) and isinstance(
                    follower.output, ScalarOutput
                ):
                    return follower.output.value
                return None
            seen += 1
    return None


def average_double_probe() -> Strategy:
    """Withhold own data and send two counting probes instead.

    The first probe adds the value 0. When the following broadcast is nonzero
    a second 0 pins the hidden count; a zero broadcast already reveals the
    hidden sum is 0, so the second probe adds a 1 to keep the count readable.
    """

    def strategy(o: ObservedHistory) -> Optional[UpdatePayload]:
        if not o.own_factuals():
            return truthful_strategy(o)
        sent = o.own_ledger_updates()
        if not sent:
            return _PROBE_ZERO
        if len(sent) == 1:
            first = _response_after_own_update(o, 0)
            if first is None:
                return None
            return _PROBE_ZERO if first != 0 else _PROBE_ONE
        return None

    return strategy


def average_infer(
    a1: RationalLike,
    a2: RationalLike,
    own_sum: RationalLike,
    own_count: int,
) -> AverageInference:
    """Recover the hidden count and sum from the two probe responses.

    With a nonzero first response, a1 = S/(N+1) and a2 = S/(N+2) determine N
    and S directly. A zero first response means S = 0 and the second probe
    added a 1, so a2 = 1/(N+2).
    """
    first = rational(a1)
    second = rational(a2)
    if first == second:
        raise InferenceError(
            "equal probe responses cannot come from this probe schedule"
        )
    if first != 0:
        hidden_count = (first - 2 * second) / (second - first)
        hidden_sum = first * (hidden_count + 1)
    else:
        if second == 0:
            raise InferenceError("a zero response to the 1-probe is impossible")
        hidden_count = 1 / second - 2
        hidden_sum = Fraction(0)
    if hidden_count.denominator != 1 or hidden_count < 0:
        raise InferenceError(
            f"probe responses imply a non-integer hidden count {hidden_count}"
        )
    count = int(hidden_count)
    total = rational(own_sum) + hidden_sum
    return AverageInference(
        others_count=count,
        others_sum=hidden_sum,
        true_average=total / (own_count + count),
    )


def average_infer_from_history(o: ObservedHistory) -> AverageInference:
    """Decode a completed probing exchange straight from the observed history."""
    first = _response_after_own_update(o, 0)
    second = _response_after_own_update(o, 1)
    if first is None or second is None:
        raise InferenceError("the probe exchange has not completed")
    own = multiset_points(o.own_factuals())
    if not own:
        raise InferenceError("no factual data to fold into the average")
    own_sum = sum((p[0] for p in own), Fraction(0))
    return average_infer(first, second, own_sum, len(own))


# =============================================================================
# Clustering: point-level omission and fabrication
# =============================================================================


def omit_point(point: Union[RationalLike, Sequence[RationalLike]]) -> Strategy:
    """Echo own factual point sets with one fixed point withheld."""
    target = PointSet((_coerce_point(point),))

    def strategy(o: ObservedHistory) -> Optional[UpdatePayload]:
        last = o.last()
        if isinstance(last, FactualDelivery) and isinstance(last.payload, PointSet):
            remaining = payload_difference(last.payload, target)
            if isinstance(remaining, Empty):
                return None
            return remaining
        return truthful_strategy(o)

    return strategy


def fabricate_point(point: Union[RationalLike, Sequence[RationalLike]]) -> Strategy:
    """Replace every own factual point set with one fixed fabricated point."""
    target = PointSet((_coerce_point(point),))

    def strategy(o: ObservedHistory) -> Optional[UpdatePayload]:
        last = o.last()
        if isinstance(last, FactualDelivery) and isinstance(last.payload, PointSet):
            return target
        return truthful_strategy(o)

    return strategy


def fabricate_rows(rows: Union[RowMultiset, Sequence[Row]]) -> Strategy:
    """Replace every own factual row multiset with a fixed fabricated one."""
    payload = rows if isinstance(rows, RowMultiset) else RowMultiset(tuple(rows))

    def strategy(o: ObservedHistory) -> Optional[UpdatePayload]:
        last = o.last()
        if isinstance(last, FactualDelivery) and isinstance(last.payload, RowMultiset):
            return payload
        return truthful_strategy(o)

    return strategy


# =============================================================================
# Triangulation: probe the fit d+1 times, solve for the hidden moments
# =============================================================================


@dataclass(frozen=True)
class TriangulationState:
    """The in-flight probe ladder, rebuilt from an observed history.

    `rho_seq` holds the broadcast coefficient vectors from the trigger output
    onward (step i means i probe responses have arrived, so `rho_seq` has
    i + 1 entries), `probes` the row payloads sent so far, and the two moment
    pairs what the agent had put on the ledger before the ladder started and
    what it has received as factual data.
    """

    step: int
    rho_seq: tuple[Optional[Point], ...]
    probes: tuple[tuple[Row, ...], ...]
    own_ledger_moments: MomentPair
    own_factual_moments: MomentPair


def triangulation_state(o: ObservedHistory, d: int) -> Optional[TriangulationState]:
    """Rebuild the current probe ladder from an observed history.

    A ladder starts at every fresh data event: an own factual delivery, or a
    broadcast that is not the immediate consequence of an own ledger update.
    A fresh event while a ladder is running abandons it and starts over, and
    no ladder can start before the first usable broadcast.
    """
    width = d + 1
    items = o.items
    own_factual_rows: list[Row] = []
    own_ledger_rows: list[Row] = []
    last_coeffs: Optional[Point] = None
    active = False
    ladder_rho: list[Optional[Point]] = []
    ladder_probes: list[tuple[Row, ...]] = []
    ladder_prior_ledger: tuple[Row, ...] = ()

    for t, item in enumerate(items):
        if isinstance(item, FactualDelivery):
            if isinstance(item.payload, RowMultiset):
                own_factual_rows.extend(item.payload.rows)
            if last_coeffs is None:
                active = False
            else:
                active = True
                ladder_rho = [last_coeffs]
                ladder_probes = []
                ladder_prior_ledger = tuple(own_ledger_rows)
        elif isinstance(item, LedgerUpdate):
            if isinstance(item.payload, RowMultiset):
                own_ledger_rows.extend(item.payload.rows)
        else:
            coeffs = (
                item.output.coefficients
                if isinstance(item.output, CoefficientsOutput)
                else None
            )
            follows_own_update = t > 0 and isinstance(items[t - 1], LedgerUpdate)
            if follows_own_update:
                if active:
                    sent = items[t - 1].payload
                    ladder_probes.append(
                        sent.rows if isinstance(sent, RowMultiset) else ()
                    )
                    ladder_rho.append(coeffs)
                last_coeffs = coeffs
            else:
                last_coeffs = coeffs
                if coeffs is None:
                    active = False
                else:
                    active = True
                    ladder_rho = [coeffs]
                    ladder_probes = []
                    ladder_prior_ledger = tuple(own_ledger_rows)

    if not active:
        return None
    return TriangulationState(
        step=len(ladder_probes),
        rho_seq=tuple(ladder_rho),
        probes=tuple(ladder_probes),
        own_ledger_moments=moments(ladder_prior_ledger, width),
        own_factual_moments=moments(own_factual_rows, width),
    )


def _probe_row(step: int, previous: Point) -> Row:
    """The step-th ladder point: unit features, target one above the current fit."""
    width = len(previous)
    features = tuple(
        Fraction(1) if c == 0 or c == step - 1 else Fraction(0) for c in range(width)
    )
    target = sum((f * p for f, p in zip(features, previous)), Fraction(0)) + 1
    return Row(features, target)


@dataclass(frozen=True)
class InferenceResult:
    """The recovered hidden moments and the truthful fit they imply.

    `sigma_matrix` is the ledger Gram block as it stood when the ladder
    started, so it still contains any rows the attacker itself had sent by
    then; `sigma_vector` is the matching cross-moment vector. The two solved
    system sides `response_matrix` and `delta_matrix` are kept for invariant
    checks.
    """

    sigma_matrix: RMatrix
    sigma_vector: RMatrix
    truth_output: AlgorithmOutput
    response_matrix: RMatrix
    delta_matrix: RMatrix


def triangulation_infer(state: TriangulationState, d: int) -> InferenceResult:
    """Solve the probe responses for the hidden moments and the truthful fit."""
    width = d + 1
    if state.step < width:
        raise InferenceError(
            f"need {width} probe responses to solve a width-{width} system, "
            f"got {state.step}"
        )
    rho = state.rho_seq[: width + 1]
    if any(coeffs is None for coeffs in rho):
        raise InferenceError("a probe response was Null; the ledger fit vanished")
    delta_columns: list[tuple[Fraction, ...]] = []
    response_columns: list[tuple[Fraction, ...]] = []
    accumulated = RMatrix.zeros(width, width)
    for i in range(1, width + 1):
        step_moments = moments(state.probes[i - 1], width)
        rho_i = RMatrix.column(rho[i])
        delta = rho_i - RMatrix.column(rho[i - 1])
        response = step_moments.cross - (step_moments.gram @ rho_i) - (accumulated @ delta)
        delta_columns.append(delta.column_values())
        response_columns.append(response.column_values())
        accumulated = accumulated + step_moments.gram
    delta_matrix = RMatrix(zip(*delta_columns))
    response_matrix = RMatrix(zip(*response_columns))
    delta_inverse = delta_matrix.inverse()
    if delta_inverse is None:
        raise InferenceError(
            "the fit never moved along some direction; probe responses are dependent"
        )
    sigma_matrix = response_matrix @ delta_inverse
    sigma_vector = sigma_matrix @ RMatrix.column(rho[0])
    truth_gram = sigma_matrix - state.own_ledger_moments.gram + state.own_factual_moments.gram
    truth_cross = sigma_vector - state.own_ledger_moments.cross + state.own_factual_moments.cross
    solution = truth_gram.solve(truth_cross)
    if solution is None:
        raise InferenceError("the truthful data does not determine a unique fit")
    return InferenceResult(
        sigma_matrix=sigma_matrix,
        sigma_vector=sigma_vector,
        truth_output=CoefficientsOutput(solution.column_values()),
        response_matrix=response_matrix,
        delta_matrix=delta_matrix,
    )


def triangulation_infer_from_history(o: ObservedHistory, d: int) -> InferenceResult:
    """Decode the most recent completed probe ladder from an observed history."""
    state = triangulation_state(o, d)
    if state is None:
        raise InferenceError("no probe ladder is visible in this history")
    return triangulation_infer(state, d)


def triangulation_attack(d: int) -> Strategy:
    """Probe the public fit d+1 times, infer the hidden moments, then deflect.

    Each probe is one labeled point placed exactly one unit off the current
    fit, so every response moves the coefficients. After d+1 responses the
    hidden moment block is solvable; if the inferred truthful fit happens to
    equal the current broadcast, one final off-fit point pushes the public
    coefficients away from it, and otherwise the ladder ends silently.
    """
    if d < 1:
        raise ParamError(f"dimension must be at least 1, got {d}")

    def strategy(o: ObservedHistory) -> Optional[UpdatePayload]:
        state = triangulation_state(o, d)
        if state is None:
            return None
        if any(coeffs is None for coeffs in state.rho_seq):
            return None
        if state.step <= d:
            previous = state.rho_seq[-1]
            assert previous is not None
            return RowMultiset((_probe_row(state.step + 1, previous),))
        if state.step == d + 1:
            try:
                result = triangulation_infer(state, d)
            except InferenceError:
                return None
            current = state.rho_seq[-1]
            truth = result.truth_output
            if isinstance(truth, CoefficientsOutput) and truth.coefficients == current:
                assert current is not None
                deflection = Row(
                    (Fraction(1),) + (Fraction(0),) * d, current[0] + 1
                )
                return RowMultiset((deflection,))
        return None

    return strategy


# =============================================================================
# Run classification: lying, omission, truthlike
# =============================================================================


class StrategyClass(enum.Enum):
    EXPLICITLY_LYING = "explicitly_lying"
    OMISSION = "omission"
    TRUTHLIKE = "truthlike"


def _payload_atoms(payload: UpdatePayload) -> frozenset:
    if isinstance(payload, Scalar):
        return frozenset((payload.value,))
    if isinstance(payload, PointSet):
        return frozenset(payload.points)
    if isinstance(payload, RowMultiset):
        return frozenset((row.features, row.target) for row in payload.rows)
    return frozenset()


def classify_strategy_run(
    run: Run, j: int, truth_run: Optional[Run] = None
) -> StrategyClass:
    """Classify agent j's behavior over a finished run.

    Explicitly lying means some sent point never appeared in j's factual data.
    Omission means the sent points are a strict subset of the factual ones and
    the run ends on a different output than the truthful replay; pass
    `truth_run` to check that second part, without it the strict subset alone
    counts. Everything else is truthlike.
    """
    sent: frozenset = frozenset()
    for payload in extract(run, KIND_LEDGER, j):
        sent = sent | _payload_atoms(payload)
    received: frozenset = frozenset()
    for payload in extract(run, KIND_FACTUAL, j):
        received = received | _payload_atoms(payload)
    if sent - received:
        return StrategyClass.EXPLICITLY_LYING
    if sent < received:
        if truth_run is None or run.final_output() != truth_run.final_output():
            return StrategyClass.OMISSION
    return StrategyClass.TRUTHLIKE


# =============================================================================
# Concrete attack parameters
# =============================================================================


def kcenter_sneak_params(k: int, eps: RationalLike) -> SneakParams:
    """Swap-and-repair parameters against k centers on the line.

    The watched payload is the spread set {1, 2, 10, ..., 10^(k-1)}. The swap
    sends only its 1 while the last broadcast still shows the tight cluster
    around 0, so the public centers keep hugging the cluster instead of
    tracking the spread set.
    """
    if k < 3:
        raise ParamError(f"the construction needs k >= 3, got {k}")
    epsilon = rational(eps)
    if not 0 < epsilon < Fraction(1, 4):
        raise ParamError(f"eps must lie strictly between 0 and 1/4, got {epsilon}")
    cond_values = [Fraction(1), Fraction(2)] + [
        Fraction(10) ** power for power in range(1, k)
    ]
    cluster = [-epsilon, Fraction(0)] + [
        epsilon / denom for denom in range(k - 2, 0, -1)
    ]
    u_cond = PointSet(tuple((v,) for v in cond_values))
    u_attack = PointSet(((Fraction(1),),))
    return SneakParams(
        u_cond=u_cond,
        rho_cond=CentersOutput(tuple((c,) for c in cluster)),
        u_attack=u_attack,
        u_resync=payload_difference(u_cond, u_attack),
    )


def lr_sneak_params() -> SneakParams:
    """Swap-and-repair parameters against the one-feature least-squares fit.

    The swapped-in row and the two repair rows are chosen so their moments sum
    to the watched payload's moments: once the repair lands, every later fit
    equals the truthful one and the swap leaves no trace in the outputs.
    """
    u_cond = RowMultiset((Row((1, 3), 1), Row((1, 0), 1), Row((1, 0), 1)))
    return SneakParams(
        u_cond=u_cond,
        rho_cond=CoefficientsOutput((1, 0)),
        u_attack=RowMultiset((Row((1, 2), 2),)),
        u_resync=RowMultiset((Row((1, 2), 0), Row((1, -1), 1))),
    )


# =============================================================================
# Strategy registry
# =============================================================================


STRATEGY_NAMES = (
    "truthful",
    "max_echo",
    "max_overbid",
    "average_probe",
    "kcenter_sneak",
    "lr_sneak",
    "triangulation",
    "sneak",
    "omit_point",
    "fabricate_point",
    "fabricate_rows",
)


def make_strategy(name: str, params: Optional[Mapping[str, object]] = None) -> Strategy:
    """Build a named strategy from a parameter mapping, as scenario files do."""
    args = dict(params or {})

    def take(key: str) -> object:
        if key not in args:
            raise ParamError(f"strategy '{name}' needs parameter '{key}'")
        return args.pop(key)

    built: Strategy
    if name == "truthful":
        built = truthful_strategy
    elif name == "max_echo":
        built = max_echo_attack()
    elif name == "max_overbid":
        built = max_overbid(rational(take("value")))  # type: ignore[arg-type]
    elif name == "average_probe":
        built = average_double_probe()
    elif name == "kcenter_sneak":
        built = sneak_attack(
            kcenter_sneak_params(int(take("k")), rational(take("eps")))  # type: ignore[arg-type]
        )
    elif name == "lr_sneak":
        built = sneak_attack(lr_sneak_params())
    elif name == "triangulation":
        built = triangulation_attack(int(take("d")))  # type: ignore[arg-type]
    elif name == "sneak":
        built = sneak_attack(
            SneakParams(
                u_cond=take("u_cond"),  # type: ignore[arg-type]
                rho_cond=take("rho_cond"),  # type: ignore[arg-type]
                u_attack=take("u_attack"),  # type: ignore[arg-type]
                u_resync=take("u_resync"),  # type: ignore[arg-type]
            )
        )
    elif name == "omit_point":
        built = omit_point(take("point"))  # type: ignore[arg-type]
    elif name == "fabricate_point":
        built = fabricate_point(take("point"))  # type: ignore[arg-type]
    elif name == "fabricate_rows":
        built = fabricate_rows(take("rows"))  # type: ignore[arg-type]
    else:
        raise ParamError(
            f"unknown strategy '{name}'; expected one of {', '.join(STRATEGY_NAMES)}"
        )
    if args:
        raise ParamError(f"unused parameters for strategy '{name}': {sorted(args)}")
    return built
