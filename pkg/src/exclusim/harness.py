"""Paired-run vulnerability harness.

Plays the same nature input with and without an attack to test whether the
final output moves, searches for confounding input pairs that refute output
exclusivity, builds forceable-winner point sets for the clustering
algorithms, constructs round-based cost-scaling confounders, and audits
inference functions for exactness against the truthful replay.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Callable, Mapping, Optional, Sequence, Union

from .algorithms import (
    Algorithm,
    AverageAlgorithm,
    CentersOutput,
    CoefficientsOutput,
    DlrAlgorithm,
    KCenterAlgorithm,
    KMedianAlgorithm,
    MaxAlgorithm,
    AlgorithmOutput,
    ParamError,
    Point,
    PointSet,
    Row,
    RowMultiset,
    Scalar,
    ScalarOutput,
    UpdatePayload,
    all_rows,
    as_point,
    moments,
    payload_union,
    rational,
    union_points,
)
from .numerics import RationalLike
from .protocol import (
    KIND_FACTUAL,
    KIND_LEDGER,
    NatureElement,
    NatureInput,
    Run,
    Strategy,
    extract,
    observed_history,
    run_protocol,
    truthful_strategy,
)
from .strategies import (
    InferenceError,
    kcenter_sneak_params,
    lr_sneak_params,
    sneak_attack,
)

GENERATOR_BOUND_NOTE = (
    "generated inputs are capped at 6 nature elements with small rational "
    "coordinates; verdicts certify behavior on this suite, not on all inputs"
)

_RESAMPLE_LIMIT = 1000


class NotApplicableError(Exception):
    """The requested construction has no meaning on this input or strategy."""


# =============================================================================
# Paired runs and condition (i)
# =============================================================================


@dataclass(frozen=True)
class PairedVerdict:
    """Final outputs of the same input played under attack and truthfully."""

    attack_final: Optional[AlgorithmOutput]
    truth_final: Optional[AlgorithmOutput]
    differs: bool
    run_attack: Run
    run_truth: Run


def _agent_count(ninput: Sequence[NatureElement], j: int) -> int:
    return max([element.agent for element in ninput] + [j])


def _strategy_table(strategy: Strategy, j: int, agent_count: int) -> dict[int, Strategy]:
    table: dict[int, Strategy] = {agent: truthful_strategy for agent in range(1, agent_count + 1)}
    table[j] = strategy
    return table


def check_condition_i(
    algorithm: Algorithm,
    strategy: Strategy,
    j: int,
    ninput: Sequence[NatureElement],
    ell: Optional[int] = None,
    protocol: str = "continuous",
    agent_count: Optional[int] = None,
    safety_cap: Optional[int] = None,
) -> PairedVerdict:
    """Play one input twice, with agent j attacking and truthful, and compare.

    All agents other than j play truthfully in both runs; the verdict compares
    the final broadcasts exactly.
    """
    count = agent_count if agent_count is not None else _agent_count(ninput, j)
    run_attack = run_protocol(
        protocol, ninput, _strategy_table(strategy, j, count), algorithm, count,
        ell=ell, safety_cap=safety_cap,
    )
    run_truth = run_protocol(
        protocol, ninput, _strategy_table(truthful_strategy, j, count), algorithm, count,
        ell=ell, safety_cap=safety_cap,
    )
    attack_final = run_attack.final_output()
    truth_final = run_truth.final_output()
    return PairedVerdict(
        attack_final=attack_final,
        truth_final=truth_final,
        differs=attack_final != truth_final,
        run_attack=run_attack,
        run_truth=run_truth,
    )


# =============================================================================
# Generated scenario suites and condition (i*)
# =============================================================================


@dataclass(frozen=True)
class GeneratedCase:
    """One generated scenario: the input plus the engine settings to run it."""

    ninput: NatureInput
    agent_count: int
    ell: Optional[int] = None
    protocol: str = "continuous"


CaseGenerator = Callable[[int], GeneratedCase]


def check_condition_i_star(
    algorithm: Algorithm,
    strategy: Strategy,
    j: int,
    scenario_generator: CaseGenerator,
    count: int,
    seed: int = 0,
) -> dict:
    """Check that every generated scenario ends on a moved final output."""
    non_differing: list[int] = []
    for offset in range(count):
        case_seed = seed + offset
        case = scenario_generator(case_seed)
        verdict = check_condition_i(
            algorithm, strategy, j, case.ninput,
            ell=case.ell, protocol=case.protocol, agent_count=case.agent_count,
        )
        if not verdict.differs:
            non_differing.append(case_seed)
    return {
        "count": count,
        "seeds": {"start": seed, "count": count},
        "pass": not non_differing,
        "non_differing_seeds": non_differing,
        "generator_bound": GENERATOR_BOUND_NOTE,
    }


def verify_inference(
    algorithm: Algorithm,
    strategy: Strategy,
    inference: Callable[..., AlgorithmOutput],
    scenario_generator: CaseGenerator,
    count: int,
    j: int,
    seed: int = 0,
) -> dict:
    """Check the inference decodes the truthful final output on every scenario.

    The inference callable receives the attacker's observed history from the
    attack run; it must return exactly the truthful run's final broadcast.
    """
    failed: list[int] = []
    for offset in range(count):
        case_seed = seed + offset
        case = scenario_generator(case_seed)
        verdict = check_condition_i(
            algorithm, strategy, j, case.ninput,
            ell=case.ell, protocol=case.protocol, agent_count=case.agent_count,
        )
        observed = observed_history(verdict.run_attack, j)
        try:
            estimate: Optional[AlgorithmOutput] = inference(observed)
        except InferenceError:
            estimate = None
        if estimate != verdict.truth_final:
            failed.append(case_seed)
    rate = Fraction(count - len(failed), count) if count else Fraction(1)
    return {
        "count": count,
        "seeds": {"start": seed, "count": count},
        "pass_rate": rate,
        "failed_seeds": failed,
        "generator_bound": GENERATOR_BOUND_NOTE,
    }


def certify_attack(
    condition_i: PairedVerdict,
    inference_report: Mapping,
    star_report: Optional[Mapping] = None,
) -> dict:
    """Roll the individual checks into the two demonstration labels.

    A moved final plus a fully exact inference demonstrates vulnerability on
    the tested suite; the starred label additionally needs every generated
    scenario to move the final output.
    """
    vulnerable = condition_i.differs and inference_report["pass_rate"] == 1
    star = bool(vulnerable and star_report is not None and star_report["pass"])
    return {
        "vulnerable_demonstrated": vulnerable,
        "vulnerable_star_demonstrated": star,
        "epistemic_note": GENERATOR_BOUND_NOTE,
    }


def monotonicity_smoke_check(
    algorithm: Algorithm,
    strategy: Strategy,
    j: int,
    ninput: Sequence[NatureElement],
    ell: int,
    protocol: str = "continuous",
) -> bool:
    """A run that moves the final under window ell still moves it under ell + 1."""
    tight = check_condition_i(algorithm, strategy, j, ninput, ell=ell, protocol=protocol)
    loose = check_condition_i(algorithm, strategy, j, ninput, ell=ell + 1, protocol=protocol)
    return (not tight.differs) or loose.differs


# =============================================================================
# Confounding witnesses: refuting output exclusivity
# =============================================================================


@dataclass(frozen=True)
class ConfoundingWitness:
    """Two inputs the attacker cannot tell apart while the truth can.

    Valid when the attacker's observed histories coincide across the two
    attack runs but the truthful runs show the attacker different histories.
    """

    input_a: NatureInput
    input_b: NatureInput
    observed_equal_under_attack: bool
    observed_equal_under_truth: bool

    def is_valid(self) -> bool:
        return self.observed_equal_under_attack and not self.observed_equal_under_truth


def _measure_pair(
    algorithm: Algorithm,
    strategy: Strategy,
    j: int,
    input_a: Sequence[NatureElement],
    input_b: Sequence[NatureElement],
    ell: Optional[int],
    protocol: str,
    agent_count: Optional[int] = None,
) -> ConfoundingWitness:
    """Run both inputs under attack and truth and compare j's observed histories."""
    count = max(
        _agent_count(input_a, j),
        _agent_count(input_b, j),
        agent_count or 1,
    )
    attack_table = _strategy_table(strategy, j, count)
    truth_table = _strategy_table(truthful_strategy, j, count)

    def view(ninput: Sequence[NatureElement], table: Mapping[int, Strategy]):
        run = run_protocol(protocol, ninput, table, algorithm, count, ell=ell)
        return observed_history(run, j).items

    equal_attack = view(input_a, attack_table) == view(input_b, attack_table)
    equal_truth = view(input_a, truth_table) == view(input_b, truth_table)
    return ConfoundingWitness(
        input_a=tuple(input_a),
        input_b=tuple(input_b),
        observed_equal_under_attack=equal_attack,
        observed_equal_under_truth=equal_truth,
    )


def _other_agent(j: int, agent_count: int) -> tuple[int, int]:
    """An agent index other than j, growing the agent table when needed."""
    for agent in range(1, agent_count + 1):
        if agent != j:
            return agent, agent_count
    return agent_count + 1, agent_count + 1


def _extension_agent(j: int, base: NatureInput, agent_count: int) -> int:
    """An agent for an appended element: not j, and not the last element's
    recipient, whose immediate truthful echo would hit the update guard."""
    last_author = base[-1].agent if base else None
    for agent in range(1, agent_count + 1):
        if agent != j and agent != last_author:
            return agent
    return agent_count + 1


def _point_values(payloads: Sequence[UpdatePayload]) -> set[Fraction]:
    values: set[Fraction] = set()
    for point in union_points(payloads):
        if len(point) == 1:
            values.add(point[0])
    return values


def _overbid_pairs(
    algorithm: Algorithm,
    verdict: PairedVerdict,
    j: int,
    base: NatureInput,
    agent_count: int,
):
    """Extension pairs that pull the true maximum toward an overbid value x.

    When the attack run shows j pushing some scalar x above the truthful
    maximum m, two extensions delivering (x + 2m) / 3 and (2x + m) / 3 to
    another agent stay below x (invisible under attack) while raising the
    truthful maximum to two different values.
    """
    truth_final = verdict.truth_final
    if not isinstance(truth_final, ScalarOutput):
        return
    m = truth_final.value
    sent = [
        payload.value
        for payload in extract(verdict.run_attack, KIND_LEDGER, j)
        if isinstance(payload, Scalar)
    ]
    overbids = sorted({value for value in sent if value > m}, reverse=True)
    agent = _extension_agent(j, base, agent_count)
    for x in overbids:
        low = (x + 2 * m) / 3
        high = (2 * x + m) / 3
        element_a = NatureElement(agent, Scalar(low))
        element_b = NatureElement(agent, Scalar(high))
        yield base + (element_a,), base + (element_b,)


def _fabrication_pairs(
    algorithm: Algorithm,
    verdict: PairedVerdict,
    j: int,
    base: NatureInput,
    agent_count: int,
):
    """Extension pairs that expose a fabricated clustering point.

    A point x sent by j but absent from every agent's factual data is forced
    to be a winner by an extension E1; the sibling extension E2 = E1 minus x
    leaves the attack ledger's point union unchanged (x is already there) but
    splits the truthful outputs.
    """
    if isinstance(algorithm, KCenterAlgorithm):
        kind = "kcenter"
    elif isinstance(algorithm, KMedianAlgorithm):
        kind = "kmedian"
    else:
        return
    if algorithm.k < 2:
        return
    factual = _point_values(extract(verdict.run_attack, KIND_FACTUAL))
    sent = _point_values(extract(verdict.run_attack, KIND_LEDGER, j))
    fabricated = sorted(sent - factual)
    if not fabricated:
        return
    ledger_union = factual | sent
    agent = _extension_agent(j, base, agent_count)
    for x in fabricated:
        support = sorted(ledger_union | {x})
        if kind == "kmedian" and len(support) < 2:
            continue
        try:
            winners = forceable_winner_set(
                kind, PointSet(tuple((v,) for v in support)), (x,), k=algorithm.k
            )
        except ParamError:
            continue
        bar = {point[0] for point in winners.points}
        e1_values = sorted(set(support) | bar)
        e2_values = sorted((set(support) | bar) - {x})
        element_a = NatureElement(agent, PointSet(tuple((v,) for v in e1_values)))
        element_b = NatureElement(agent, PointSet(tuple((v,) for v in e2_values)))
        yield base + (element_a,), base + (element_b,)


def _enumeration_payloads(algorithm: Algorithm) -> list[UpdatePayload]:
    values = [Fraction(0), Fraction(1), Fraction(2), Fraction(-1), Fraction(1, 2), Fraction(3)]
    if isinstance(algorithm, MaxAlgorithm):
        return [Scalar(v) for v in values]
    if isinstance(algorithm, (AverageAlgorithm, KCenterAlgorithm, KMedianAlgorithm)):
        return [PointSet(((v,),)) for v in values]
    if isinstance(algorithm, DlrAlgorithm):
        width = algorithm.d + 1
        return [
            RowMultiset((Row((Fraction(1),) + (Fraction(v),) * (width - 1), w),))
            for v, w in [(1, 0), (2, 1), (0, 1), (1, 2), (-1, 0), (3, 1)]
        ]
    return []


def find_confounding_pair(
    algorithm: Algorithm,
    strategy: Strategy,
    j: int,
    base_inputs: Sequence[NatureElement],
    budget: int,
    ell: int = 1,
    protocol: str = "continuous",
) -> Optional[ConfoundingWitness]:
    """Search for a confounding pair of inputs extending `base_inputs`.

    Tries the constructive extensions first (overbid pulls for max,
    forceable-winner splits for fabricated clustering points), then a small
    enumeration over single-payload extensions to another agent. Every
    candidate is measured by four fresh simulations; only a pair the attacker
    cannot distinguish while the truth does is returned. `budget` bounds the
    number of candidate pairs measured.
    """
    base = tuple(base_inputs)
    count = max(_agent_count(base, j), 2)
    verdict = check_condition_i(
        algorithm, strategy, j, base, ell=ell, protocol=protocol, agent_count=count
    )

    def candidates():
        yield from _overbid_pairs(algorithm, verdict, j, base, count)
        yield from _fabrication_pairs(algorithm, verdict, j, base, count)
        agent = _extension_agent(j, base, count)
        pool = _enumeration_payloads(algorithm)
        for payload_a, payload_b in combinations(pool, 2):
            element_a = NatureElement(agent, payload_a)
            element_b = NatureElement(agent, payload_b)
            yield base + (element_a,), base + (element_b,)

    tried = 0
    for input_a, input_b in candidates():
        if tried >= budget:
            break
        tried += 1
        witness = _measure_pair(
            algorithm, strategy, j, input_a, input_b, ell, protocol, agent_count=count
        )
        if witness.is_valid():
            return witness
    return None


# =============================================================================
# Forceable winners for the clustering algorithms
# =============================================================================


def forceable_winner_set(
    kind: str,
    s: PointSet,
    x: Union[RationalLike, Point],
    k: int = 3,
) -> PointSet:
    """Extra points that force x into the clustering output over s plus them.

    For k centers the set spreads two points one radius around x plus far
    singletons; for k medians it completes s symmetrically around x so x
    becomes the median of the near mass, again plus far singletons. The
    returned set never contains x itself.
    """
    if kind not in ("kcenter", "kmedian"):
        raise ParamError(f"kind must be 'kcenter' or 'kmedian', got {kind!r}")
    if k < 2:
        raise ParamError(f"need at least two centers, got k={k}")
    if not s.points:
        raise ParamError("the base point set is empty")
    if any(len(point) != 1 for point in s.points):
        raise ParamError("forceable winners are built on the line only")
    target = x if isinstance(x, tuple) else _as_single_point(x)
    if len(target) != 1 or target not in s.points:
        raise ParamError(f"x must be a one-dimensional member of s, got {target}")
    center = target[0]
    values = [point[0] for point in s.points]
    if kind == "kcenter":
        radius = max(max(abs(center - v) for v in values), Fraction(1))
        bar = {center + radius, center - radius}
        bar.update(center + Fraction(10) ** t * radius for t in range(1, k))
    else:
        if len(values) < 2:
            raise ParamError("the median construction needs at least two base points")
        mirrored = set(values) | {2 * center - v for v in values}
        spread = max(sum(abs(v - center) for v in mirrored), Fraction(1))
        bar = mirrored - {center}
        bar.update(center + Fraction(10) ** t * spread for t in range(1, k))
    return PointSet(tuple((v,) for v in sorted(bar)))


def _as_single_point(value: Union[RationalLike, Sequence[RationalLike]]) -> Point:
    if isinstance(value, (tuple, list)):
        return as_point(value)
    return (rational(value),)


# =============================================================================
# Round-based confounders
# =============================================================================


def _append_to_last_round(
    ninput: NatureInput, payload: UpdatePayload, j: int, agent_count: int
) -> tuple[NatureInput, int]:
    """Attach a payload to the final round via a new element or a merged one."""
    last_round = max(element.round or 0 for element in ninput)
    occupied = {element.agent for element in ninput if element.round == last_round}
    for agent in range(1, agent_count + 1):
        if agent != j and agent not in occupied:
            extension = NatureElement(agent, payload, last_round)
            return ninput + (extension,), agent_count
    for index, element in enumerate(reversed(ninput)):
        position = len(ninput) - 1 - index
        if element.round == last_round and element.agent != j:
            merged = NatureElement(
                element.agent, payload_union(element.payload, payload), last_round
            )
            return ninput[:position] + (merged,) + ninput[position + 1 :], agent_count
    extension = NatureElement(agent_count + 1, payload, last_round)
    return ninput + (extension,), agent_count + 1


def periodic_lambda_confounder(
    algorithm: Algorithm,
    ninput: Sequence[NatureElement],
    strategy: Strategy,
    j: int,
    agent_count: Optional[int] = None,
) -> ConfoundingWitness:
    """A confounding pair built by flooding the final round with copied data.

    When the attack moves the final fit, enough copies of the attack ledger
    appended to the last round drag the truthful fit onto the attack's output
    while leaving every broadcast of the attack run unchanged. The copy count
    comes from the two cost gaps; the returned witness carries freshly
    simulated equality flags.
    """
    base = tuple(ninput)
    count = max(agent_count or 1, _agent_count(base, j), 2)
    verdict = check_condition_i(
        algorithm, strategy, j, base, protocol="periodic", agent_count=count
    )
    rho_attack = verdict.attack_final
    rho_truth = verdict.truth_final
    if rho_attack == rho_truth:
        raise NotApplicableError("the strategy does not move the final output here")
    cost = getattr(algorithm, "cost", None)
    if cost is None:
        raise ParamError("the cost-scaling confounder needs a cost-reporting algorithm")
    if not isinstance(rho_attack, CoefficientsOutput) or not isinstance(
        rho_truth, CoefficientsOutput
    ):
        raise NotApplicableError("both runs must end on a proper fit")
    truth_rows = all_rows(extract(verdict.run_truth, KIND_LEDGER))
    attack_rows = all_rows(extract(verdict.run_attack, KIND_LEDGER))
    if not attack_rows:
        raise NotApplicableError("the attack run left the ledger empty")
    gap_truth = cost(truth_rows, rho_attack.coefficients) - cost(
        truth_rows, rho_truth.coefficients
    )
    gap_attack = cost(attack_rows, rho_truth.coefficients) - cost(
        attack_rows, rho_attack.coefficients
    )
    if gap_attack <= 0:
        raise NotApplicableError("the attack ledger does not strictly prefer its output")
    copies = math.ceil(Fraction(max(gap_truth, 0)) / gap_attack) + 1
    payload = RowMultiset(tuple(attack_rows) * copies)
    flooded, count = _append_to_last_round(base, payload, j, count)
    return _measure_pair(
        algorithm, strategy, j, base, flooded, ell=None, protocol="periodic",
        agent_count=count,
    )


def periodic_kcenter_omission_confounder(
    algorithm: KCenterAlgorithm,
    ninput: Sequence[NatureElement],
    strategy: Strategy,
    j: int,
    agent_count: Optional[int] = None,
) -> Optional[ConfoundingWitness]:
    """A confounding pair for a k-center run that withholds one point.

    For a point x that agent j received but never echoed, two extensions are
    appended to the final round: one whose winner set is centered on x and one
    centered on x's nearest neighbor, matched so both attack ledgers (which
    miss x) produce identical outputs while the truthful ledgers (which keep
    x) split. Candidates are tried in order and each one is validated by
    fresh simulation; None means no candidate survived.
    """
    base = tuple(ninput)
    count = max(agent_count or 1, _agent_count(base, j), 2)
    verdict = check_condition_i(
        algorithm, strategy, j, base, protocol="periodic", agent_count=count
    )
    own_factual = _point_values(extract(verdict.run_attack, KIND_FACTUAL, j))
    own_sent = _point_values(extract(verdict.run_attack, KIND_LEDGER, j))
    all_factual = _point_values(extract(verdict.run_attack, KIND_FACTUAL))
    others_factual = all_factual - own_factual
    sent_by_all = _point_values(extract(verdict.run_attack, KIND_LEDGER))
    candidates = sorted(own_factual - own_sent - others_factual - sent_by_all)
    k = algorithm.k
    for x in candidates:
        support = set(all_factual) | own_sent | {x + 1}
        if len(support - {x}) < 1:
            continue
        # The radius is inflated well past the support's spread around x so
        # that every center choice below is a unique minimizer and no result
        # hinges on tie-breaking.
        radius = 4 * (max(abs(x - v) for v in support) + 1)
        fars = [x + Fraction(10) ** t * radius for t in range(1, k)]
        far_set = set(fars)
        e1_values = sorted((support | {x - 2 * radius, x + 2 * radius} | far_set) - {x})
        element_a = PointSet(tuple((v,) for v in e1_values))
        first_output = algorithm.compute((element_a,))
        if not isinstance(first_output, CentersOutput):
            continue
        near = [c[0] for c in first_output.centers if c[0] not in far_set]
        if len(near) != 1:
            continue
        nearest = near[0]
        e2_values = sorted(
            (support | {nearest - radius, nearest + radius} | far_set) - {x}
        )
        if e2_values == e1_values:
            continue
        element_b = PointSet(tuple((v,) for v in e2_values))
        input_a, count_a = _append_to_last_round(base, element_a, j, count)
        input_b, count_b = _append_to_last_round(base, element_b, j, count)
        witness = _measure_pair(
            algorithm, strategy, j, input_a, input_b, ell=None, protocol="periodic",
            agent_count=max(count_a, count_b),
        )
        if witness.is_valid():
            return witness
    return None


# =============================================================================
# Seeded scenario generators
# =============================================================================


def _small_fraction(rng: random.Random, lo: int = -9, hi: int = 9) -> Fraction:
    if rng.random() < 0.25:
        return Fraction(rng.randint(2 * lo, 2 * hi), 2)
    return Fraction(rng.randint(lo, hi))


def make_max_cases(j: int = 1, agent_count: int = 3, ell: int = 1) -> CaseGenerator:
    """Scalar streams where no agent receives two elements in a row.

    Agent j never gets the first element, so the echoing attack sees a
    broadcast before its own factual data arrives. Some seeds give agent j no
    element at all; on those the echo never fires and the final outputs agree,
    which is exactly the every-run-differs failure the suite should surface.
    """

    def generate(seed: int) -> GeneratedCase:
        rng = random.Random(f"max:{seed}")
        length = rng.randint(2, 5)
        agents: list[int] = []
        for position in range(length):
            choices = [a for a in range(1, agent_count + 1) if not agents or a != agents[-1]]
            if position == 0:
                choices = [a for a in choices if a != j]
            agents.append(rng.choice(choices))
        elements = tuple(
            NatureElement(agent, Scalar(_small_fraction(rng, -9, 99))) for agent in agents
        )
        return GeneratedCase(elements, agent_count, ell=ell)

    return generate


def make_average_cases(j: int = 2) -> CaseGenerator:
    """Point streams where the probing agent's element arrives last.

    Every other agent gets its data first, so both probes land between
    truthful echoes; the sampled values are re-drawn until the probing
    attack's final broadcast provably differs from the truthful average.
    """

    def generate(seed: int) -> GeneratedCase:
        rng = random.Random(f"average:{seed}")
        for _ in range(_RESAMPLE_LIMIT):
            other_count = rng.randint(1, 3)
            other_agents = [a for a in range(1, other_count + 2) if a != j][:other_count]
            others = []
            hidden_values: list[Fraction] = []
            for agent in other_agents:
                size = rng.randint(1, 3)
                values = rng.sample(range(-9, 10), size)
                points = tuple((Fraction(v),) for v in sorted(values))
                hidden_values.extend(Fraction(v) for v in values)
                others.append(NatureElement(agent, PointSet(points)))
            own_size = rng.randint(1, 3)
            own_values = [Fraction(v) for v in rng.sample(range(-9, 10), own_size)]
            own = NatureElement(
                j, PointSet(tuple((v,) for v in sorted(own_values)))
            )
            hidden_sum = sum(hidden_values, Fraction(0))
            hidden_count = len(hidden_values)
            if hidden_sum != 0:
                attack_final = hidden_sum / (hidden_count + 2)
            else:
                attack_final = Fraction(1, hidden_count + 2)
            truth_final = (hidden_sum + sum(own_values)) / (hidden_count + len(own_values))
            if attack_final != truth_final:
                agent_count = max(other_agents + [j])
                return GeneratedCase(tuple(others) + (own,), agent_count, ell=2)
        raise NotApplicableError("could not sample a final-moving average scenario")

    return generate


def _labeled_row(rng: random.Random, d: int) -> Row:
    features = (Fraction(1),) + tuple(_small_fraction(rng, -10, 10) for _ in range(d))
    return Row(features, _small_fraction(rng, -10, 10))


def _warm_rows(rng: random.Random, d: int, count: Optional[int] = None) -> tuple[Row, ...]:
    """Random labeled points whose feature moments are invertible."""
    width = d + 1
    size = width if count is None else count
    for _ in range(_RESAMPLE_LIMIT):
        rows = tuple(_labeled_row(rng, d) for _ in range(size))
        if moments(rows, width).gram.det() != 0:
            return rows
    raise NotApplicableError("could not sample an invertible warm start")


def _filler_rows(rng: random.Random, d: int, count: int) -> tuple[Row, ...]:
    return tuple(_labeled_row(rng, d) for _ in range(count))


def make_triangulation_cases(d: int, j: int = 2, agent_count: int = 3) -> CaseGenerator:
    """Regression streams that trigger full probe ladders at window d + 2.

    The agents other than j receive 3 to 10 labeled points in total, with
    every coordinate a rational in [-10, 10]. The first element warms another
    agent's ledger into an invertible state; any remaining hidden points
    arrive as later elements whose echoes re-trigger fresh probe ladders.
    Some scenarios also hand j its own factual rows partway through.
    """
    if d < 1:
        raise ParamError(f"dimension must be at least 1, got {d}")

    def generate(seed: int) -> GeneratedCase:
        rng = random.Random(f"triangulation:{d}:{seed}")
        hidden_agents = [a for a in range(1, agent_count + 1) if a != j]
        hidden_total = rng.randint(max(3, d + 1), 10)
        warm_count = rng.randint(d + 1, hidden_total)
        elements = [NatureElement(1, RowMultiset(_warm_rows(rng, d, warm_count)))]
        leftover = hidden_total - warm_count
        streak_agent, streak = 1, 1
        while leftover:
            take = rng.randint(1, min(3, leftover))
            # An agent handed d + 2 elements in a row would have its last
            # truthful echo suppressed by the update guard, silently dropping
            # data from the truthful baseline, so streaks stop one short.
            choices = [a for a in hidden_agents if a != streak_agent or streak <= d]
            agent = rng.choice(choices)
            streak_agent, streak = agent, (streak + 1 if agent == streak_agent else 1)
            elements.append(NatureElement(agent, RowMultiset(_filler_rows(rng, d, take))))
            leftover -= take
        if len(elements) >= 2 and rng.random() < 0.4:
            # j's own rows stall the fresh ladder against the update guard;
            # a hidden element always follows so an echo re-triggers it.
            position = rng.randint(1, len(elements) - 1)
            own = NatureElement(j, RowMultiset(_filler_rows(rng, d, rng.randint(1, 2))))
            elements.insert(position, own)
        return GeneratedCase(tuple(elements), agent_count, ell=d + 2)

    return generate


def lr_periodic_scenario(seed: int, j: int = 2) -> tuple[Algorithm, Strategy, GeneratedCase]:
    """A round-based regression run where agent j runs the swap-and-repair attack.

    The swap trigger needs the opening broadcast to equal the attack's
    conditioning fit (intercept 1, zero slope), so the seeded warm rows all sit
    on that plane while their distinct x-coordinates keep the fit unique.
    """
    rng = random.Random(f"lr-periodic:{seed}")
    params = lr_sneak_params()
    algorithm = DlrAlgorithm(1)
    for _ in range(_RESAMPLE_LIMIT):
        xs = rng.sample(range(-9, 10), rng.randint(2, 4))
        warm = RowMultiset(
            tuple(Row((Fraction(1), Fraction(x)), Fraction(1)) for x in xs)
        )
        truth_fit = algorithm.compute((warm, params.u_cond))
        attack_fit = algorithm.compute((warm, params.u_attack))
        if (
            isinstance(truth_fit, CoefficientsOutput)
            and isinstance(attack_fit, CoefficientsOutput)
            and truth_fit != attack_fit
        ):
            ninput = (
                NatureElement(1, warm, 1),
                NatureElement(j, params.u_cond, 2),
            )
            case = GeneratedCase(ninput, max(2, j), ell=None, protocol="periodic")
            return algorithm, sneak_attack(params), case
    raise NotApplicableError("could not sample a fit-moving swap scenario")


def kcenter_periodic_scenario(seed: int, j: int = 2) -> tuple[Algorithm, Strategy, GeneratedCase]:
    """A round-based clustering run where agent j runs the swap-and-repair attack."""
    rng = random.Random(f"kcenter-periodic:{seed}")
    for _ in range(_RESAMPLE_LIMIT):
        k = rng.choice((3, 4))
        eps = Fraction(1, rng.choice((1000, 2000, 5000)))
        params = kcenter_sneak_params(k, eps)
        algorithm = KCenterAlgorithm(k)
        cluster = PointSet(params.rho_cond.centers)  # type: ignore[union-attr]
        truth_out = algorithm.compute((cluster, params.u_cond))
        attack_out = algorithm.compute((cluster, params.u_attack))
        if truth_out != attack_out:
            ninput = (
                NatureElement(1, cluster, 1),
                NatureElement(j, params.u_cond, 2),
            )
            case = GeneratedCase(ninput, max(2, j), ell=None, protocol="periodic")
            return algorithm, sneak_attack(params), case
    raise NotApplicableError("could not sample a center-moving swap scenario")


def forceable_instance(kind: str, seed: int) -> tuple[PointSet, Point, int]:
    """A random base set, a member point, and a center count for forcing."""
    rng = random.Random(f"forceable:{kind}:{seed}")
    size = rng.randint(2, 8)
    values = rng.sample(range(-9, 10), size)
    points = PointSet(tuple((Fraction(v),) for v in sorted(values)))
    x = (Fraction(rng.choice(values)),)
    return points, x, rng.choice((3, 4))
