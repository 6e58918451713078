"""Scenario files: JSON loading, validation with field-path errors, and
line-delimited trace emission for finished runs.

A scenario file pins the protocol mode, the update-window size, the
algorithm, the per-agent strategies, and the nature input, so a run is fully
reproducible from the file alone. All rationals travel as "p/q" strings or
integers; floats are rejected everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Union

from .algorithms import (
    Algorithm,
    AlgorithmOutput,
    CentersOutput,
    CoefficientsOutput,
    DlrAlgorithm,
    Empty,
    NullOutput,
    ParamError,
    PayloadError,
    PointSet,
    Row,
    RowMultiset,
    Scalar,
    ScalarOutput,
    UpdatePayload,
    make_algorithm,
    moments,
)
from .numerics import rational
from .protocol import (
    FactualDelivery,
    LedgerUpdate,
    NatureElement,
    NatureInput,
    Run,
    Strategy,
    run_protocol,
)
from .strategies import make_strategy


class ValidationError(ValueError):
    """A scenario file violates the schema; the message cites the field path."""


class PreconditionError(ValidationError):
    """A scenario is well-formed but starts in a state an attack cannot use."""


def _fail(path: str, message: str) -> ValidationError:
    return ValidationError(f"{path}: {message}")


# =============================================================================
# Rational, payload, and output (de)serialization
# =============================================================================


def parse_rational(value: object, path: str) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (int, str, Fraction)):
        raise _fail(path, f"expected an integer or 'p/q' string, got {value!r}")
    try:
        return rational(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise _fail(path, str(exc)) from exc


def format_rational(value: Fraction) -> Union[int, str]:
    if value.denominator == 1:
        return int(value)
    return f"{value.numerator}/{value.denominator}"


def _parse_point(value: object, path: str) -> tuple[Fraction, ...]:
    if not isinstance(value, list) or not value:
        raise _fail(path, "expected a non-empty list of coordinates")
    return tuple(parse_rational(c, f"{path}[{i}]") for i, c in enumerate(value))


def payload_from_json(obj: object, path: str) -> UpdatePayload:
    """Decode one update payload: scalar, points, rows, or empty."""
    if not isinstance(obj, dict):
        raise _fail(path, f"expected a payload object, got {obj!r}")
    kind = obj.get("kind")
    try:
        if kind == "scalar":
            return Scalar(parse_rational(obj.get("value"), f"{path}.value"))
        if kind == "points":
            raw = obj.get("points")
            if not isinstance(raw, list) or not raw:
                raise _fail(f"{path}.points", "expected a non-empty list of points")
            return PointSet(
                tuple(_parse_point(p, f"{path}.points[{i}]") for i, p in enumerate(raw))
            )
        if kind == "rows":
            raw = obj.get("rows")
            if not isinstance(raw, list) or not raw:
                raise _fail(f"{path}.rows", "expected a non-empty list of rows")
            rows = []
            for i, entry in enumerate(raw):
                if not isinstance(entry, dict):
                    raise _fail(f"{path}.rows[{i}]", "expected a row object")
                features = _parse_point(entry.get("features"), f"{path}.rows[{i}].features")
                target = parse_rational(entry.get("target"), f"{path}.rows[{i}].target")
                rows.append(Row(features, target))
            return RowMultiset(tuple(rows))
        if kind == "empty":
            return Empty()
    except PayloadError as exc:
        raise _fail(path, str(exc)) from exc
    raise _fail(f"{path}.kind", f"unknown payload kind {kind!r}")


def payload_to_json(payload: UpdatePayload) -> dict:
    if isinstance(payload, Scalar):
        return {"kind": "scalar", "value": format_rational(payload.value)}
    if isinstance(payload, PointSet):
        return {
            "kind": "points",
            "points": [[format_rational(c) for c in p] for p in payload.points],
        }
    if isinstance(payload, RowMultiset):
        return {
            "kind": "rows",
            "rows": [
                {
                    "features": [format_rational(c) for c in row.features],
                    "target": format_rational(row.target),
                }
                for row in payload.rows
            ],
        }
    return {"kind": "empty"}


def output_from_json(obj: object, path: str) -> AlgorithmOutput:
    """Decode one algorithm output: scalar, centers, coefficients, or null."""
    if not isinstance(obj, dict):
        raise _fail(path, f"expected an output object, got {obj!r}")
    kind = obj.get("kind")
    if kind == "scalar":
        return ScalarOutput(parse_rational(obj.get("value"), f"{path}.value"))
    if kind == "centers":
        raw = obj.get("centers")
        if not isinstance(raw, list):
            raise _fail(f"{path}.centers", "expected a list of points")
        return CentersOutput(
            tuple(_parse_point(p, f"{path}.centers[{i}]") for i, p in enumerate(raw))
        )
    if kind == "coefficients":
        return CoefficientsOutput(
            _parse_point(obj.get("coefficients"), f"{path}.coefficients")
        )
    if kind == "null":
        return NullOutput()
    raise _fail(f"{path}.kind", f"unknown output kind {kind!r}")


def output_to_json(output: Optional[AlgorithmOutput]) -> dict:
    if isinstance(output, ScalarOutput):
        return {"kind": "scalar", "value": format_rational(output.value)}
    if isinstance(output, CentersOutput):
        return {
            "kind": "centers",
            "centers": [[format_rational(c) for c in p] for p in output.centers],
        }
    if isinstance(output, CoefficientsOutput):
        return {
            "kind": "coefficients",
            "coefficients": [format_rational(c) for c in output.coefficients],
        }
    return {"kind": "null"}


# =============================================================================
# Scenario schema
# =============================================================================


_PAYLOAD_PARAM_KEYS = ("u_cond", "u_attack", "u_resync", "rows")
_OUTPUT_PARAM_KEYS = ("rho_cond",)


@dataclass(frozen=True)
class Scenario:
    """A fully validated run description."""

    protocol: str
    ell: Optional[int]
    agent_count: int
    algorithm: Algorithm
    algorithm_spec: Mapping[str, object]
    strategies: Mapping[int, Strategy]
    strategy_specs: Mapping[int, Mapping[str, object]]
    ninput: NatureInput
    seed: Optional[int] = None

    @property
    def algorithm_name(self) -> str:
        return str(self.algorithm_spec["name"])

    @property
    def strategy_names(self) -> dict[int, str]:
        return {agent: str(spec["name"]) for agent, spec in self.strategy_specs.items()}


def _require_int(value: object, path: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _fail(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise _fail(path, f"must be at least {minimum}, got {value}")
    return value


def _decode_strategy_params(params: dict, path: str) -> dict:
    decoded = dict(params)
    for key in _PAYLOAD_PARAM_KEYS:
        if key in decoded and isinstance(decoded[key], dict):
            decoded[key] = payload_from_json(decoded[key], f"{path}.{key}")
    for key in _OUTPUT_PARAM_KEYS:
        if key in decoded and isinstance(decoded[key], dict):
            decoded[key] = output_from_json(decoded[key], f"{path}.{key}")
    return decoded


def scenario_from_dict(data: object, source: str = "scenario") -> Scenario:
    """Validate a parsed scenario object; error messages cite field paths."""
    if not isinstance(data, dict):
        raise _fail(source, "expected a JSON object at the top level")
    unknown = set(data) - {
        "protocol", "ell", "agents", "algorithm", "strategies", "nature_input", "seed",
    }
    if unknown:
        raise _fail(source, f"unknown top-level fields: {sorted(unknown)}")

    protocol = data.get("protocol")
    if protocol not in ("continuous", "periodic"):
        raise _fail("protocol", f"expected 'continuous' or 'periodic', got {protocol!r}")

    ell: Optional[int] = None
    if protocol == "continuous":
        ell = _require_int(data.get("ell"), "ell", minimum=1)
    elif data.get("ell") is not None:
        raise _fail("ell", "periodic scenarios do not take an update window")

    agent_count = _require_int(data.get("agents"), "agents", minimum=1)

    raw_algorithm = data.get("algorithm")
    if not isinstance(raw_algorithm, dict) or "name" not in raw_algorithm:
        raise _fail("algorithm", "expected an object with a 'name'")
    algorithm_params = raw_algorithm.get("params") or {}
    if not isinstance(algorithm_params, dict):
        raise _fail("algorithm.params", "expected an object")
    try:
        algorithm = make_algorithm(raw_algorithm["name"], algorithm_params)
    except (ParamError, ValueError) as exc:
        raise _fail("algorithm", str(exc)) from exc
    algorithm_spec = {"name": raw_algorithm["name"], "params": dict(algorithm_params)}

    strategies: dict[int, Strategy] = {}
    strategy_specs: dict[int, dict] = {}
    raw_strategies = data.get("strategies") or {}
    if not isinstance(raw_strategies, dict):
        raise _fail("strategies", "expected an object keyed by agent number")
    for raw_agent, spec in raw_strategies.items():
        path = f"strategies.{raw_agent}"
        try:
            agent = int(raw_agent)
        except (TypeError, ValueError):
            raise _fail(path, "agent keys must be integers") from None
        if not 1 <= agent <= agent_count:
            raise _fail(path, f"agent {agent} outside 1..{agent_count}")
        if not isinstance(spec, dict) or "name" not in spec:
            raise _fail(path, "expected an object with a 'name'")
        params = spec.get("params") or {}
        if not isinstance(params, dict):
            raise _fail(f"{path}.params", "expected an object")
        try:
            strategies[agent] = make_strategy(
                spec["name"], _decode_strategy_params(params, f"{path}.params")
            )
        except (ParamError, PayloadError, ValueError) as exc:
            raise _fail(path, str(exc)) from exc
        strategy_specs[agent] = {"name": spec["name"], "params": dict(params)}

    raw_input = data.get("nature_input")
    if not isinstance(raw_input, list):
        raise _fail("nature_input", "expected a list of elements")
    elements: list[NatureElement] = []
    previous_round: Optional[int] = None
    seen_rounds: set[tuple[int, int]] = set()
    for index, entry in enumerate(raw_input):
        path = f"nature_input[{index}]"
        if not isinstance(entry, dict):
            raise _fail(path, "expected an element object")
        agent = _require_int(entry.get("agent"), f"{path}.agent", minimum=1)
        if agent > agent_count:
            raise _fail(f"{path}.agent", f"agent {agent} outside 1..{agent_count}")
        payload = payload_from_json(entry.get("payload"), f"{path}.payload")
        round_no = entry.get("round")
        if protocol == "continuous":
            if round_no is not None:
                raise _fail(f"{path}.round", "continuous elements do not take rounds")
            elements.append(NatureElement(agent, payload))
            continue
        round_no = _require_int(round_no, f"{path}.round", minimum=1)
        if index == 0 and round_no != 1:
            raise _fail(f"{path}.round", "periodic inputs start at round 1")
        if previous_round is not None and round_no < previous_round:
            raise _fail(f"{path}.round", "rounds must be non-decreasing")
        if (agent, round_no) in seen_rounds:
            raise _fail(path, f"agent {agent} already has an element in round {round_no}")
        seen_rounds.add((agent, round_no))
        previous_round = round_no
        elements.append(NatureElement(agent, payload, round_no))

    seed = data.get("seed")
    if seed is not None:
        seed = _require_int(seed, "seed")

    scenario = Scenario(
        protocol=protocol,
        ell=ell,
        agent_count=agent_count,
        algorithm=algorithm,
        algorithm_spec=algorithm_spec,
        strategies=strategies,
        strategy_specs=strategy_specs,
        ninput=tuple(elements),
        seed=seed,
    )
    _check_regression_start(scenario)
    return scenario


def _spec_to_json(spec: Mapping) -> dict:
    params = dict(spec.get("params") or {})
    if params:
        return {"name": spec["name"], "params": params}
    return {"name": spec["name"]}


def scenario_to_dict(scenario: Scenario) -> dict:
    """Serialize back to the file schema; load(serialize(s)) equals s."""
    elements = []
    for element in scenario.ninput:
        entry: dict = {
            "agent": element.agent,
            "payload": payload_to_json(element.payload),
        }
        if scenario.protocol == "periodic":
            entry["round"] = element.round
        elements.append(entry)
    data: dict = {"protocol": scenario.protocol}
    if scenario.protocol == "continuous":
        data["ell"] = scenario.ell
    data["agents"] = scenario.agent_count
    data["algorithm"] = _spec_to_json(scenario.algorithm_spec)
    data["strategies"] = {
        str(agent): _spec_to_json(spec)
        for agent, spec in sorted(scenario.strategy_specs.items())
    }
    data["nature_input"] = elements
    if scenario.seed is not None:
        data["seed"] = scenario.seed
    return data


def _check_regression_start(scenario: Scenario) -> None:
    """Regression runs must open with rows that pin a unique fit, so every
    later broadcast carries proper coefficients."""
    if not isinstance(scenario.algorithm, DlrAlgorithm) or not scenario.ninput:
        return
    width = scenario.algorithm.d + 1
    first = scenario.ninput[0].payload
    if not isinstance(first, RowMultiset):
        raise PreconditionError(
            "nature_input[0].payload: regression scenarios start with a rows payload"
        )
    if first.rows and first.rows[0].width != width:
        raise PreconditionError(
            f"nature_input[0].payload: rows of width {first.rows[0].width} "
            f"on a {scenario.algorithm.d}-dimensional regression ledger"
        )
    if moments(first.rows, width).gram.det() == 0:
        raise PreconditionError(
            "nature_input[0].payload: the opening rows leave the fit underdetermined"
        )


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Read and validate a scenario file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return scenario_from_dict(data, source=str(path))


def run_scenario(scenario: Scenario) -> Run:
    """Execute the run a scenario describes."""
    return run_protocol(
        scenario.protocol,
        scenario.ninput,
        scenario.strategies,
        scenario.algorithm,
        scenario.agent_count,
        ell=scenario.ell,
    )


# =============================================================================
# Trace emission
# =============================================================================


def trace_records(run: Run) -> list[dict]:
    """One record per transcript message, in run order."""
    records = []
    for seq, message in enumerate(run.messages):
        if isinstance(message, FactualDelivery):
            records.append(
                {
                    "seq": seq,
                    "kind": "factual",
                    "agent": message.agent,
                    "payload": payload_to_json(message.payload),
                }
            )
        elif isinstance(message, LedgerUpdate):
            records.append(
                {
                    "seq": seq,
                    "kind": "ledger",
                    "agent": message.agent,
                    "payload": payload_to_json(message.payload),
                }
            )
        else:
            records.append(
                {
                    "seq": seq,
                    "kind": "broadcast",
                    "agent": None,
                    "payload": output_to_json(message.output),
                }
            )
    return records


def trace_lines(run: Run) -> list[str]:
    """Line-delimited JSON trace, stable byte-for-byte across runs."""
    return [
        json.dumps(record, separators=(",", ":"), sort_keys=False)
        for record in trace_records(run)
    ]
