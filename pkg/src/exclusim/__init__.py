"""exclusim: exact-arithmetic simulation of shared-ledger aggregation
protocols and the misreporting attacks they admit.

The package has five layers:

- `numerics`: rational linear algebra (matrices over `fractions.Fraction`).
- `algorithms`: update payloads, algorithm outputs, and the aggregation
  algorithms (max, average, k-center, k-median, linear regression).
- `protocol`: the continuous and periodic message-passing engines, runs,
  observed histories, and the truthful baseline strategy.
- `strategies`: attack strategies (swap-and-repair, probing, the probe
  ladder), their inference functions, and run classification.
- `harness`: paired-run verdicts, seeded scenario generators, inference
  certification, and confounding-witness construction.

`scenario` and `cli` add JSON scenario files, trace emission, and the
command-line entry point.
"""

from __future__ import annotations

from .algorithms import (
    Algorithm,
    AlgorithmOutput,
    AverageAlgorithm,
    CentersOutput,
    CoefficientsOutput,
    DlrAlgorithm,
    Empty,
    KCenterAlgorithm,
    KMedianAlgorithm,
    MaxAlgorithm,
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
)
from .harness import (
    ConfoundingWitness,
    GeneratedCase,
    NotApplicableError,
    PairedVerdict,
    certify_attack,
    check_condition_i,
    check_condition_i_star,
    find_confounding_pair,
    forceable_winner_set,
    periodic_kcenter_omission_confounder,
    periodic_lambda_confounder,
    verify_inference,
)
from .protocol import (
    FactualDelivery,
    LedgerUpdate,
    NatureElement,
    NatureInput,
    ObservedHistory,
    OutputBroadcast,
    Run,
    SafetyCapExceededError,
    Strategy,
    observed_history,
    run_protocol,
    truthful_strategy,
)
from .scenario import (
    PreconditionError,
    Scenario,
    ValidationError,
    load_scenario,
    run_scenario,
    scenario_from_dict,
    scenario_to_dict,
    trace_lines,
)
from .strategies import (
    InferenceError,
    SneakParams,
    StrategyClass,
    average_double_probe,
    average_infer,
    classify_strategy_run,
    kcenter_sneak_params,
    lr_sneak_params,
    make_strategy,
    max_echo_attack,
    max_infer,
    max_overbid,
    sneak_attack,
    triangulation_attack,
    triangulation_infer,
)

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "AlgorithmOutput",
    "AverageAlgorithm",
    "CentersOutput",
    "CoefficientsOutput",
    "ConfoundingWitness",
    "DlrAlgorithm",
    "Empty",
    "FactualDelivery",
    "GeneratedCase",
    "InferenceError",
    "KCenterAlgorithm",
    "KMedianAlgorithm",
    "LedgerUpdate",
    "MaxAlgorithm",
    "NatureElement",
    "NatureInput",
    "NotApplicableError",
    "NullOutput",
    "ObservedHistory",
    "OutputBroadcast",
    "PairedVerdict",
    "ParamError",
    "PayloadError",
    "PointSet",
    "PreconditionError",
    "Row",
    "RowMultiset",
    "Run",
    "SafetyCapExceededError",
    "Scalar",
    "ScalarOutput",
    "Scenario",
    "SneakParams",
    "Strategy",
    "StrategyClass",
    "UpdatePayload",
    "ValidationError",
    "average_double_probe",
    "average_infer",
    "certify_attack",
    "check_condition_i",
    "check_condition_i_star",
    "classify_strategy_run",
    "find_confounding_pair",
    "forceable_winner_set",
    "kcenter_sneak_params",
    "load_scenario",
    "lr_sneak_params",
    "make_algorithm",
    "make_strategy",
    "max_echo_attack",
    "max_infer",
    "max_overbid",
    "observed_history",
    "periodic_kcenter_omission_confounder",
    "periodic_lambda_confounder",
    "run_protocol",
    "run_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "sneak_attack",
    "trace_lines",
    "triangulation_attack",
    "triangulation_infer",
    "truthful_strategy",
]
