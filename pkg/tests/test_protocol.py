"""The continuous and periodic message-passing engines."""

from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exclusim.algorithms import (
    MaxAlgorithm,
    NullOutput,
    PayloadError,
    PointSet,
    Scalar,
    ScalarOutput,
)
from exclusim.protocol import (
    FactualDelivery,
    InputError,
    KIND_FACTUAL,
    KIND_LEDGER,
    LedgerUpdate,
    NatureElement,
    OutputBroadcast,
    SAFETY_CAP_ENV,
    SafetyCapExceededError,
    broadcast_pairing_ok,
    ell_guard_respected,
    extract,
    observed_history,
    replay_matches,
    run_protocol,
    truthful_strategy,
    validate_periodic_input,
)


def _scalar_input(*pairs) -> tuple[NatureElement, ...]:
    return tuple(NatureElement(agent, Scalar(Fraction(v))) for agent, v in pairs)


def _rounds_input(*triples) -> tuple[NatureElement, ...]:
    return tuple(
        NatureElement(agent, Scalar(Fraction(v)), r) for agent, v, r in triples
    )


def _always_bid(value):
    bid = Scalar(Fraction(value))

    def strategy(o):
        return bid

    return strategy


# =============================================================================
# continuous engine
# =============================================================================


def test_truthful_continuous_run_shape():
    run = run_protocol(
        "continuous", _scalar_input((1, 5), (2, 7)), {}, MaxAlgorithm(), 2, ell=1
    )
    kinds = [type(m).__name__ for m in run.messages]
    assert kinds == [
        "FactualDelivery",
        "LedgerUpdate",
        "OutputBroadcast",
        "FactualDelivery",
        "LedgerUpdate",
        "OutputBroadcast",
    ]
    assert run.final_output() == ScalarOutput(Fraction(7))


def test_every_ledger_update_is_followed_by_a_broadcast():
    run = run_protocol(
        "continuous",
        _scalar_input((1, 5), (2, 7), (1, 3)),
        {2: _always_bid(10)},
        MaxAlgorithm(),
        2,
        ell=2,
    )
    assert broadcast_pairing_ok(run)


def test_ell_guard_blocks_repeat_author():
    # A strategy that always wants to update gets exactly ell turns in a row.
    run = run_protocol(
        "continuous", _scalar_input((1, 5)), {2: _always_bid(9)}, MaxAlgorithm(), 2, ell=1
    )
    authors = [m.agent for m in run.messages if isinstance(m, LedgerUpdate)]
    assert authors == [1, 2]
    assert ell_guard_respected(run)


def test_ell_guard_allows_window_of_two():
    run = run_protocol(
        "continuous", _scalar_input((1, 5)), {2: _always_bid(9)}, MaxAlgorithm(), 2, ell=2
    )
    authors = [m.agent for m in run.messages if isinstance(m, LedgerUpdate)]
    assert authors == [1, 2, 2]
    assert ell_guard_respected(run)


def test_guard_applies_with_empty_prior_ledger():
    # No prior updates at all: the guard cannot have been tripped yet.
    run = run_protocol(
        "continuous", _scalar_input((1, 5)), {}, MaxAlgorithm(), 1, ell=1
    )
    assert extract(run, KIND_LEDGER, 1) == (Scalar(Fraction(5)),)


def test_consecutive_elements_same_agent_suppressed_at_ell_one():
    # The second truthful echo would be a second consecutive update by the
    # same author, so at ell=1 it is silently dropped.
    run = run_protocol(
        "continuous", _scalar_input((2, 90), (2, 100)), {}, MaxAlgorithm(), 2, ell=1
    )
    assert extract(run, KIND_LEDGER) == (Scalar(Fraction(90)),)
    assert run.final_output() == ScalarOutput(Fraction(90))


def test_safety_cap_stops_runaway_loop():
    def chatty(o):
        return Scalar(Fraction(len(o.items)))

    with pytest.raises(SafetyCapExceededError):
        run_protocol(
            "continuous",
            _scalar_input((2, 1)),
            {1: chatty, 2: chatty},
            MaxAlgorithm(),
            2,
            ell=1,
            safety_cap=50,
        )


def test_safety_cap_env_override(monkeypatch):
    def chatty(o):
        return Scalar(Fraction(len(o.items)))

    monkeypatch.setenv(SAFETY_CAP_ENV, "50")
    with pytest.raises(SafetyCapExceededError):
        run_protocol(
            "continuous",
            _scalar_input((2, 1)),
            {1: chatty, 2: chatty},
            MaxAlgorithm(),
            2,
            ell=1,
        )

    monkeypatch.setenv(SAFETY_CAP_ENV, "zero")
    with pytest.raises(InputError):
        run_protocol("continuous", _scalar_input((2, 1)), {}, MaxAlgorithm(), 2, ell=1)


def test_continuous_rejects_rounds_and_bad_agents():
    with pytest.raises(InputError):
        run_protocol(
            "continuous", _rounds_input((1, 5, 1)), {}, MaxAlgorithm(), 2, ell=1
        )
    with pytest.raises(InputError):
        run_protocol(
            "continuous", _scalar_input((3, 5)), {}, MaxAlgorithm(), 2, ell=1
        )
    with pytest.raises(InputError):
        run_protocol("continuous", (), {}, MaxAlgorithm(), 2)


# =============================================================================
# periodic engine
# =============================================================================


def test_periodic_round_shape():
    run = run_protocol(
        "periodic", _rounds_input((1, 90, 1), (2, 90, 1)), {}, MaxAlgorithm(), 2
    )
    kinds = [type(m).__name__ for m in run.messages]
    assert kinds == [
        "FactualDelivery",
        "FactualDelivery",
        "LedgerUpdate",
        "LedgerUpdate",
        "OutputBroadcast",
    ]


def test_periodic_empty_round_still_broadcasts():
    run = run_protocol(
        "periodic", _rounds_input((1, 5, 1), (2, 7, 3)), {}, MaxAlgorithm(), 2
    )
    broadcasts = [m for m in run.messages if isinstance(m, OutputBroadcast)]
    assert len(broadcasts) == 3
    assert broadcasts[1].output == ScalarOutput(Fraction(5))
    assert run.final_output() == ScalarOutput(Fraction(7))


def test_periodic_empty_input_is_empty_run():
    run = run_protocol("periodic", (), {}, MaxAlgorithm(), 2)
    assert run.messages == ()
    assert run.final_output() is None


def test_periodic_null_broadcast_when_no_updates():
    def silent(o):
        return None

    run = run_protocol(
        "periodic", _rounds_input((1, 5, 1)), {1: silent}, MaxAlgorithm(), 2
    )
    assert run.final_output() == NullOutput()


def test_periodic_validation_rules():
    with pytest.raises(InputError):
        validate_periodic_input(_rounds_input((1, 5, 2), (2, 7, 1)), 2)
    with pytest.raises(InputError):
        validate_periodic_input(_rounds_input((1, 5, 0)), 2)
    with pytest.raises(InputError):
        validate_periodic_input(_rounds_input((1, 5, 1), (1, 7, 1)), 2)
    with pytest.raises(InputError):
        validate_periodic_input(_scalar_input((1, 5)), 2)


def test_periodic_one_poll_no_guard():
    # In rounds there is no update window: the same agent may update every round.
    run = run_protocol(
        "periodic", _rounds_input((1, 5, 1), (1, 7, 2), (1, 9, 3)), {}, MaxAlgorithm(), 1
    )
    authors = [m.agent for m in run.messages if isinstance(m, LedgerUpdate)]
    assert authors == [1, 1, 1]


# =============================================================================
# observed histories and replay
# =============================================================================


def test_observed_history_projects_own_messages_and_broadcasts():
    run = run_protocol(
        "continuous", _scalar_input((1, 5), (2, 7)), {}, MaxAlgorithm(), 2, ell=1
    )
    view = observed_history(run, 2)
    kinds = [type(m).__name__ for m in view.items]
    assert kinds == [
        "OutputBroadcast",
        "FactualDelivery",
        "LedgerUpdate",
        "OutputBroadcast",
    ]
    assert all(
        m.agent == 2 for m in view.items if isinstance(m, (FactualDelivery, LedgerUpdate))
    )


def test_truthful_strategy_fires_only_on_own_fresh_factual():
    run = run_protocol(
        "continuous", _scalar_input((1, 5)), {}, MaxAlgorithm(), 2, ell=1
    )
    after_factual = observed_history(run, 1, upto=1)
    assert truthful_strategy(after_factual) == Scalar(Fraction(5))
    after_broadcast = observed_history(run, 1)
    assert truthful_strategy(after_broadcast) is None


def test_replay_matches_truthful_run():
    run = run_protocol(
        "continuous", _scalar_input((1, 5), (2, 7), (1, 2)), {}, MaxAlgorithm(), 2, ell=1
    )
    assert replay_matches(run, {})


def test_determinism_identical_transcripts():
    ninput = _scalar_input((1, 5), (2, 7), (1, 2))
    first = run_protocol("continuous", ninput, {}, MaxAlgorithm(), 2, ell=1)
    for _ in range(3):
        again = run_protocol("continuous", ninput, {}, MaxAlgorithm(), 2, ell=1)
        assert again.messages == first.messages


def test_extract_filters_by_kind_and_agent():
    run = run_protocol(
        "continuous", _scalar_input((1, 5), (2, 7)), {}, MaxAlgorithm(), 2, ell=1
    )
    assert extract(run, KIND_FACTUAL, 1) == (Scalar(Fraction(5)),)
    assert extract(run, KIND_LEDGER) == (Scalar(Fraction(5)), Scalar(Fraction(7)))


def test_payload_kind_mismatch_propagates():
    # A points payload on a scalar algorithm is a scenario bug, not a
    # legitimate empty-ledger state, so the engine does not mask it.
    ninput = (NatureElement(1, PointSet(((Fraction(1),), (Fraction(2),)))),)
    with pytest.raises(PayloadError):
        run_protocol("continuous", ninput, {}, MaxAlgorithm(), 1, ell=1)


@given(
    pairs=st.lists(
        st.tuples(
            st.integers(min_value=1, max_value=3), st.integers(min_value=-50, max_value=50)
        ),
        min_size=1,
        max_size=6,
    ),
    ell=st.integers(min_value=1, max_value=3),
)
@settings(max_examples=80, deadline=None)
def test_truthful_runs_satisfy_engine_invariants(pairs, ell):
    ninput = _scalar_input(*pairs)
    run = run_protocol("continuous", ninput, {}, MaxAlgorithm(), 3, ell=ell)
    assert ell_guard_respected(run)
    assert broadcast_pairing_ok(run)
    assert replay_matches(run, {})
    values = [v for _, v in pairs]
    final = run.final_output()
    # The final broadcast, when present, is the max over the echoed prefix.
    if final is not None:
        assert isinstance(final, ScalarOutput)
        assert final.value <= max(values)
