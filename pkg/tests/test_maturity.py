import itertools

import pytest
from hypothesis import given, strategies as st

from envmaturity.maturity import (Action, ExecOutcome, MaturityState as M, Ordering, PolicyDecision, StateHistory,
                                  aggregate_exec, compare, default_decision, max_supported_state, transition,
                                  truncate_stream)


def ok(cmd="c"):
    return ExecOutcome(cmd, 0)


def bad(cmd="c", code=1):
    return ExecOutcome(cmd, code)


def test_order_and_labels():
    assert M.UNCONFIGURED < M.INSTALLABILITY < M.TESTABILITY < M.RUNNABILITY
    assert [s.label for s in M] == ["unconfigured", "installable", "testable", "runnable"]
    assert M.from_label("Testable") is M.TESTABILITY
    assert M.from_label("runnability") is M.RUNNABILITY
    with pytest.raises(ValueError):
        M.from_label("deployable")


def test_successor_predecessor_boundaries():
    assert M.RUNNABILITY.successor() is None
    assert M.UNCONFIGURED.predecessor() is None
    assert M.INSTALLABILITY.successor() is M.TESTABILITY


def test_compare():
    assert compare(M.INSTALLABILITY, M.RUNNABILITY) is Ordering.LESS
    assert compare(M.RUNNABILITY, M.RUNNABILITY) is Ordering.EQUAL
    assert compare(M.TESTABILITY, M.UNCONFIGURED) is Ordering.GREATER


@pytest.mark.parametrize("code,expected", [(0, True), (1, False), (2, False), (124, False), (127, False), (-9, False)])
def test_exec_oracle_is_exit_zero(code, expected):
    assert ExecOutcome("x", code).success is expected


def test_aggregate_any_success():
    assert aggregate_exec([bad(), ok()]) is True
    assert aggregate_exec([bad(), bad()]) is False
    assert aggregate_exec([]) is False


def test_timeout_cannot_be_success():
    with pytest.raises(ValueError):
        ExecOutcome("x", 0, timed_out=True)
    out = ExecOutcome.capture("x", 0, "", "", timed_out=True)
    assert out.exit_code == 124 and not out.success


def test_truncation_keeps_tail():
    text = "a" * 100 + "THE ERROR"
    cut, truncated = truncate_stream(text, cap=20)
    assert truncated and cut.endswith("THE ERROR"[-10:])
    same, t = truncate_stream("short", cap=20)
    assert same == "short" and not t
    o = ExecOutcome.capture("x", 1, "o" * 50, "e" * 50, cap=10)
    assert o.truncated


def test_outcome_roundtrip():
    o = ExecOutcome("pytest", 2, "out", "err", 15, False, False)
    assert ExecOutcome.from_dict(o.to_dict()) == o


# transition examples
@pytest.mark.parametrize("state,sat,action,expected", [
    (M.INSTALLABILITY, True, Action.ADVANCE, M.TESTABILITY),
    (M.RUNNABILITY, True, Action.ADVANCE, M.RUNNABILITY),
    (M.TESTABILITY, False, Action.ROLLBACK, M.INSTALLABILITY),
    (M.UNCONFIGURED, False, Action.ROLLBACK, M.UNCONFIGURED),
    (M.TESTABILITY, False, Action.STAY, M.TESTABILITY),
])
def test_transition_examples(state, sat, action, expected):
    assert transition(state, sat, PolicyDecision(action)) is expected


def test_default_policy_is_advance_iff_satisfied():
    assert default_decision(True).action is Action.ADVANCE
    assert default_decision(False).action is Action.ROLLBACK
    assert transition(M.TESTABILITY, True) is M.RUNNABILITY
    assert transition(M.TESTABILITY, False) is M.INSTALLABILITY


def test_max_supported_examples():
    assert max_supported_state([]) is M.UNCONFIGURED
    assert max_supported_state([(M.INSTALLABILITY, ok()), (M.TESTABILITY, bad())]) is M.INSTALLABILITY
    # a level counts even when lower levels never succeeded
    assert max_supported_state([(M.INSTALLABILITY, bad()), (M.RUNNABILITY, ok())]) is M.RUNNABILITY


def test_history_rejects_unconfigured_level():
    h = StateHistory()
    with pytest.raises(ValueError):
        h.record(M.UNCONFIGURED, ok())
    h.record(M.TESTABILITY, ok("pytest"))
    assert h.succeeded("pytest") and not h.succeeded("npm test") and len(h) == 1


levels = st.sampled_from([M.INSTALLABILITY, M.TESTABILITY, M.RUNNABILITY])
records = st.lists(st.tuples(levels, st.integers(min_value=-1, max_value=3)), max_size=12)


@given(records)
def test_max_supported_monotone_under_appends(recs):
    history = [(lvl, ExecOutcome("c", code)) for lvl, code in recs]
    prev = M.UNCONFIGURED
    for i in range(len(history) + 1):
        cur = max_supported_state(history[:i])
        assert cur >= prev
        prev = cur


@given(records)
def test_max_supported_order_independent(recs):
    history = [(lvl, ExecOutcome("c", code)) for lvl, code in recs]
    assert max_supported_state(history) == max_supported_state(list(reversed(history)))


def test_transition_exhaustive_cross_product():
    for state, sat, action in itertools.product(M, (True, False), list(Action) + [None]):
        decision = PolicyDecision(action) if action else None
        nxt = transition(state, sat, decision)
        assert abs(int(nxt) - int(state)) <= 1
