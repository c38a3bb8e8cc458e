import json

import pytest
from hypothesis import given, strategies as st

from envmaturity.errors import ValidationError
from envmaturity.maturity import MaturityState as M
from envmaturity.report import load_report, retention_key, summarize, validate_report

LABELS = [s.label for s in M]


@given(st.lists(st.sampled_from(list(M)), max_size=60))
def test_funnel_is_monotone(states):
    s = summarize([(f"r{i}", st_) for i, st_ in enumerate(states)])
    c = s.counts
    assert len(states) >= c["installable"] >= c["testable"] >= c["runnable"]
    assert all(0.0 <= v <= 1.0 for v in s.retention.values())
    chain = [len(states), c["installable"], c["testable"], c["runnable"]]
    for (lo, hi), (a, b) in zip([(M(0), M(1)), (M(1), M(2)), (M(2), M(3))], zip(chain, chain[1:])):
        assert s.retention[retention_key(lo, hi)] == (b / a if a else 0.0)


def test_all_unconfigured():
    s = summarize([("a", M.UNCONFIGURED), ("b", M.UNCONFIGURED)])
    assert s.counts == {"installable": 0, "testable": 0, "runnable": 0}
    assert set(s.retention.values()) == {0.0} and s.pass_at_k == {1: 0.0}


def test_empty_input():
    s = summarize([])
    assert s.total == 0 and s.counts == {"installable": 0, "testable": 0, "runnable": 0}
    assert set(s.retention.values()) == {0.0} and s.pass_at_k == {1: 0.0}


def test_retention_values():
    states = [M.RUNNABILITY] * 2 + [M.TESTABILITY] * 2 + [M.INSTALLABILITY] * 4 + [M.UNCONFIGURED] * 2
    s = summarize([(f"r{i}", x) for i, x in enumerate(states)])
    assert s.retention == {"unconfigured->installable": 0.8, "installable->testable": 0.5,
                           "testable->runnable": 0.5}


def test_pass_at_k_groups_by_repo():
    runs = [("a", M.TESTABILITY), ("a", M.RUNNABILITY), ("b", M.RUNNABILITY), ("c", M.UNCONFIGURED),
            ("c", M.INSTALLABILITY), ("c", M.RUNNABILITY)]
    s = summarize(runs, (1, 2, 3))
    assert s.pass_at_k == {1: pytest.approx(1 / 3), 2: pytest.approx(2 / 3), 3: 1.0}
    assert s.per_repo["c"] == ["unconfigured", "installable", "runnable"]
    assert summarize(runs, (1,), M.TESTABILITY).pass_at_k[1] == pytest.approx(2 / 3)


def test_pass_at_k_monotone_in_k():
    runs = [("a", M.UNCONFIGURED), ("a", M.RUNNABILITY), ("b", M.TESTABILITY)]
    p = summarize(runs, (1, 2, 5)).pass_at_k
    assert p[1] <= p[2] <= p[5]


def test_bad_k():
    with pytest.raises(ValueError):
        summarize([("a", M.RUNNABILITY)], (0,))


def test_accepts_dicts_and_labels():
    s = summarize([{"repo": "x", "final_state": "testable"}, ("y", "runnable"), ("z", 1)])
    assert s.counts == {"installable": 3, "testable": 2, "runnable": 1}


def test_summary_json():
    data = json.loads(summarize([("a", M.RUNNABILITY)], (1, 3)).to_json())
    assert data["pass_at_k"] == {"1": 1.0, "3": 1.0} and data["target_level"] == "runnable"


GOOD = {"schema": 1, "repo": "r", "final_state": "installable", "repairs_applied": 0, "steps_used": 2,
        "wall_time": 0.1, "trajectory": [
            {"index": 1, "phase": "execution_loop", "command_or_action": "bash setup.sh",
             "state_before": "unconfigured", "state_after": "installable",
             "outcome": {"command": "bash setup.sh", "exit_code": 0}, "level": None},
            {"index": 2, "phase": "feedback_loop", "command_or_action": "pip install .",
             "state_before": "installable", "state_after": "testable",
             "outcome": {"command": "pip install .", "exit_code": 0}, "level": "installable"}]}


def test_valid_report_loads(tmp_path):
    p = tmp_path / "report.json"
    p.write_text(json.dumps(GOOD))
    r = load_report(p)
    assert r.final_state is M.INSTALLABILITY and len(r.trajectory) == 2


@pytest.mark.parametrize("mutate,where", [
    (lambda d: d.pop("trajectory"), "trajectory"),
    (lambda d: d.update(schema=2), "schema"),
    (lambda d: d.update(final_state="done"), "final_state"),
    (lambda d: d["trajectory"][1].update(phase="celebration"), "$.trajectory[1].phase"),
    (lambda d: d["trajectory"][0].update(index=0), "$.trajectory[0].index"),
    (lambda d: d.update(steps_used=-1), "steps_used"),
])
def test_schema_errors_name_the_field(mutate, where):
    d = json.loads(json.dumps(GOOD))
    mutate(d)
    with pytest.raises(ValidationError, match=__import__("re").escape(where)):
        validate_report(d, "r.json")


def test_not_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(ValidationError, match="not JSON"):
        load_report(p)
