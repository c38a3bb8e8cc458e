"""Acceptance criteria 1-10, one test each.

Each criterion prints a single PASS/FAIL line (shown in the pytest terminal
summary, or directly when run as ``python3 tests/test_acceptance.py``).
"""

from __future__ import annotations

import itertools
import random
import sys
import tempfile
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import E2E, e2e_config  # noqa: E402
from envmaturity import pipeline  # noqa: E402
from envmaturity.bashfile import (RepairKind, RepairRecord, apply_repair, check_syntax, new_from_template,  # noqa: E402
                                  render, replay)
from envmaturity.bashfile import StackProfile  # noqa: E402
from envmaturity.errors import PatchError  # noqa: E402
from envmaturity.maturity import (Action, ExecOutcome, MaturityState as M, PolicyDecision,  # noqa: E402
                                  max_supported_state, transition)
from envmaturity.mining import CandidateCommand  # noqa: E402
from envmaturity.pyramid import TestPyramid, classify_command, refinement_decision  # noqa: E402
from envmaturity.reasoner import HeuristicProvider  # noqa: E402
from envmaturity.report import summarize  # noqa: E402
from envmaturity.sandbox import engine_available  # noqa: E402

RESULTS: list[str] = []
LEVELS = (M.INSTALLABILITY, M.TESTABILITY, M.RUNNABILITY)


def _report(n: int, title: str, fn, limit: float):
    start = time.monotonic()
    try:
        detail = fn() or ""
        elapsed = time.monotonic() - start
        assert elapsed < limit, f"took {elapsed:.2f}s, limit {limit}s"
    except BaseException as exc:
        if isinstance(exc, pytest.skip.Exception):
            RESULTS.append(f"criterion {n:>2} SKIP  {title}: {exc}")
            raise
        RESULTS.append(f"criterion {n:>2} FAIL  {title}: {exc}")
        raise
    RESULTS.append(f"criterion {n:>2} PASS  {title} ({elapsed:.2f}s){' ' + detail if detail else ''}")


# 1 -----------------------------------------------------------------------------

def _brute_force_s_star(records) -> M:
    """Try every state from the top down; the first whose level holds an exit-0 record wins."""
    for candidate in (M.RUNNABILITY, M.TESTABILITY, M.INSTALLABILITY):
        for lvl, o in records:
            if lvl == candidate and o.exit_code == 0:
                return candidate
    return M.UNCONFIGURED


def criterion_1():
    # per level: every outcome sequence of length 0..4 (exit 0 or 1), in two interleavings
    seqs = [s for n in range(5) for s in itertools.product((0, 1), repeat=n)]
    outcome = {(lvl, code): ExecOutcome(f"c{int(lvl)}", code) for lvl in LEVELS for code in (0, 1)}
    patterns = set()
    checked = 0
    for si, st, sr in itertools.product(seqs, repeat=3):
        per_level = ((M.INSTALLABILITY, si), (M.TESTABILITY, st), (M.RUNNABILITY, sr))
        patterns.add((0 in si, 0 in st, 0 in sr))
        grouped = [(lvl, outcome[lvl, c]) for lvl, seq in per_level for c in seq]
        interleaved = [(lvl, outcome[lvl, seq[pos]]) for pos in range(4)
                       for lvl, seq in reversed(per_level) if pos < len(seq)]
        for order in (grouped, interleaved):
            assert max_supported_state(order) == _brute_force_s_star(order), order
            checked += 1
    assert len(patterns) == 8
    return f"[{checked} histories]"


# 2 -----------------------------------------------------------------------------

def criterion_2():
    n = 0
    for state, sat, action in itertools.product(M, (True, False), list(Action) + [None]):
        result = transition(state, sat, PolicyDecision(action) if action else None)
        assert abs(int(result) - int(state)) <= 1
        effective = action or (Action.ADVANCE if sat else Action.ROLLBACK)
        if effective is Action.ADVANCE:
            expected = M(min(int(state) + 1, int(M.RUNNABILITY)))
        elif effective is Action.ROLLBACK:
            expected = M(max(int(state) - 1, int(M.UNCONFIGURED)))
        else:
            expected = state
        assert result is expected, (state, sat, action, result)
        n += 1
    return f"[{n} pairs]"


# 3 -----------------------------------------------------------------------------

CANONICAL = [
    ("pip install -r requirements.txt", M.INSTALLABILITY),
    ("npm install", M.INSTALLABILITY),
    ("mvn install", M.INSTALLABILITY),
    ("pytest", M.TESTABILITY),
    ("python -m pytest tests/", M.TESTABILITY),
    ("node --version", M.TESTABILITY),
    ("./build/mpv --version", M.TESTABILITY),
    ("python main.py", M.RUNNABILITY),
    ("npm start", M.RUNNABILITY),
    ("./build/mpv sample.mkv", M.RUNNABILITY),
]


def criterion_3():
    provider = HeuristicProvider()
    wrong = [(cmd, classify_command(CandidateCommand(cmd), provider).level) for cmd, lvl in CANONICAL
             if classify_command(CandidateCommand(cmd), provider).level is not lvl]
    assert not wrong, wrong
    return f"[{len(CANONICAL)}/{len(CANONICAL)}]"


# 4 -----------------------------------------------------------------------------

def criterion_4():
    cmd = {M.INSTALLABILITY: "pip install .", M.TESTABILITY: "pytest", M.RUNNABILITY: "python main.py"}
    rows = 0
    for ni, nt, nr, exhausted in itertools.product((0, 1), (0, 1), (0, 1), (True, False)):
        p = TestPyramid(
            installability=(CandidateCommand(cmd[M.INSTALLABILITY]),) * ni,
            testability=(CandidateCommand(cmd[M.TESTABILITY]),) * nt,
            runnability=(CandidateCommand(cmd[M.RUNNABILITY]),) * nr,
        )
        max_rounds = 5
        verdict = refinement_decision(p, max_rounds if exhausted else 2, max_rounds)
        # accomplished: budget reached, or runnability plus at least one testability and one installability
        expected = exhausted or (nr == 1 and nt == 1 and ni == 1)
        # not accomplished: no runnability, or runnability with neither of the other two
        if not exhausted and (nr == 0 or (nt == 0 and ni == 0)):
            assert not expected
        assert verdict.accomplished is expected, (ni, nt, nr, exhausted, verdict)
        rows += 1
    return f"[{rows} rows]"


# 5 -----------------------------------------------------------------------------

TERMINAL = {
    "py_install_only": M.INSTALLABILITY,
    "py_testable": M.TESTABILITY,
    "py_runnable": M.RUNNABILITY,
    "node_flaky_install": M.RUNNABILITY,  # first installation fails, second succeeds
    "node_npm_start": M.RUNNABILITY,  # npm start fails five times
    "meson_player": M.RUNNABILITY,
    "py_rollback": M.TESTABILITY,
}


def criterion_5():
    with tempfile.TemporaryDirectory() as tmp:
        for name, expected in TERMINAL.items():
            result = pipeline.run(e2e_config(name, Path(tmp) / name))
            assert result.report.final_state is expected, (name, result.report.final_state)
            golden = (E2E / name / "expected.trace").read_text(encoding="utf-8")
            assert result.report.render_trace() == golden, f"{name}: trace differs from golden"
            if name == "node_flaky_install":
                execs = [s for s in result.report.trajectory if s.phase.value == "execution_loop"]
                assert [s.outcome.success for s in execs[:2]] == [False, True]
            if name == "node_npm_start":
                starts = [s for s in result.report.trajectory if s.command_or_action == "npm start"]
                assert [s.outcome.success for s in starts] == [False] * 5 + [True]
    return f"[{len(TERMINAL)} fixtures]"


# 6 -----------------------------------------------------------------------------

_PROFILES = [StackProfile(), StackProfile(("python",), ("requirements.txt",)),
             StackProfile(("javascript",), ("package.json",)), StackProfile(("c",), ("meson.build",)),
             StackProfile(("java",), ("pom.xml",))]
_LINES = ["apt_install libass-dev", "python3 -m pip install requests", "npm install express",
          'export API_KEY="${API_KEY:-placeholder}"', "mkdir -p data && touch data/x.csv",
          "echo 'quoted; text'", "make -j2", "[ -d build ] || meson setup build", "ln -sf a b"]


def random_sequence(rng: random.Random, bf, steps: int):
    for _ in range(steps):
        kind = rng.choice(list(RepairKind))
        ids = [ln.line_id for sid, ln in bf.all_lines() if sid >= 3]
        if kind is RepairKind.APPEND_LINE or not ids:
            action = RepairRecord(RepairKind.APPEND_LINE, rng.randint(3, 6), rng.choice(_LINES), "prop")
        elif kind is RepairKind.REPLACE_LINE:
            action = RepairRecord(kind, rng.choice(ids), rng.choice(_LINES), "prop")
        else:
            action = RepairRecord(kind, rng.choice(ids), None, "prop")
        try:
            bf = apply_repair(bf, action)
        except PatchError:
            continue
    return bf


def criterion_6():
    rng = random.Random(20240501)
    scripts = []
    for _ in range(1000):
        bf = random_sequence(rng, new_from_template(rng.choice(_PROFILES)), rng.randint(0, 12))
        text = render(bf)
        assert render(replay(bf)) == text
        scripts.append(text)
    # one bash -n per distinct render keeps the check exhaustive but fast
    distinct = set(scripts)
    for text in distinct:
        assert check_syntax(text) is None, text
    return f"[1000 sequences, {len(distinct)} distinct renders]"


# 7 -----------------------------------------------------------------------------

def criterion_7():
    with tempfile.TemporaryDirectory() as tmp:
        for mode, limit, total in (("hybrid", 100, 200), ("whole-script", 100, 200), ("single-command", 125, 250)):
            rep = pipeline.run(e2e_config("always_fail", Path(tmp) / mode, repair_mode=mode)).report
            execs = sum(1 for s in rep.trajectory if s.phase.value == "execution_loop")
            assert execs == limit, (mode, execs)
            assert rep.steps_used <= total and len(rep.trajectory) <= total
            assert rep.exhausted and rep.final_state is M.UNCONFIGURED
    return "[100/200, 100/200, 125/250]"


# 8 -----------------------------------------------------------------------------

def criterion_8():
    names = [n for n in TERMINAL]
    with tempfile.TemporaryDirectory() as tmp:
        for name in names:
            rep = pipeline.run(e2e_config(name, Path(tmp) / f"nf-{name}", feedback=False)).report
            assert rep.repairs_applied == 0, name
            assert not [s for s in rep.trajectory if s.phase.value == "repair"], name
            for mode, banned in (("whole-script", "single-command"), ("single-command", "whole-script")):
                rep = pipeline.run(e2e_config(name, Path(tmp) / f"{mode}-{name}", repair_mode=mode)).report
                modes = {s.plan_mode for s in rep.trajectory if s.phase.value == "repair"}
                assert banned not in modes, (name, mode, modes)
    return f"[{len(names)} fixtures x 3 configurations]"


# 9 -----------------------------------------------------------------------------

def criterion_9():
    a = [(f"a{i}", M.INSTALLABILITY) for i in range(2)] + [(f"a{i}", M.TESTABILITY) for i in range(2, 36)]
    s = summarize(a)
    assert s.counts["installable"] == 36 and s.counts["testable"] == 34
    assert abs(100 * s.retention["installable->testable"] - 94.4) <= 0.05
    b = [(f"b{i}", M.TESTABILITY) for i in range(55)] + [(f"b{i}", M.RUNNABILITY) for i in range(55, 110)]
    s = summarize(b)
    assert s.counts["testable"] == 110 and s.counts["runnable"] == 55
    assert abs(100 * s.retention["testable->runnable"] - 50.0) <= 0.05
    return "[94.44%, 50.00%]"


# 10 ----------------------------------------------------------------------------

TOY_FILES = {
    "requirements.txt": "pytest\n",
    "main.py": "from toy.core import greet\n\nif __name__ == '__main__':\n    print(greet('world'))\n",
    "toy/__init__.py": "",
    "toy/core.py": "def greet(name):\n    return f'hello {name}'\n",
    "tests/__init__.py": "",
    "tests/test_core.py": "from toy.core import greet\n\n\ndef test_greet():\n    assert greet('x') == 'hello x'\n",
    "README.md": "# toy\n\n```bash\npip install -r requirements.txt\npython -m pytest -q\npython main.py\n```\n",
    "setup.cfg": "[tool:pytest]\ntestpaths = tests\n",
    ".gitignore": "__pycache__/\n",
    "LICENSE": "MIT\n",
}


def criterion_10():
    if not engine_available():
        pytest.skip("no container engine reachable")
    with tempfile.TemporaryDirectory() as tmp:
        repo = Path(tmp) / "toy"
        for rel, text in TOY_FILES.items():
            (repo / rel).parent.mkdir(parents=True, exist_ok=True)
            (repo / rel).write_text(text, encoding="utf-8")
        assert len(TOY_FILES) == 10
        cfg = pipeline.RunConfig(repo=str(repo), output_dir=str(Path(tmp) / "out"), base_image="python:3.11-slim")
        rep = pipeline.run(cfg).report
        assert rep.final_state is M.RUNNABILITY, rep.render_trace()
    return ""


@pytest.mark.parametrize("n,title,fn,limit", [
    (1, "state-machine oracle equivalence", criterion_1, 1.0),
    (2, "transition contract", criterion_2, 1.0),
    (3, "classification of canonical commands", criterion_3, 1.0),
    (4, "refinement truth table", criterion_4, 1.0),
    (5, "end-to-end simulated deployments vs golden traces", criterion_5, 30.0),
    (6, "script replay property + syntax check", criterion_6, 60.0),
    (7, "budget enforcement", criterion_7, 10.0),
    (8, "ablation observability", criterion_8, 30.0),
    (9, "retention arithmetic", criterion_9, 1.0),
    pytest.param(10, "live-engine smoke test", criterion_10, 300.0, marks=pytest.mark.engine),
], ids=[f"criterion_{i}" for i in range(1, 11)])
def test_criterion(n, title, fn, limit):
    _report(n, title, fn, limit)


if __name__ == "__main__":
    failed = 0
    for n, title, fn, limit in [
        (1, "state-machine oracle equivalence", criterion_1, 1.0),
        (2, "transition contract", criterion_2, 1.0),
        (3, "classification of canonical commands", criterion_3, 1.0),
        (4, "refinement truth table", criterion_4, 1.0),
        (5, "end-to-end simulated deployments vs golden traces", criterion_5, 30.0),
        (6, "script replay property + syntax check", criterion_6, 60.0),
        (7, "budget enforcement", criterion_7, 10.0),
        (8, "ablation observability", criterion_8, 30.0),
        (9, "retention arithmetic", criterion_9, 1.0),
        (10, "live-engine smoke test", criterion_10, 300.0),
    ]:
        try:
            _report(n, title, fn, limit)
        except pytest.skip.Exception:
            pass
        except BaseException:
            failed += 1
        print(RESULTS[-1])
    sys.exit(1 if failed else 0)
