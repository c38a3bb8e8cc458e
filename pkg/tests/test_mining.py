import pytest
from hypothesis import given, strategies as st

from envmaturity.maturity import MaturityState as M
from envmaturity.mining import CandidateCommand, classify_by_rules, extract_commands, filter_command


def texts(snippet, path="README.md"):
    return [c.text for c in extract_commands(snippet, path)]


def test_fenced_block_in_order():
    assert texts("Intro\n\n```bash\npip install -e .\npytest\n```\n") == ["pip install -e .", "pytest"]


def test_dedup_keeps_first_position():
    snippet = "```\npytest\n```\n\n```\nmake\npytest\n```\n    $ pytest\n"
    assert texts(snippet) == ["pytest", "make"]


def test_prose_only():
    assert texts("This project does things.\nRun the tests somehow.\n") == []


def test_prompt_lines_and_spans():
    cmds = extract_commands("Setup:\n\n    $ pip install -r requirements.txt\n", "README.md", 2)
    assert [c.text for c in cmds] == ["pip install -r requirements.txt"]
    assert cmds[0].source_span == (3, 3) and cmds[0].extraction_round == 2 and cmds[0].source_path == "README.md"


def test_ci_run_entries():
    wf = "jobs:\n  t:\n    steps:\n      - uses: actions/checkout@v4\n      - run: pip install .\n      - run: |\n          pytest -q\n          python -m build\n"
    assert texts(wf, ".github/workflows/ci.yml") == ["pip install .", "pytest -q", "python -m build"]


def test_makefile_recipes():
    mk = "test:\n\tpytest -q\n\nbuild:\n\t@python -m build\n"
    assert texts(mk, "Makefile") == ["pytest -q", "python -m build"]


def test_package_json_scripts():
    assert texts('{"scripts": {"test": "jest", "start": "node server.js"}}', "package.json") == ["jest", "node server.js"]


def test_console_output_not_commands():
    out = texts("```console\n$ python main.py\nHello world\n```\n")
    assert out == ["python main.py"]


@given(st.lists(st.sampled_from(["pytest", "make", "npm test", "pip install .", "echo hi", "Some prose."]), max_size=8))
def test_extraction_soundness(lines):
    snippet = "```\n" + "\n".join(lines) + "\n```\n"
    got = texts(snippet)
    assert all(c in snippet for c in got)
    assert len(got) == len(set(got))


@pytest.mark.parametrize("cmd", ["# run the tests", "pip install <package-name>", "cd ...", "TODO: add", "   "])
def test_filter_rejects(cmd):
    assert not filter_command(cmd).keep


def test_filter_keeps_ordinary():
    v = filter_command(CandidateCommand("mvn test"))
    assert v.keep and v.reason


def test_candidate_validation():
    with pytest.raises(ValueError):
        CandidateCommand("   ")
    with pytest.raises(ValueError):
        CandidateCommand("# comment")
    assert CandidateCommand("  pytest ").text == "pytest"


@pytest.mark.parametrize("cmd,level", [
    ("pip install -r requirements.txt", M.INSTALLABILITY), ("npm install", M.INSTALLABILITY),
    ("mvn install", M.INSTALLABILITY), ("python setup.py install", M.INSTALLABILITY),
    ("meson setup build", M.INSTALLABILITY), ("cargo build --release", M.INSTALLABILITY),
    ("pytest", M.TESTABILITY), ("node --version", M.TESTABILITY), ("mvn test", M.TESTABILITY),
    ("npm test", M.TESTABILITY), ("go test ./...", M.TESTABILITY),
    ("python main.py", M.RUNNABILITY), ("npm start", M.RUNNABILITY), ("docker compose up", M.RUNNABILITY),
    ("pytest tests/integration", M.RUNNABILITY), ("python -m mypackage", M.RUNNABILITY),
    ("cd app && python main.py", M.RUNNABILITY), ("FOO=1 pytest", M.TESTABILITY),
])
def test_rule_table(cmd, level):
    assert classify_by_rules(cmd)[0] is level


def test_unmatched():
    assert classify_by_rules("echo hello")[0] is None
