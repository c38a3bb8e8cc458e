import json
import shutil
from pathlib import Path

import pytest

from envmaturity import pipeline

FIXTURES = Path(__file__).parent / "fixtures"
E2E = FIXTURES / "e2e"
E2E_NAMES = sorted(p.name for p in E2E.iterdir() if p.is_dir())


def e2e_config(name: str, out: Path, **overrides) -> pipeline.RunConfig:
    d = E2E / name
    kw = dict(repo=str(d / "repo"), simulation=str(d / "sim.json"), output_dir=str(out), trace=True)
    if (d / "session.json").exists():
        kw.update(provider="scripted", session=str(d / "session.json"))
    kw.update(overrides)
    return pipeline.RunConfig(**kw)


@pytest.fixture
def run_fixture(tmp_path):
    def go(name: str, **overrides):
        return pipeline.run(e2e_config(name, tmp_path / name, **overrides))
    return go


@pytest.fixture
def toy_repo(tmp_path):
    """Copy of a fixture repository that tests may modify."""
    def make(name: str) -> Path:
        dst = tmp_path / f"repo-{name}"
        shutil.copytree(E2E / name / "repo", dst)
        return dst
    return make


def write_table(path: Path, rules: list) -> Path:
    path.write_text(json.dumps({"rules": rules}), encoding="utf-8")
    return path


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
