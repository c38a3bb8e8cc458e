import os

import pytest
from hypothesis import given, settings, strategies as st

from envmaturity.errors import RepoIndexError, RetrievalExhausted
from envmaturity.reasoner import DecisionKind, DecisionResponse, HeuristicProvider, ProviderKind, ScriptedProvider
from envmaturity.repo_index import (FileKind, RetrievalState, build_index, classify_path, gather_env_context,
                                    retrieve_env_files, sufficiency_check)


@pytest.fixture
def small_repo(tmp_path):
    files = {"README.md": "# demo\n\n```\npip install -r requirements.txt\n```\n",
             "requirements.txt": "requests\n", "src/main.py": "print(1)\n", "tests/test_a.py": "def test(): pass\n"}
    for rel, text in files.items():
        (tmp_path / rel).parent.mkdir(parents=True, exist_ok=True)
        (tmp_path / rel).write_text(text)
    return tmp_path


def test_index_fixture(small_repo):
    idx = build_index(small_repo)
    assert idx.paths() == ["README.md", "requirements.txt", "src/main.py", "tests/test_a.py"]
    assert idx.get("requirements.txt").kind is FileKind.BUILD_CONFIG
    assert idx.get("README.md").kind is FileKind.DOCS
    assert idx.get("src/main.py").kind is FileKind.SOURCE and idx.get("src/main.py").language_hint == "python"
    assert "src" in idx.tree and "main.py" in idx.tree["src"]


def test_empty_dir(tmp_path):
    assert build_index(tmp_path).entries == ()


def test_git_excluded(small_repo):
    (small_repo / ".git").mkdir()
    (small_repo / ".git" / "HEAD").write_text("ref: refs/heads/main\n")
    assert not any(p.startswith(".git/") for p in build_index(small_repo).paths())


def test_missing_root(tmp_path):
    with pytest.raises(RepoIndexError):
        build_index(tmp_path / "nope")


def test_symlink_cycle_skipped(small_repo):
    os.symlink(small_repo, small_repo / "src" / "loop")
    idx = build_index(small_repo)
    assert any("symlink cycle" in w for w in idx.warnings)
    assert len(idx.paths()) == len(set(idx.paths()))


def test_binary_files_indexed_but_not_read(small_repo):
    (small_repo / "blob.bin").write_bytes(b"\x00\x01" * 10)
    idx = build_index(small_repo)
    assert idx.get("blob.bin") is not None and idx.read("blob.bin") is None


def test_oversized_binary_dropped(small_repo):
    (small_repo / "big.bin").write_bytes(b"\x00" * 2048)
    assert build_index(small_repo, size_cap=1024).get("big.bin") is None


def test_index_idempotent(small_repo):
    assert build_index(small_repo) == build_index(small_repo)


@pytest.mark.parametrize("path,kind", [
    (".github/workflows/ci.yml", FileKind.CI_CONFIG), (".gitlab-ci.yml", FileKind.CI_CONFIG),
    ("pyproject.toml", FileKind.BUILD_CONFIG), ("build.gradle.kts", FileKind.BUILD_CONFIG),
    ("CMakeLists.txt", FileKind.BUILD_CONFIG), ("meson.build", FileKind.BUILD_CONFIG),
    ("docs/install.rst", FileKind.DOCS), ("scripts/setup.sh", FileKind.SCRIPT),
    ("data/x.csv", FileKind.DATA), ("LICENSE", FileKind.OTHER),
])
def test_classify_path(path, kind):
    assert classify_path(path)[0] is kind


def test_ranking_and_involved_files(small_repo):
    idx = build_index(small_repo)
    files, state = retrieve_env_files(idx, RetrievalState())
    paths = [p for p, _ in files]
    assert paths.index("requirements.txt") < paths.index("README.md")
    assert state.rounds_used == 1 and set(paths) <= set(state.involved_files)
    again, state2 = retrieve_env_files(idx, state, ["test"])
    assert "requirements.txt" not in [p for p, _ in again]
    assert [p for p, _ in again] == ["tests/test_a.py"]
    assert state2.involved_files[:len(state.involved_files)] == state.involved_files


def test_retrieval_budget(small_repo):
    idx = build_index(small_repo)
    with pytest.raises(RetrievalExhausted):
        retrieve_env_files(idx, RetrievalState(rounds_used=5, max_rounds=5))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.sampled_from(["test", "src", "main", "readme", "x"]), max_size=3), max_size=5))
def test_involved_files_monotone(hint_rounds):
    import pathlib
    import tempfile
    with tempfile.TemporaryDirectory() as tmp:
        root = pathlib.Path(tmp)
        for rel in ("README.md", "requirements.txt", "src/main.py", "tests/test_a.py", "x/y.txt"):
            (root / rel).parent.mkdir(parents=True, exist_ok=True)
            (root / rel).write_text("x\n")
        idx = build_index(root)
        state = RetrievalState(max_rounds=10)
        for hints in hint_rounds:
            files, new = retrieve_env_files(idx, state, hints, limit=2)
            assert new.involved_files[:len(state.involved_files)] == state.involved_files
            assert all(p not in state.involved_files and p in idx.paths() for p, _ in files)
            state = new


def test_sufficiency_heuristic():
    h = HeuristicProvider()
    assert sufficiency_check([("requirements.txt", "requests\n")], h).sufficient
    empty = sufficiency_check([], h)
    assert not empty.sufficient and "locate dependency manifests" in empty.suggestions
    assert sufficiency_check([("README.md", "```\nmake\n```\n")], h).sufficient
    assert not sufficiency_check([("README.md", "just prose\n")], h).sufficient


def test_sufficiency_scripted_verbatim():
    resp = DecisionResponse(DecisionKind.SUFFICIENCY, {"verdict": "need_more", "suggestions": ["search ci configs"]},
                            "no CI files yet", ProviderKind.SCRIPTED)
    v = sufficiency_check([("README.md", "x")], ScriptedProvider([(DecisionKind.SUFFICIENCY, resp)]))
    assert not v.sufficient and v.suggestions == ("search ci configs",)


def test_gather_terminates_within_budget(tmp_path):
    (tmp_path / "notes.txt").write_text("nothing here\n")
    ctx = gather_env_context(build_index(tmp_path), HeuristicProvider(), max_rounds=3)
    assert ctx.state.rounds_used <= 3 and not ctx.sufficient
