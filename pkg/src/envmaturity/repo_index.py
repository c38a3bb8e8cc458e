"""Repository index and the env-context retrieval loop.

The index is a flat list of classified files plus a nested directory tree.
Retrieval hands out files in rank order and remembers which ones it has
already returned (``involved_files``) so later rounds only see new material.
"""

from __future__ import annotations

import enum
import fnmatch
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path, PurePosixPath
from typing import Iterable, Optional

from .errors import RepoIndexError, RetrievalExhausted

log = logging.getLogger(__name__)

DEFAULT_IGNORE = (".git", ".hg", ".svn", "__pycache__", ".venv", "node_modules", ".tox", ".mypy_cache")
CONTENT_CAP = 1024 * 1024
DEFAULT_MAX_ROUNDS = 5
DEFAULT_FILES_PER_ROUND = 8


class FileKind(str, enum.Enum):
    SOURCE = "source"
    DOCS = "docs"
    BUILD_CONFIG = "build_config"
    CI_CONFIG = "ci_config"
    SCRIPT = "script"
    DATA = "data"
    OTHER = "other"


# Checked in order; first hit wins. Patterns match the basename unless they contain "/".
_KIND_RULES: list[tuple[FileKind, tuple[str, ...]]] = [
    (FileKind.CI_CONFIG, (
        ".github/workflows/*", ".gitlab-ci*", "*.travis*", ".circleci/*",
        "azure-pipelines*", "Jenkinsfile", "appveyor.yml", ".drone.yml", "bitbucket-pipelines.yml",
    )),
    (FileKind.BUILD_CONFIG, (
        "requirements*.txt", "requirements/*.txt", "pyproject.*", "setup.py", "setup.cfg",
        "Pipfile", "Pipfile.lock", "poetry.lock", "environment.yml", "environment.yaml",
        "tox.ini", "noxfile.py", "pom.xml", "build.gradle*", "settings.gradle*", "gradlew",
        "build.xml", "CMakeLists.txt", "Makefile", "makefile", "GNUmakefile", "configure.ac",
        "configure", "meson.build", "meson_options.txt", "package.json", "package-lock.json",
        "yarn.lock", "Cargo.toml", "go.mod", "Gemfile", "composer.json", "Dockerfile",
        "docker-compose.y*ml", "compose.y*ml",
    )),
    (FileKind.DOCS, (
        "README*", "INSTALL*", "CONTRIBUTING*", "HACKING*", "BUILDING*", "docs/*",
        "*.md", "*.rst", "*.adoc", "*.txt",
    )),
    (FileKind.SCRIPT, ("*.sh", "*.bash", "*.zsh", "*.ps1", "*.bat", "*.cmd")),
]

_SOURCE_LANGS = {
    ".py": "python", ".pyx": "python", ".java": "java", ".kt": "kotlin", ".scala": "scala",
    ".groovy": "groovy", ".js": "javascript", ".mjs": "javascript", ".cjs": "javascript",
    ".jsx": "javascript", ".ts": "typescript", ".tsx": "typescript", ".c": "c", ".h": "c",
    ".cc": "cpp", ".cpp": "cpp", ".cxx": "cpp", ".hpp": "cpp", ".hh": "cpp", ".go": "go",
    ".rs": "rust", ".rb": "ruby", ".php": "php", ".cs": "csharp", ".swift": "swift",
    ".m": "objc", ".lua": "lua", ".r": "r", ".jl": "julia",
}
_DATA_EXT = {
    ".json", ".csv", ".tsv", ".yaml", ".yml", ".toml", ".xml", ".ini", ".cfg", ".dat",
    ".parquet", ".npy", ".png", ".jpg", ".jpeg", ".gif", ".svg", ".mkv", ".mp4", ".wav",
}
_PATH_LANGS = {
    "requirements": "python", "pyproject": "python", "setup.py": "python", "setup.cfg": "python",
    "pipfile": "python", "tox.ini": "python", "pom.xml": "java", "build.gradle": "java",
    "package.json": "javascript", "cargo.toml": "rust", "go.mod": "go", "cmakelists.txt": "cpp",
    "meson.build": "c", "gemfile": "ruby", "composer.json": "php",
}


def _matches(rel: str, pattern: str) -> bool:
    if "/" in pattern:
        return fnmatch.fnmatchcase(rel, pattern) or fnmatch.fnmatchcase(rel, "*/" + pattern)
    return fnmatch.fnmatchcase(PurePosixPath(rel).name, pattern)


def classify_path(rel: str) -> tuple[FileKind, Optional[str]]:
    """Return (kind, language hint) for a repository-relative POSIX path."""
    name = PurePosixPath(rel).name
    suffix = PurePosixPath(rel).suffix.lower()
    for kind, patterns in _KIND_RULES:
        if any(_matches(rel, p) for p in patterns):
            lang = None
            lower = name.lower()
            for key, value in _PATH_LANGS.items():
                if lower.startswith(key):
                    lang = value
                    break
            return kind, lang
    if suffix in _SOURCE_LANGS:
        return FileKind.SOURCE, _SOURCE_LANGS[suffix]
    if suffix in _DATA_EXT:
        return FileKind.DATA, None
    return FileKind.OTHER, None


@dataclass(frozen=True)
class FileEntry:
    relative_path: str
    kind: FileKind
    size_bytes: int
    language_hint: Optional[str] = None
    readable: bool = True

    @property
    def depth(self) -> int:
        return self.relative_path.count("/")


@dataclass(frozen=True)
class FileIndex:
    root: Path
    entries: tuple[FileEntry, ...]
    tree: dict
    warnings: tuple[str, ...] = ()

    def get(self, rel: str) -> Optional[FileEntry]:
        for e in self.entries:
            if e.relative_path == rel:
                return e
        return None

    def paths(self) -> list[str]:
        return [e.relative_path for e in self.entries]

    def read(self, rel: str) -> Optional[str]:
        """Text content of ``rel``, or None for binary or oversized files."""
        entry = self.get(rel)
        if entry is None or not entry.readable or entry.size_bytes > CONTENT_CAP:
            return None
        try:
            return (self.root / rel).read_text(encoding="utf-8")
        except (UnicodeDecodeError, OSError):
            return None

    def languages(self) -> list[str]:
        """Language hints ordered by how many files carry them."""
        counts: dict[str, int] = {}
        for e in self.entries:
            if e.language_hint:
                counts[e.language_hint] = counts.get(e.language_hint, 0) + 1
        return sorted(counts, key=lambda k: (-counts[k], k))


def _is_utf8(path: Path, limit: int = 8192) -> bool:
    try:
        with open(path, "rb") as fh:
            chunk = fh.read(limit)
    except OSError:
        return False
    if b"\x00" in chunk:
        return False
    try:
        chunk.decode("utf-8")
    except UnicodeDecodeError as exc:
        # a multi-byte sequence cut at the read boundary is still text
        return exc.start >= len(chunk) - 4
    return True


def build_index(repo_root: str | os.PathLike, ignore: Iterable[str] = DEFAULT_IGNORE,
                size_cap: int = CONTENT_CAP) -> FileIndex:
    root = Path(repo_root)
    if not root.is_dir() or not os.access(root, os.R_OK | os.X_OK):
        raise RepoIndexError(f"repository root is not a readable directory: {root}")
    root = root.resolve()
    ignore = set(ignore)
    entries: list[FileEntry] = []
    warnings: list[str] = []
    tree: dict = {}
    seen_dirs: set[str] = set()

    for dirpath, dirnames, filenames in os.walk(root, followlinks=True):
        real = os.path.realpath(dirpath)
        if real in seen_dirs:
            warnings.append(f"skipped symlink cycle at {os.path.relpath(dirpath, root)}")
            dirnames[:] = []
            continue
        seen_dirs.add(real)
        dirnames[:] = sorted(d for d in dirnames if d not in ignore)
        rel_dir = os.path.relpath(dirpath, root)
        node = tree
        if rel_dir != ".":
            for part in Path(rel_dir).parts:
                node = node.setdefault(part, {})
        for name in sorted(filenames):
            if name in ignore:
                continue
            full = Path(dirpath) / name
            if not full.is_file():
                continue
            rel = PurePosixPath(*Path(os.path.relpath(full, root)).parts).as_posix()
            size = full.stat().st_size
            text = _is_utf8(full)
            if not text and size > size_cap:
                # binary blobs over the cap are left out entirely
                continue
            kind, lang = classify_path(rel)
            entries.append(FileEntry(rel, kind, size, lang, readable=text))
            node[name] = None

    for w in warnings:
        log.warning(w)
    entries.sort(key=lambda e: e.relative_path)
    return FileIndex(root, tuple(entries), tree, tuple(warnings))


@dataclass(frozen=True)
class RetrievalState:
    involved_files: tuple[str, ...] = ()
    rounds_used: int = 0
    max_rounds: int = DEFAULT_MAX_ROUNDS
    suggestions: tuple[str, ...] = ()


_KIND_RANK = {
    FileKind.BUILD_CONFIG: 0,
    FileKind.CI_CONFIG: 1,
    FileKind.DOCS: 2,
    FileKind.SCRIPT: 3,
}

DEFAULT_ENV_HINTS = ("requirements", "install", "setup", "build", "readme")
DEFAULT_TEST_HINTS = ("test", "readme", "contributing", "workflow", "makefile", "tox", "package.json")


def _hint_hit(rel: str, hints: Iterable[str]) -> bool:
    lower = rel.lower()
    return any(h and h.lower() in lower for h in hints)


def rank_key(entry: FileEntry) -> tuple:
    """build_config > ci_config > docs > script > hint matches; then depth, then path."""
    kind_rank = _KIND_RANK.get(entry.kind, len(_KIND_RANK))
    return (kind_rank, entry.depth, entry.relative_path)


def retrieve_env_files(index: FileIndex, state: RetrievalState, query_hints: Iterable[str] = (),
                       limit: int = DEFAULT_FILES_PER_ROUND
                       ) -> tuple[list[tuple[str, str]], RetrievalState]:
    """One retrieval round.

    Candidates are build/CI/docs/script files plus any file whose path matches a
    hint. Files already in ``involved_files`` and files without text content are
    never returned.
    """
    if state.rounds_used >= state.max_rounds:
        raise RetrievalExhausted(f"retrieval budget of {state.max_rounds} rounds is spent")
    hints = tuple(query_hints)
    involved = set(state.involved_files)
    candidates = [
        e for e in index.entries
        if e.relative_path not in involved
        and (e.kind in _KIND_RANK or _hint_hit(e.relative_path, hints))
    ]
    candidates.sort(key=rank_key)
    files: list[tuple[str, str]] = []
    for entry in candidates:
        if len(files) >= limit:
            break
        content = index.read(entry.relative_path)
        if content is None:
            continue
        files.append((entry.relative_path, content))
    new_state = replace(
        state,
        involved_files=state.involved_files + tuple(p for p, _ in files),
        rounds_used=state.rounds_used + 1,
        suggestions=hints,
    )
    return files, new_state


class Verdict(str, enum.Enum):
    SUFFICIENT = "sufficient"
    NEED_MORE = "need_more"


@dataclass(frozen=True)
class SufficiencyVerdict:
    verdict: Verdict
    suggestions: tuple[str, ...] = ()
    rationale: str = ""

    def __post_init__(self):
        if self.verdict is Verdict.NEED_MORE and not self.suggestions:
            raise ValueError("a need-more verdict must carry at least one suggestion")
        if self.verdict is Verdict.SUFFICIENT and self.suggestions:
            raise ValueError("a sufficient verdict carries no suggestions")

    @property
    def sufficient(self) -> bool:
        return self.verdict is Verdict.SUFFICIENT


def sufficiency_check(files: list[tuple[str, str]], reasoner) -> SufficiencyVerdict:
    from .reasoner import DecisionKind, DecisionRequest

    req = DecisionRequest(DecisionKind.SUFFICIENCY, {
        "files": [{"path": p, "excerpt": c} for p, c in files],
    })
    resp = reasoner.decide(req)
    verdict = Verdict(resp.payload["verdict"])
    suggestions = tuple(resp.payload.get("suggestions") or ())
    if verdict is Verdict.SUFFICIENT:
        suggestions = ()
    return SufficiencyVerdict(verdict, suggestions, resp.rationale)


@dataclass
class EnvContext:
    files: list[tuple[str, str]] = field(default_factory=list)
    state: RetrievalState = field(default_factory=RetrievalState)
    verdicts: list[SufficiencyVerdict] = field(default_factory=list)

    @property
    def sufficient(self) -> bool:
        return bool(self.verdicts) and self.verdicts[-1].sufficient


def gather_env_context(index: FileIndex, reasoner, max_rounds: int = DEFAULT_MAX_ROUNDS,
                       hints: Iterable[str] = DEFAULT_ENV_HINTS) -> EnvContext:
    """Retrieve/refine until the reasoner is satisfied or the round budget runs out."""
    from .errors import ReasonerError
    from .reasoner import HeuristicProvider

    ctx = EnvContext(state=RetrievalState(max_rounds=max_rounds))
    query = tuple(hints)
    while ctx.state.rounds_used < ctx.state.max_rounds:
        found, ctx.state = retrieve_env_files(index, ctx.state, query)
        ctx.files.extend(found)
        try:
            verdict = sufficiency_check(ctx.files, reasoner)
        except ReasonerError:
            verdict = sufficiency_check(ctx.files, HeuristicProvider())
        ctx.verdicts.append(verdict)
        if verdict.sufficient or (not found and ctx.state.rounds_used > 1):
            break
        query = verdict.suggestions
    return ctx
