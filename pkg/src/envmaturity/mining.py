"""Command mining: literal extraction, placeholder filtering and the rule table.

Extraction never invents text. Every command returned is a verbatim slice of
the snippet it came from, which is what keeps the downstream pyramid honest.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import PurePosixPath
from typing import Optional

import yaml

from .maturity import MaturityState

I, T, R = MaturityState.INSTALLABILITY, MaturityState.TESTABILITY, MaturityState.RUNNABILITY


@dataclass(frozen=True)
class CandidateCommand:
    text: str
    source_path: str = ""
    source_span: Optional[tuple[int, int]] = None
    extraction_round: int = 0
    origin: str = "mined"

    def __post_init__(self):
        stripped = self.text.strip()
        if not stripped:
            raise ValueError("a candidate command cannot be empty")
        if stripped.startswith("#"):
            raise ValueError(f"a candidate command cannot be a comment: {self.text!r}")
        if stripped != self.text:
            object.__setattr__(self, "text", stripped)


# -- extraction ---------------------------------------------------------------

_SHELL_LANGS = {"", "bash", "sh", "shell", "console", "zsh", "shell-session", "sh-session",
                "terminal", "cmd", "powershell", "ps", "text", "none", "bat"}
_FENCE = re.compile(r"^(?P<indent>[ \t]*)(?P<fence>`{3,}|~{3,})[ \t]*(?P<lang>[\w+.-]*)[^\n]*$")
_RST_DIRECTIVE = re.compile(r"^(?P<indent>[ \t]*)\.\.\s+(?:code-block|code|sourcecode)::\s*(?P<lang>[\w+.-]*)\s*$")
_PROMPT = re.compile(r"^[ \t]*(?:\(\S+\)\s*)?[$%]\s+(?=\S)")
_CI_SCRIPT_KEYS = {"run", "script", "before_script", "after_script", "install", "before_install",
                   "commands", "command"}


def _line_offsets(snippet: str) -> list[int]:
    offsets = [0]
    for m in re.finditer("\n", snippet):
        offsets.append(m.end())
    return offsets


class _Collector:
    def __init__(self, snippet: str, source_path: str, extraction_round: int):
        self.snippet = snippet
        self.source_path = source_path
        self.round = extraction_round
        self.offsets = _line_offsets(snippet)
        self.out: list[CandidateCommand] = []
        self.seen: set[str] = set()

    def _lineno(self, pos: int) -> int:
        lo, hi = 0, len(self.offsets) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.offsets[mid] <= pos:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1

    def add(self, text: str, hint_pos: int = 0) -> None:
        text = text.strip()
        if not text or text.startswith("#") or text in self.seen:
            return
        pos = self.snippet.find(text, hint_pos)
        if pos < 0:
            pos = self.snippet.find(text)
        if pos < 0:
            return  # not literally present
        self.seen.add(text)
        span = (self._lineno(pos), self._lineno(pos + len(text)))
        self.out.append(CandidateCommand(text, self.source_path, span, self.round))


def _logical_lines(lines: list[tuple[int, str]]) -> list[tuple[int, str]]:
    """Join backslash continuations, keeping the raw text (newlines included)."""
    merged: list[tuple[int, str]] = []
    buf: Optional[tuple[int, str]] = None
    for pos, line in lines:
        if buf is None:
            buf = (pos, line)
        else:
            buf = (buf[0], buf[1] + "\n" + line)
        if not line.rstrip().endswith("\\"):
            merged.append(buf)
            buf = None
    if buf is not None:
        merged.append(buf)
    return merged


def _emit_block(col: _Collector, block: list[tuple[int, str]], lang: str) -> None:
    has_prompt = any(_PROMPT.match(line) for _, line in block)
    if lang in ("console", "shell-session", "sh-session", "terminal") or has_prompt:
        prompted = []
        for pos, line in block:
            m = _PROMPT.match(line)
            if m:
                prompted.append((pos + m.end(), line[m.end():]))
            elif prompted and prompted[-1][1].rstrip().endswith("\\"):
                prompted.append((pos, line))
        block = prompted
    for pos, text in _logical_lines(block):
        col.add(text, pos)


def _extract_markup(col: _Collector) -> None:
    lines = col.snippet.split("\n")
    pos = 0
    i = 0
    positions = []
    for line in lines:
        positions.append(pos)
        pos += len(line) + 1
    while i < len(lines):
        line = lines[i]
        fence = _FENCE.match(line)
        rst = _RST_DIRECTIVE.match(line)
        if fence:
            marker = fence.group("fence")
            lang = fence.group("lang").lower()
            block = []
            i += 1
            while i < len(lines) and not lines[i].strip().startswith(marker[:3]):
                block.append((positions[i], lines[i]))
                i += 1
            if lang in _SHELL_LANGS:
                _emit_block(col, block, lang)
            i += 1
            continue
        if rst:
            lang = rst.group("lang").lower()
            base = len(rst.group("indent"))
            block = []
            i += 1
            while i < len(lines) and (not lines[i].strip() or len(lines[i]) - len(lines[i].lstrip()) > base):
                if lines[i].strip():
                    block.append((positions[i], lines[i]))
                i += 1
            if lang in _SHELL_LANGS:
                _emit_block(col, block, lang)
            continue
        m = _PROMPT.match(line)
        if m:
            block = [(positions[i], line)]
            while line.rstrip().endswith("\\") and i + 1 < len(lines):
                i += 1
                line = lines[i]
                block.append((positions[i], line))
            _emit_block(col, block, "console")
        i += 1


def _walk_ci(node, col: _Collector, under_script: bool = False) -> None:
    if isinstance(node, dict):
        for key, value in node.items():
            _walk_ci(value, col, str(key) in _CI_SCRIPT_KEYS)
    elif isinstance(node, list):
        for item in node:
            _walk_ci(item, col, under_script)
    elif isinstance(node, str) and under_script:
        raw = [(0, ln) for ln in node.split("\n")]
        for _, text in _logical_lines(raw):
            col.add(text)


def _extract_ci(col: _Collector) -> None:
    try:
        data = yaml.safe_load(col.snippet)
    except yaml.YAMLError:
        data = None
    if isinstance(data, (dict, list)):
        _walk_ci(data, col)
        return
    for m in re.finditer(r"^\s*-?\s*(?:run|script):\s*(?P<cmd>[^|>\n][^\n]*)$", col.snippet, re.M):
        col.add(m.group("cmd"), m.start("cmd"))


def _extract_makefile(col: _Collector) -> None:
    pos = 0
    for line in col.snippet.split("\n"):
        if line.startswith("\t"):
            body = line[1:]
            offset = 1
            while body[:1] in ("@", "-", "+"):
                body = body[1:]
                offset += 1
            col.add(body, pos + offset)
        pos += len(line) + 1


def _extract_package_json(col: _Collector) -> None:
    try:
        data = json.loads(col.snippet)
    except ValueError:
        return
    scripts = data.get("scripts") if isinstance(data, dict) else None
    if isinstance(scripts, dict):
        for value in scripts.values():
            if isinstance(value, str):
                col.add(value)


def _is_ci(path: str) -> bool:
    p = PurePosixPath(path)
    return (".github/workflows" in path or p.name.startswith(".gitlab-ci") or ".travis" in p.name
            or ".circleci" in path or p.name.startswith("azure-pipelines"))


def extract_commands(snippet: str, source_path: str = "", extraction_round: int = 0
                     ) -> list[CandidateCommand]:
    """Commands literally present in ``snippet``, de-duplicated in first-seen order.

    Sources: fenced and rst code blocks, ``$``-prompted lines, CI ``run:``/``script:``
    entries, Makefile recipe lines and package.json script values.
    """
    col = _Collector(snippet, source_path, extraction_round)
    name = PurePosixPath(source_path).name
    if _is_ci(source_path):
        _extract_ci(col)
    elif name in ("Makefile", "makefile", "GNUmakefile") or name.endswith(".mk"):
        _extract_makefile(col)
    elif name == "package.json":
        _extract_package_json(col)
    else:
        _extract_markup(col)
    return col.out


# -- filtering ----------------------------------------------------------------

@dataclass(frozen=True)
class FilterVerdict:
    keep: bool
    reason: str

    def __bool__(self) -> bool:
        return self.keep


_PLACEHOLDERS = [
    (re.compile(r"<[A-Za-z][\w .:/-]*>"), "angle-bracket placeholder"),
    (re.compile(r"(?:^|\s)(?:\.\.\.|…)(?:\s|$)"), "ellipsis placeholder"),
    (re.compile(r"\bTODO\b|\bFIXME\b|\bTBD\b"), "TODO marker"),
    (re.compile(r"\{\{[^}]*\}\}"), "template placeholder"),
    (re.compile(r"\b(?:YOUR|your)[_-][\w-]+|\[your[^\]]*\]"), "user-specific placeholder"),
]


def filter_command(c: CandidateCommand | str) -> FilterVerdict:
    text = c.text if isinstance(c, CandidateCommand) else c
    stripped = text.strip()
    if not stripped:
        return FilterVerdict(False, "empty command")
    if stripped.startswith(("#", "//", "REM ", "rem ", "::")):
        return FilterVerdict(False, "pure comment")
    for pattern, reason in _PLACEHOLDERS:
        if pattern.search(stripped):
            return FilterVerdict(False, reason)
    return FilterVerdict(True, "ordinary command")


# -- heuristic classification -------------------------------------------------

@dataclass(frozen=True)
class Rule:
    name: str
    level: MaturityState
    pattern: re.Pattern


def _r(name: str, level: MaturityState, pattern: str) -> Rule:
    return Rule(name, level, re.compile(pattern))


_PY = r"(?:python[\d.]*|py)"
_NOT_TOOL_MODULE = r"(?!(?:pip|venv|virtualenv|pytest|unittest|build|ensurepip|tox|nox|coverage|doctest|mypy|flake8|pylint|black|isort|http\.server)\b)"

# Checked top to bottom; the first matching rule decides. Integration/e2e markers
# sit above test runners, version probes above installers, installers above
# entry-point launches (so "python setup.py install" is not read as a launch).
RULES: tuple[Rule, ...] = (
    _r("integration-suite", R, r"(?:^|[\s/_-])(?:integration|e2e|end-to-end|acceptance)(?:[\s/_.:-]|$)|\bmvn\b.*\bverify\b|\bfailsafe\b"),
    _r("compose-up", R, r"\bdocker[- ]compose\b.*\bup\b"),
    _r("version-probe", T, r"(?:^|\s)(?:--version|-version|-V)(?:\s|$)|^\S+\s+version$"),
    _r("help-probe", T, r"(?:^|\s)(?:--help|-h)$"),
    _r("python-test-runner", T, rf"^(?:{_PY}\s+-m\s+)?(?:pytest|py\.test|nosetests|tox|nox|unittest)\b|^{_PY}\s+-m\s+(?:unittest|doctest)\b|^{_PY}\s+\S*(?:setup\.py\s+test|runtests?\.py)\b|^coverage\s+run\b"),
    _r("jvm-test-runner", T, r"^(?:mvn|\./mvnw|mvnw)\b.*\btest\b|^(?:gradle|\./gradlew|gradlew)\b.*\b(?:test|check)\b|^sbt\b.*\btest\b|^ant\s+test\b"),
    _r("js-test-runner", T, r"^(?:npm|pnpm|yarn)\s+(?:run\s+)?test\b|^(?:npx\s+)?(?:jest|mocha|vitest|karma|ava|tap)\b|^npm\s+t\b"),
    _r("native-test-runner", T, r"^(?:make|ninja|meson)\b.*\b(?:test|check)\b|^ctest\b|^(?:cargo|go)\s+test\b|^(?:rspec|phpunit|bundle\s+exec\s+rspec|dotnet\s+test)\b"),
    _r("python-install", I, rf"^(?:{_PY}\s+-m\s+)?pip[\d.]*\s+install\b|^(?:poetry|pipenv|pdm|hatch)\s+install\b|^uv\s+(?:pip\s+install|sync)\b|^conda\s+(?:install|env\s+(?:create|update))\b|^mamba\s+(?:install|env)\b|^{_PY}\s+\S*setup\.py\s+(?:install|develop|build|bdist\w*|sdist)\b|^{_PY}\s+-m\s+(?:venv|virtualenv|build)\b|^virtualenv\b"),
    _r("js-install", I, r"^(?:npm|pnpm)\s+(?:install|i|ci|add)\b|^yarn(?:\s+(?:install|add))?\s*$|^yarn\s+(?:install|add)\b|^(?:npm|pnpm|yarn)\s+(?:run\s+)?build\b|^bun\s+install\b"),
    _r("jvm-build", I, r"^(?:mvn|\./mvnw|mvnw)\b.*\b(?:install|package|compile|dependency:\S+)\b|^(?:gradle|\./gradlew|gradlew)\b.*\b(?:build|assemble|compile\w*|jar|install\w*)\b|^sbt\b.*\b(?:compile|package)\b|^ant\b"),
    _r("native-build", I, r"^(?:cmake|meson(?:\s+(?:setup|compile|install))?|ninja|scons|bazel\s+build|\./configure|autoreconf|autogen\.sh|\./autogen\.sh|\./bootstrap)\b|^make(?:\s+(?:-j\s*\S+|-C\s+\S+|all|install|build|[A-Z_]+=\S+))*\s*$|^(?:cargo|go)\s+(?:build|install|fetch|mod\s+download|get)\b"),
    _r("system-install", I, r"^(?:apt-get|apt|apk|dnf|yum|zypper|pacman|brew|port|choco)\s+(?:-\S+\s+)*(?:install|add|-S)\b|^(?:bundle|composer|gem)\s+install\b|^(?:dotnet)\s+(?:restore|build)\b|^pre-commit\s+install\b"),
    _r("make-run", R, r"^make\s+(?:run|start|serve|demo|example)\b"),
    _r("python-entry-point", R, rf"^{_PY}\s+(?:-\w+\s+)*(?!-)\S+\.py\b|^{_PY}\s+-m\s+{_NOT_TOOL_MODULE}[\w.]+|^(?:flask|streamlit|uvicorn|gunicorn|celery|django-admin|hypercorn|daphne)\b|^{_PY}\s+manage\.py\s+runserver\b"),
    _r("js-entry-point", R, r"^(?:npm|pnpm|yarn)\s+(?:run\s+)?(?:start|serve|dev|preview)\b|^node\s+(?!-)\S+|^(?:npx\s+)?(?:ts-node|deno\s+run|bun\s+run)\b"),
    _r("jvm-entry-point", R, r"^java\s+(?:-\S+\s+)*-jar\b|^java\s+(?:-\S+\s+)*[\w.$]+\b|^(?:mvn|\./mvnw)\b.*\bexec:\w+|^(?:gradle|\./gradlew)\b.*\b(?:run|bootRun)\b|^sbt\b.*\brun\b"),
    _r("native-entry-point", R, r"^(?:cargo|go)\s+run\b|^\./\S+|^(?:build|bin|out|target|dist)/\S+|^docker\s+run\b"),
)

_PREFIX_NOISE = re.compile(r"^(?:(?:sudo|env|time|nohup|exec)\s+(?:-\S+\s+)*|[A-Za-z_][A-Za-z0-9_]*=(?:\"[^\"]*\"|'[^']*'|\S*)\s+)+")
_SEGMENT_SPLIT = re.compile(r"\s*(?:&&|\|\||;)\s*")


def _segments(text: str) -> list[str]:
    flat = text.replace("\\\n", " ")
    out = []
    for seg in _SEGMENT_SPLIT.split(flat):
        seg = _PREFIX_NOISE.sub("", seg.strip())
        seg = re.sub(r"\s+", " ", seg)
        if seg and not re.match(r"^(?:cd|pushd|popd|export|source|\.|set|echo|mkdir|rm|cp|mv)\b", seg):
            out.append(seg)
    return out


def classify_by_rules(text: str) -> tuple[Optional[MaturityState], str]:
    """(level, rule name) for ``text``; level None when no rule applies.

    Compound commands take the highest level any of their segments reaches.
    """
    best: Optional[MaturityState] = None
    best_rule = "no rule matched"
    for seg in _segments(text):
        for rule in RULES:
            if rule.pattern.search(seg):
                if best is None or rule.level > best:
                    best, best_rule = rule.level, rule.name
                break
    return best, best_rule
