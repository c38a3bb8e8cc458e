"""The six-section setup script and its line-granular repair history.

A BashFile is immutable. Every repair produces a new value with version + 1
and the action appended to ``repair_history``; replaying that history over
``base`` reproduces the current script exactly.
"""

from __future__ import annotations

import enum
import re
import shlex
import shutil
import subprocess
import time
from dataclasses import dataclass, field, replace
from pathlib import PurePosixPath
from typing import Iterable, Optional, Union

from .errors import EmitError, PatchError

SECTION_TITLES = (
    "Execution Context Initialization",
    "OS & Package Manager Abstraction",
    "Base Environment Preparation",
    "Generic Environment Preparation",
    "Domain-Specific Build Logic",
    "Orchestration Entry Point",
)
# sections 3-6 are rendered as functions; main (section 6) calls the others in order
SECTION_FUNCTIONS = {
    3: "base_environment_preparation",
    4: "generic_environment_preparation",
    5: "domain_specific_build",
    6: "main",
}
ENTRY_CALL = 'main "$@"'  # rendered after the section 6 function, never part of it
CONTEXT_SECTION = 1
SHEBANG = "#!/usr/bin/env bash"
_MARKER = re.compile(r"^### SECTION (\d+): (.+)$")


class LineOrigin(str, enum.Enum):
    TEMPLATE = "template"
    GENERATED = "generated"
    REPAIR = "repair"


@dataclass(frozen=True)
class ScriptLine:
    line_id: str
    text: str
    origin: LineOrigin = LineOrigin.TEMPLATE


@dataclass(frozen=True)
class Section:
    id: int
    title: str
    lines: tuple[ScriptLine, ...] = ()

    def texts(self) -> list[str]:
        return [ln.text for ln in self.lines]


class RepairKind(str, enum.Enum):
    REPLACE_LINE = "replace_line"
    APPEND_LINE = "append_line"
    DELETE_LINE = "delete_line"


@dataclass(frozen=True)
class RepairRecord:
    kind: RepairKind
    target: Union[str, int]
    new_text: Optional[str] = None
    cause: str = ""
    timestamp: float = field(default_factory=time.time)

    def __post_init__(self):
        object.__setattr__(self, "kind", RepairKind(self.kind))
        if self.kind is RepairKind.APPEND_LINE and isinstance(self.target, str) and self.target.isdigit():
            object.__setattr__(self, "target", int(self.target))

    def describe(self) -> str:
        if self.kind is RepairKind.APPEND_LINE:
            return f"append to section {self.target}: {self.new_text}"
        if self.kind is RepairKind.REPLACE_LINE:
            return f"replace {self.target}: {self.new_text}"
        return f"delete {self.target}"

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "target": self.target, "new_text": self.new_text,
                "cause": self.cause, "timestamp": self.timestamp}

    @classmethod
    def from_dict(cls, data: dict) -> "RepairRecord":
        return cls(RepairKind(data["kind"]), data["target"], data.get("new_text"),
                   data.get("cause", ""), float(data.get("timestamp", 0.0)))


@dataclass(frozen=True)
class StackProfile:
    """What was detected about the repository's toolchain."""

    languages: tuple[str, ...] = ()
    manifests: tuple[str, ...] = ()

    @property
    def empty(self) -> bool:
        return not self.languages and not self.manifests

    def has(self, *names: str) -> bool:
        basenames = {PurePosixPath(m).name for m in self.manifests}
        return any(n in basenames or n in self.manifests for n in names)

    def root_manifests(self, pattern: str) -> list[str]:
        return [m for m in self.manifests if "/" not in m and re.fullmatch(pattern, m)]

    def to_dict(self) -> dict:
        return {"languages": list(self.languages), "manifests": list(self.manifests)}

    @classmethod
    def from_dict(cls, data: dict) -> "StackProfile":
        return cls(tuple(data.get("languages", ())), tuple(data.get("manifests", ())))


_MANIFEST_LANGS = [
    (r"requirements.*\.txt|pyproject\.toml|setup\.py|setup\.cfg|Pipfile|tox\.ini|environment\.ya?ml", "python"),
    (r"pom\.xml|build\.gradle(\.kts)?|settings\.gradle(\.kts)?|build\.xml", "java"),
    (r"package\.json", "javascript"),
    (r"CMakeLists\.txt", "cpp"),
    (r"meson\.build|configure\.ac|configure", "c"),
    (r"Cargo\.toml", "rust"),
    (r"go\.mod", "go"),
]
_BUILD_MANIFESTS = re.compile(
    r"requirements.*\.txt|pyproject\.toml|setup\.py|setup\.cfg|Pipfile|pom\.xml|build\.gradle(\.kts)?|gradlew|"
    r"package\.json|CMakeLists\.txt|meson\.build|Makefile|makefile|GNUmakefile|configure|Cargo\.toml|go\.mod|"
    r"environment\.ya?ml"
)


def detect_profile(paths: Iterable[str], languages: Iterable[str] = ()) -> StackProfile:
    """Profile from root-level manifests, plus source languages as a fallback."""
    manifests = sorted({p for p in paths if "/" not in p and _BUILD_MANIFESTS.fullmatch(p)})
    langs: list[str] = []
    for m in manifests:
        for pattern, lang in _MANIFEST_LANGS:
            if re.fullmatch(pattern, m) and lang not in langs:
                langs.append(lang)
    if not langs:
        langs = [lang for lang in languages if lang in ("python", "java", "javascript", "typescript",
                                                        "c", "cpp", "rust", "go")][:1]
    return StackProfile(tuple(sorted(langs)), tuple(manifests))


def _need(tool: str, packages: str) -> str:
    return f"command -v {tool} >/dev/null 2>&1 || apt_install {packages}"


_SECTION1 = [
    "set -Eeo pipefail",
    "export DEBIAN_FRONTEND=noninteractive",
    'SETUP_LOG="${SETUP_LOG:-/tmp/setup.log}"',
    'SETUP_ENV_FILE="${SETUP_ENV_FILE:-/tmp/setup_env.sh}"',
    'touch "$SETUP_LOG" "$SETUP_ENV_FILE"',
    "log() { printf '[setup] %s\\n' \"$*\" | tee -a \"$SETUP_LOG\" >&2; }",
    "trap 'log \"failed (exit $?) at lines $LINENO ${BASH_LINENO[*]}: $BASH_COMMAND\"' ERR",
    'persist_env() { grep -qxF "$1" "$SETUP_ENV_FILE" 2>/dev/null || printf \'%s\\n\' "$1" >> "$SETUP_ENV_FILE"; }',
    'PROJECT_ROOT="${PROJECT_ROOT:-$(pwd)}"',
    'cd "$PROJECT_ROOT"',
]

_SECTION2 = [
    'SUDO=""',
    'if [ "$(id -u)" != "0" ] && command -v sudo >/dev/null 2>&1; then SUDO="sudo"; fi',
    "detect_pkg_manager() {",
    "  if command -v apt-get >/dev/null 2>&1; then echo apt",
    "  elif command -v apk >/dev/null 2>&1; then echo apk",
    "  elif command -v dnf >/dev/null 2>&1; then echo dnf",
    "  elif command -v yum >/dev/null 2>&1; then echo yum",
    "  else echo none; fi",
    "}",
    'PKG_MANAGER="$(detect_pkg_manager)"',
    "PKG_INDEX_FRESH=0",
    "pkg_install() {",
    '  [ "$#" -gt 0 ] || return 0',
    '  case "$PKG_MANAGER" in',
    "    apt)",
    '      if [ "$PKG_INDEX_FRESH" = 0 ]; then $SUDO apt-get update -y; PKG_INDEX_FRESH=1; fi',
    '      $SUDO apt-get install -y --no-install-recommends "$@" ;;',
    '    apk) $SUDO apk add --no-cache "$@" ;;',
    '    dnf|yum) $SUDO "$PKG_MANAGER" install -y "$@" ;;',
    '    *) log "no supported package manager; cannot install: $*"; return 1 ;;',
    "  esac",
    "}",
    'apt_install() { pkg_install "$@"; }',
]


def _section3(p: StackProfile) -> list[str]:
    if p.empty:
        return ["# no toolchain detected; no system packages required"]
    lines = [
        'log "preparing base environment"',
        _need("git", "git"),
        _need("curl", "ca-certificates curl"),
    ]
    langs = set(p.languages)
    if "python" in langs:
        lines.append(_need("python3", "python3 python3-venv python3-pip"))
    if langs & {"c", "cpp"} or p.has("Makefile", "makefile", "GNUmakefile", "configure"):
        lines.append(_need("cc", "build-essential"))
        lines.append(_need("make", "make"))
    if p.has("CMakeLists.txt"):
        lines.append(_need("cmake", "cmake"))
    if p.has("meson.build"):
        lines.append(_need("meson", "meson ninja-build pkg-config"))
    if "java" in langs:
        lines.append(_need("javac", "default-jdk"))
        if p.has("pom.xml"):
            lines.append(_need("mvn", "maven"))
        if p.has("build.gradle", "build.gradle.kts") and not p.has("gradlew"):
            lines.append(_need("gradle", "gradle"))
    if langs & {"javascript", "typescript"}:
        lines.append(_need("npm", "nodejs npm"))
    if "rust" in langs:
        lines.append(_need("cargo", "cargo"))
    if "go" in langs:
        lines.append(_need("go", "golang"))
    return lines


def _section4(p: StackProfile) -> list[str]:
    lines: list[str] = []
    if "python" in p.languages:
        lines += [
            'log "provisioning isolated python runtime"',
            "python3 -m venv .venv",
            'persist_env ". \\"$PROJECT_ROOT/.venv/bin/activate\\""',
            ". .venv/bin/activate",
            "python -m pip install --upgrade pip",
        ]
        for req in p.root_manifests(r"requirements.*\.txt"):
            lines.append(f"pip install -r {shlex.quote(req)}")
        if p.has("pyproject.toml", "setup.py"):
            lines.append("pip install -e .")
    if p.has("package.json"):
        lines += ['log "installing node dependencies"', "npm install"]
    if "rust" in p.languages:
        lines.append("cargo fetch")
    if "go" in p.languages:
        lines.append("go mod download")
    return lines or ["# no language runtime to provision"]


def _section5(p: StackProfile) -> list[str]:
    lines: list[str] = []
    if p.has("pom.xml"):
        lines.append("mvn -B -q -DskipTests install")
    if p.has("build.gradle", "build.gradle.kts"):
        lines.append("if [ -x ./gradlew ]; then ./gradlew build -x test; else gradle build -x test; fi")
    if p.has("CMakeLists.txt"):
        lines += ["mkdir -p build", "cmake -S . -B build", 'cmake --build build -j"$(nproc)"']
    elif p.has("meson.build"):
        lines += ["[ -d build ] || meson setup build", "ninja -C build"]
    elif p.has("Makefile", "makefile", "GNUmakefile"):
        lines.append('make -j"$(nproc)" || { log "default make target failed; retrying serially"; make; }')
    if "rust" in p.languages:
        lines.append("cargo build")
    if "go" in p.languages:
        lines.append("go build ./...")
    if "python" in p.languages:
        lines.append('[ -d tests ] || [ -d test ] || log "no tests directory; test commands may be skipped"')
    return lines or ["# no project-specific build steps detected"]


def _section6() -> list[str]:
    return ['log "setup started in $PROJECT_ROOT (package manager: $PKG_MANAGER)"',
            *(SECTION_FUNCTIONS[i] for i in (3, 4, 5)),
            'log "setup finished"']


def _make_sections(groups: list[list[str]], origin: LineOrigin = LineOrigin.TEMPLATE,
                   start: int = 1) -> tuple[tuple[Section, ...], int]:
    sections = []
    n = start
    for sid, (title, texts) in enumerate(zip(SECTION_TITLES, groups), start=1):
        lines = []
        for text in texts:
            lines.append(ScriptLine(f"L{n}", text, origin))
            n += 1
        sections.append(Section(sid, title, tuple(lines)))
    return tuple(sections), n


@dataclass(frozen=True)
class BashFile:
    sections: tuple[Section, ...]
    repair_history: tuple[RepairRecord, ...] = ()
    version: int = 0
    base: tuple[Section, ...] = field(default=(), compare=False, repr=False)
    next_id: int = 1
    profile: StackProfile = field(default_factory=StackProfile)

    def __post_init__(self):
        ids = tuple(s.id for s in self.sections)
        if ids != (1, 2, 3, 4, 5, 6):
            raise ValueError(f"a BashFile has exactly six ordered sections, got {ids}")
        if not self.base:
            object.__setattr__(self, "base", self.sections)

    def section(self, sid: int) -> Section:
        return self.sections[sid - 1]

    def find_line(self, line_id: str) -> Optional[tuple[int, int]]:
        for s in self.sections:
            for i, ln in enumerate(s.lines):
                if ln.line_id == line_id:
                    return s.id, i
        return None

    def line(self, line_id: str) -> Optional[ScriptLine]:
        loc = self.find_line(line_id)
        return None if loc is None else self.section(loc[0]).lines[loc[1]]

    def all_lines(self) -> list[tuple[int, ScriptLine]]:
        return [(s.id, ln) for s in self.sections for ln in s.lines]

    def render(self) -> str:
        return render(self)

    def fresh(self) -> "BashFile":
        """The version-0 script this file was derived from."""
        return BashFile(self.base, (), 0, self.base, _first_free_id(self.base), self.profile)


def _first_free_id(sections: Iterable[Section]) -> int:
    top = 0
    for s in sections:
        for ln in s.lines:
            m = re.fullmatch(r"L(\d+)", ln.line_id)
            if m:
                top = max(top, int(m.group(1)))
    return top + 1


def new_from_template(profile: Optional[StackProfile] = None) -> BashFile:
    profile = profile or StackProfile()
    groups = [list(_SECTION1), list(_SECTION2), _section3(profile), _section4(profile),
              _section5(profile), _section6()]
    sections, next_id = _make_sections(groups)
    return BashFile(sections, (), 0, sections, next_id, profile)


def render_with_map(bf: BashFile) -> tuple[str, dict[int, str]]:
    """Rendered text plus a map from 1-based line number to ``line_id``."""
    out = [SHEBANG]
    where: dict[int, str] = {}

    def emit(text: str, line_id: Optional[str] = None) -> None:
        out.append(text)
        if line_id is not None:
            where[len(out)] = line_id

    for s in bf.sections:
        emit(f"### SECTION {s.id}: {s.title}")
        fn = SECTION_FUNCTIONS.get(s.id)
        if fn:
            emit(f"{fn}() {{")
            emit("  :")
            for ln in s.lines:
                emit(f"  {ln.text}", ln.line_id)
            emit("}")
            if s.id == 6:
                emit(ENTRY_CALL)
        else:
            for ln in s.lines:
                emit(ln.text, ln.line_id)
    return "\n".join(out) + "\n", where


def render(bf: BashFile) -> str:
    return render_with_map(bf)[0]


def parse(text: str) -> BashFile:
    """Inverse of :func:`render` for section and line structure (ids are reassigned)."""
    raw = text.split("\n")
    if raw and raw[-1] == "":
        raw.pop()
    if not raw or raw[0] != SHEBANG:
        raise ValueError("script does not start with the expected shebang")
    blocks: list[tuple[int, str, list[str]]] = []
    for line in raw[1:]:
        m = _MARKER.match(line)
        if m:
            blocks.append((int(m.group(1)), m.group(2), []))
        elif blocks:
            blocks[-1][2].append(line)
        else:
            raise ValueError("content before the first section marker")
    if [b[0] for b in blocks] != [1, 2, 3, 4, 5, 6]:
        raise ValueError("script must contain sections 1..6 in order")
    groups = []
    for sid, _title, body in blocks:
        fn = SECTION_FUNCTIONS.get(sid)
        if fn:
            if sid == 6:
                if not body or body[-1] != ENTRY_CALL:
                    raise ValueError(f"section 6 must end with {ENTRY_CALL}")
                body = body[:-1]
            if len(body) < 3 or body[0] != f"{fn}() {{" or body[1] != "  :" or body[-1] != "}":
                raise ValueError(f"section {sid} is not wrapped in {fn}()")
            inner = body[2:-1]
            groups.append([ln[2:] if ln.startswith("  ") else ln for ln in inner])
        else:
            groups.append(body)
    sections, next_id = _make_sections(groups)
    titled = tuple(replace(s, title=b[1]) for s, b in zip(sections, blocks))
    return BashFile(titled, (), 0, titled, next_id)


def _validate_text(text: Optional[str]) -> str:
    if text is None:
        raise PatchError("repair action has no new_text")
    if "\n" in text or "\r" in text:
        raise PatchError("new_text must be a single line")
    if not text.strip():
        raise PatchError("new_text is empty")
    try:
        shlex.split(text, comments=True)
    except ValueError as exc:
        raise PatchError(f"new_text fails shell tokenization: {exc}") from exc
    return text


def apply_repair(bf: BashFile, action: RepairRecord, allow_context_edits: bool = False) -> BashFile:
    """Return a new BashFile with ``action`` applied; ``bf`` itself never changes."""
    sections = list(bf.sections)
    next_id = bf.next_id
    if action.kind is RepairKind.APPEND_LINE:
        try:
            sid = int(action.target)
        except (TypeError, ValueError):
            raise PatchError(f"append target must be a section id, got {action.target!r}") from None
        if not 1 <= sid <= 6:
            raise PatchError(f"no section {sid}")
        if sid == CONTEXT_SECTION and not allow_context_edits:
            raise PatchError("section 1 (execution context) is protected")
        text = _validate_text(action.new_text)
        sec = sections[sid - 1]
        sections[sid - 1] = replace(sec, lines=sec.lines + (ScriptLine(f"L{next_id}", text, LineOrigin.REPAIR),))
        next_id += 1
    else:
        loc = bf.find_line(str(action.target))
        if loc is None:
            raise PatchError(f"unknown line id {action.target!r}")
        sid, idx = loc
        if sid == CONTEXT_SECTION and not allow_context_edits:
            raise PatchError("section 1 (execution context) is protected")
        sec = sections[sid - 1]
        lines = list(sec.lines)
        if action.kind is RepairKind.REPLACE_LINE:
            text = _validate_text(action.new_text)
            lines[idx] = ScriptLine(lines[idx].line_id, text, LineOrigin.REPAIR)
        else:
            del lines[idx]
        sections[sid - 1] = replace(sec, lines=tuple(lines))
    return replace(bf, sections=tuple(sections), repair_history=bf.repair_history + (action,),
                   version=bf.version + 1, next_id=next_id)


def apply_all(bf: BashFile, actions: Iterable[RepairRecord], allow_context_edits: bool = False) -> BashFile:
    """Apply ``actions`` atomically: on PatchError nothing is applied."""
    out = bf
    for a in actions:
        out = apply_repair(out, a, allow_context_edits)
    return out


def replay(bf: BashFile) -> BashFile:
    """Rebuild ``bf`` from its base sections and repair history."""
    return apply_all(bf.fresh(), bf.repair_history, allow_context_edits=True)


def check_syntax(text: str) -> Optional[str]:
    """None when ``bash -n`` accepts ``text``, else bash's diagnostic."""
    bash = shutil.which("bash")
    if bash is None:
        raise RuntimeError("bash is required for syntax checks")
    proc = subprocess.run([bash, "-n"], input=text, capture_output=True, text=True)
    if proc.returncode == 0:
        return None
    return proc.stderr.strip() or f"bash -n exited {proc.returncode}"


SANDBOX_ENV_FILE = "/etc/profile.d/setup_env.sh"


def emit_dockerfile(bf: BashFile, base_image: str = "ubuntu:22.04", script_name: str = "setup.sh",
                    workdir: str = "/workspace") -> str:
    error = check_syntax(render(bf))
    if error:
        raise EmitError(f"rendered script fails the syntax check: {error}")
    return "\n".join([
        f"# Materializes the environment built by {script_name} (script version {bf.version}).",
        f"FROM {base_image}",
        f"ENV PROJECT_ROOT={workdir} SETUP_ENV_FILE={SANDBOX_ENV_FILE} BASH_ENV={SANDBOX_ENV_FILE}",
        "RUN command -v bash >/dev/null 2>&1 || apk add --no-cache bash",
        f"RUN mkdir -p /etc/profile.d && touch {SANDBOX_ENV_FILE}",
        f"WORKDIR {workdir}",
        f"COPY . {workdir}",
        f"COPY {script_name} /usr/local/bin/{script_name}",
        f"RUN chmod +x /usr/local/bin/{script_name} && bash /usr/local/bin/{script_name}",
        'CMD ["bash"]',
        "",
    ])
