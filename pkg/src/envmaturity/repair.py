"""Failure analysis and repair planning for the setup script.

The heuristic side is a pattern table over captured output plus a small set of
one-line fixes. Reasoner answers go through the same dataclasses and are
validated before use; anything unusable falls back to the heuristics.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from pathlib import PurePosixPath
from typing import Optional

from .bashfile import (BashFile, LineOrigin, RepairKind, RepairRecord, apply_all,
                       new_from_template, render_with_map)
from .errors import EmptyPlan, PatchError, ReasonerError
from .maturity import ExecOutcome

log = logging.getLogger(__name__)

DEFAULT_ESCALATION_THRESHOLD = 3
REPAIRABLE_SECTIONS = (3, 4, 5, 6)


class FailureCategory(str, enum.Enum):
    MISSING_SYSTEM_DEPENDENCY = "missing_system_dependency"
    MISSING_LANGUAGE_DEPENDENCY = "missing_language_dependency"
    MISSING_ENV_VAR = "missing_env_var"
    COMPILATION_ERROR = "compilation_error"
    RUNTIME_ERROR = "runtime_error"
    MISSING_ARTIFACT = "missing_artifact"
    UNKNOWN = "unknown"


class RepairMode(str, enum.Enum):
    HYBRID = "hybrid"
    WHOLE_SCRIPT = "whole-script"
    SINGLE_COMMAND = "single-command"

    @property
    def wire(self) -> str:
        return self.value.replace("-", "_")

    @classmethod
    def from_wire(cls, text: str) -> "RepairMode":
        return cls(text.replace("_", "-"))


@dataclass(frozen=True)
class FailureAnalysis:
    category: FailureCategory
    evidence: str = ""
    faulty_line: Optional[str] = None
    subject: Optional[str] = None
    rationale: str = ""

    def to_dict(self) -> dict:
        return {"category": self.category.value, "evidence": self.evidence,
                "faulty_line": self.faulty_line, "subject": self.subject}


@dataclass(frozen=True)
class RepairPlan:
    mode: RepairMode
    actions: tuple[RepairRecord, ...]
    rationale: str = ""

    def __post_init__(self):
        if self.mode is RepairMode.SINGLE_COMMAND and len(self.actions) != 1:
            raise ValueError("a single-command plan holds exactly one action")
        if self.mode is RepairMode.HYBRID:
            raise ValueError("a concrete plan is single-command or whole-script")

    def to_payload(self) -> dict:
        return {"mode": self.mode.wire,
                "actions": [{"kind": a.kind.value, "target": a.target, "new_text": a.new_text}
                            for a in self.actions]}


# -- analysis ------------------------------------------------------------------

C = FailureCategory
_ID = r"[\w.+-]+"

# (category, pattern, name of the group holding the subject); first match wins
_PATTERNS: list[tuple[FailureCategory, re.Pattern, Optional[str]]] = [
    (C.MISSING_LANGUAGE_DEPENDENCY, re.compile(r"ModuleNotFoundError: No module named '(?P<s>[\w.]+)'"), "s"),
    (C.MISSING_LANGUAGE_DEPENDENCY, re.compile(r"ImportError: No module named '?(?P<s>[\w.]+)'?"), "s"),
    (C.MISSING_LANGUAGE_DEPENDENCY, re.compile(r"Cannot find module '(?P<s>[^./'][^']*)'"), "s"),
    (C.MISSING_LANGUAGE_DEPENDENCY, re.compile(r"No matching distribution found for (?P<s>\S+)"), "s"),
    (C.MISSING_LANGUAGE_DEPENDENCY, re.compile(r"Could not resolve dependencies for project"), None),
    (C.MISSING_SYSTEM_DEPENDENCY, re.compile(rf"(?P<s>{_ID}): command not found"), "s"),
    (C.MISSING_SYSTEM_DEPENDENCY, re.compile(rf"sh: \d+: (?P<s>{_ID}): not found"), "s"),
    (C.MISSING_SYSTEM_DEPENDENCY, re.compile(rf"E: Unable to locate package (?P<s>{_ID})"), "s"),
    (C.MISSING_SYSTEM_DEPENDENCY, re.compile(rf"[Dd]ependency \"?(?P<s>{_ID})\"?(?: \(tried [^)]*\))? not found"), "s"),
    (C.MISSING_SYSTEM_DEPENDENCY, re.compile(rf"No package '(?P<s>{_ID})' found"), "s"),
    (C.MISSING_SYSTEM_DEPENDENCY, re.compile(rf"Package '?(?P<s>{_ID})'?,? required by .*not found"), "s"),
    (C.MISSING_SYSTEM_DEPENDENCY, re.compile(r"Could not find a package configuration file provided by \"(?P<s>\w+)\""), "s"),
    (C.MISSING_SYSTEM_DEPENDENCY, re.compile(r"Could NOT find (?P<s>\w+)"), "s"),
    (C.MISSING_SYSTEM_DEPENDENCY, re.compile(r"fatal error: (?P<s>[\w/.+-]+?)\.h: No such file or directory"), "s"),
    (C.MISSING_SYSTEM_DEPENDENCY, re.compile(r"cannot find -l(?P<s>[\w+-]+)"), "s"),
    (C.MISSING_SYSTEM_DEPENDENCY, re.compile(r"error while loading shared libraries: lib(?P<s>[\w+-]+?)(?:[\d.-]*)\.so"), "s"),
    (C.MISSING_ENV_VAR, re.compile(r"(?P<s>[A-Z][A-Z0-9_]+): unbound variable"), "s"),
    (C.MISSING_ENV_VAR, re.compile(r"[Mm]issing (?:required )?environment variable:? ['\"]?(?P<s>[A-Z][A-Z0-9_]+)"), "s"),
    (C.MISSING_ENV_VAR, re.compile(r"environment variable ['\"]?(?P<s>[A-Z][A-Z0-9_]+)['\"]? (?:is )?not (?:set|defined)"), "s"),
    (C.MISSING_ENV_VAR, re.compile(r"\b(?P<s>[A-Z][A-Z0-9_]{2,}) (?:is )?not (?:set|defined)"), "s"),
    (C.MISSING_ENV_VAR, re.compile(r"KeyError: '(?P<s>[A-Z][A-Z0-9_]+)'"), "s"),
    (C.MISSING_ARTIFACT, re.compile(r"ENOENT: no such file or directory, \w+ '(?P<s>[^']+)'"), "s"),
    (C.MISSING_ARTIFACT, re.compile(r"No such file or directory: '(?P<s>[^']+)'"), "s"),
    (C.MISSING_ARTIFACT, re.compile(r"can't open file '(?P<s>[^']+)'"), "s"),
    (C.MISSING_ARTIFACT, re.compile(r"Cannot find module '(?P<s>[./][^']*)'"), "s"),
    (C.MISSING_ARTIFACT, re.compile(r"(?P<s>[\w./-]*[\w-]): No such file or directory"), "s"),
    (C.COMPILATION_ERROR, re.compile(r"COMPILATION ERROR|error\[E\d{4}\]|compilation terminated|undefined reference to|"
                                     r"ninja: build stopped|BUILD FAILED|Compilation failed|\.(?:c|cc|cpp|java|rs|go):\d+(?::\d+)?: error"), None),
    (C.RUNTIME_ERROR, re.compile(r"Traceback \(most recent call last\)|Segmentation fault|core dumped|panic:|Aborted|"
                                 r"EADDRINUSE|Unhandled\w* ?(?:promise )?[Rr]ejection|^\w*(?:Error|Exception)\b", re.M), None),
]

_PY_TOOLS = {"pytest", "py.test", "tox", "nox", "flake8", "black", "mypy", "pylint", "isort", "poetry",
             "pipenv", "uvicorn", "gunicorn", "flask", "streamlit", "celery", "coverage", "sphinx-build"}
_JS_TOOLS = {"jest", "mocha", "vitest", "tsc", "ts-node", "eslint", "webpack", "vite", "nodemon"}
_TOOL_PACKAGES = {
    "mvn": "maven", "gradle": "gradle", "javac": "default-jdk", "java": "default-jdk", "node": "nodejs",
    "npm": "npm", "npx": "npm", "yarn": "yarnpkg", "pip": "python3-pip", "pip3": "python3-pip",
    "python": "python-is-python3", "python3": "python3", "make": "make", "cmake": "cmake", "gcc": "gcc",
    "g++": "g++", "cc": "build-essential", "c++": "build-essential", "meson": "meson", "ninja": "ninja-build",
    "pkg-config": "pkg-config", "git": "git", "curl": "curl", "wget": "wget", "unzip": "unzip",
    "cargo": "cargo", "rustc": "rustc", "go": "golang", "ruby": "ruby", "bundle": "bundler",
    "autoreconf": "autoconf", "libtool": "libtool", "ant": "ant", "sbt": "sbt", "ffmpeg": "ffmpeg",
}
_DEV_PACKAGES = {
    "zlib": "zlib1g-dev", "openssl": "libssl-dev", "ssl": "libssl-dev", "crypto": "libssl-dev",
    "boost": "libboost-all-dev", "python": "python3-dev", "python3": "python3-dev", "ffi": "libffi-dev",
    "curl": "libcurl4-openssl-dev", "png": "libpng-dev", "jpeg": "libjpeg-dev", "z": "zlib1g-dev",
    "x11": "libx11-dev", "gl": "libgl-dev", "sqlite3": "libsqlite3-dev", "xml2": "libxml2-dev",
    "libxml-2.0": "libxml2-dev", "bz2": "libbz2-dev", "lzma": "liblzma-dev", "uuid": "uuid-dev",
    "pthread": "libc6-dev", "threads": "libc6-dev",
}
_PY_DISTS = {
    "yaml": "pyyaml", "cv2": "opencv-python-headless", "PIL": "pillow", "sklearn": "scikit-learn",
    "bs4": "beautifulsoup4", "dateutil": "python-dateutil", "dotenv": "python-dotenv", "jwt": "pyjwt",
    "Crypto": "pycryptodome", "serial": "pyserial", "magic": "python-magic", "attr": "attrs",
    "google.protobuf": "protobuf", "skimage": "scikit-image", "OpenSSL": "pyopenssl",
}
_SOURCE_SUFFIXES = {".py", ".js", ".ts", ".mjs", ".cjs", ".java", ".kt", ".c", ".cc", ".cpp", ".h",
                    ".hpp", ".go", ".rs", ".rb", ".php", ".sh"}
_TRAP = re.compile(r"failed \(exit \d+\) at lines (?P<lines>[\d ]+):")


def _line_containing(text: str, start: int, end: int) -> str:
    lo = text.rfind("\n", 0, start) + 1
    hi = text.find("\n", end)
    return text[lo:] if hi < 0 else text[lo:hi]


def _last_line(text: str) -> str:
    for line in reversed(text.splitlines()):
        if line.strip():
            return line
    return ""


def _dev_package(name: str) -> str:
    key = name.split("/")[0]
    low = key.lower()
    if low in _DEV_PACKAGES:
        return _DEV_PACKAGES[low]
    if low.endswith("-dev"):
        return low
    base = low if low.startswith("lib") else f"lib{low}"
    return f"{base}-dev"


def locate_faulty_line(outcome: ExecOutcome, bf: BashFile, subject: Optional[str] = None) -> Optional[str]:
    """Find the script line responsible for ``outcome``.

    Order: the ERR-trap line trail, an exact match of the failing command, then
    the last repairable line mentioning ``subject`` as a word.
    """
    text = f"{outcome.stderr}\n{outcome.stdout}"
    _, where = render_with_map(bf)
    section_of = {ln.line_id: sid for sid, ln in bf.all_lines()}
    for m in _TRAP.finditer(text):
        for num in m.group("lines").split():
            line_id = where.get(int(num))
            if line_id and section_of.get(line_id) in REPAIRABLE_SECTIONS:
                return line_id
    for sid, ln in bf.all_lines():
        if sid in REPAIRABLE_SECTIONS and ln.text.strip() == outcome.command.strip():
            return ln.line_id
    if subject:
        word = re.compile(rf"(?<![\w.-]){re.escape(subject)}(?![\w.-])")
        hits = [ln.line_id for sid, ln in bf.all_lines()
                if sid in REPAIRABLE_SECTIONS and word.search(ln.text) and not ln.text.lstrip().startswith("#")]
        if hits:
            return hits[-1]
    return None


def heuristic_analysis(outcome: ExecOutcome, bf: Optional[BashFile] = None) -> FailureAnalysis:
    streams = [s for s in (outcome.stderr, outcome.stdout) if s]
    category, evidence, subject = C.UNKNOWN, "", None
    rationale = "no pattern matched"
    for cat, pattern, group in _PATTERNS:
        hit = None
        for stream in streams:
            hit = pattern.search(stream)
            if hit:
                evidence = _line_containing(stream, hit.start(), hit.end())
                break
        if hit:
            category = cat
            subject = hit.group(group) if group else None
            rationale = f"matched {pattern.pattern[:60]!r}"
            break
    if category is C.MISSING_SYSTEM_DEPENDENCY and subject in _PY_TOOLS | _JS_TOOLS:
        category = C.MISSING_LANGUAGE_DEPENDENCY
    if category is C.UNKNOWN and outcome.timed_out:
        category, rationale = C.RUNTIME_ERROR, "command exceeded its time limit"
    if not evidence and streams:
        evidence = _last_line(streams[0])
    faulty = locate_faulty_line(outcome, bf, subject) if bf is not None else None
    return FailureAnalysis(category, evidence, faulty, subject, rationale)


def analyze_failure(outcome: ExecOutcome, bf: BashFile, reasoner=None) -> FailureAnalysis:
    if outcome.success:
        raise ValueError("cannot analyze a successful outcome")
    if reasoner is None:
        return heuristic_analysis(outcome, bf)
    from .reasoner import DecisionKind, DecisionRequest

    req = DecisionRequest(DecisionKind.ANALYZE_FAILURE, {
        "outcome": outcome.to_dict(),
        "script_lines": script_lines(bf),
    }, attachments={"outcome": outcome, "bashfile": bf})
    try:
        resp = reasoner.decide(req)
    except ReasonerError as exc:
        log.warning("failure analysis fell back to heuristics: %s", exc)
        return heuristic_analysis(outcome, bf)
    p = resp.payload
    evidence = p.get("evidence") or ""
    if evidence not in outcome.stderr and evidence not in outcome.stdout:
        evidence = _last_line(outcome.stderr or outcome.stdout)
    faulty = p.get("faulty_line")
    if faulty is not None and bf.line(str(faulty)) is None:
        faulty = None
    return FailureAnalysis(FailureCategory(p["category"]), evidence, faulty, p.get("subject"), resp.rationale)


def script_lines(bf: BashFile) -> list[dict]:
    return [{"id": ln.line_id, "section": sid, "text": ln.text} for sid, ln in bf.all_lines()]


# -- planning ------------------------------------------------------------------

def _quote(text: str) -> str:
    return "'" + text.replace("'", "'\"'\"'") + "'"


def _env_fix(name: str) -> str:
    value = "8080" if name.endswith("PORT") else "placeholder"
    return f'export {name}="${{{name}:-{value}}}"; persist_env "export {name}=\\"${name}\\""'


def _artifact_fix(path: str, workdir: str = "/workspace") -> Optional[str]:
    if path.startswith(workdir.rstrip("/") + "/"):
        path = path[len(workdir.rstrip("/")) + 1:]
    if path.startswith(("/", "~")) or ".." in PurePosixPath(path).parts or not path:
        return None
    p = PurePosixPath(path)
    if p.suffix.lower() in _SOURCE_SUFFIXES:
        return None
    if not p.suffix:
        return f"mkdir -p {_quote(path)}"
    parent = str(p.parent)
    prefix = f"mkdir -p {_quote(parent)} && " if parent != "." else ""
    seed = "echo '{}' >" if p.suffix.lower() == ".json" else "touch"
    return f"{prefix}[ -e {_quote(path)} ] || {seed} {_quote(path)}"


def single_fix(analysis: FailureAnalysis, bf: BashFile) -> Optional[RepairRecord]:
    """The one-line repair for ``analysis``, or None when there is none."""
    cat, subj = analysis.category, analysis.subject
    cause = f"{cat.value}: {analysis.evidence}".strip()
    if cat is C.MISSING_SYSTEM_DEPENDENCY and subj:
        if "Unable to locate package" in analysis.evidence and analysis.faulty_line:
            line = bf.line(analysis.faulty_line)
            tokens = line.text.split() if line else []
            if subj in tokens:
                kept = [t for t in tokens if t != subj]
                if kept[-1:] == ["apt_install"] or kept[-2:] in (["||", "apt_install"],):
                    return RepairRecord(RepairKind.DELETE_LINE, analysis.faulty_line, None, cause)
                return RepairRecord(RepairKind.REPLACE_LINE, analysis.faulty_line, " ".join(kept), cause)
            return None
        if re.search(r"not found$|: not found", analysis.evidence) and "command not found" in analysis.evidence \
                or re.search(rf"sh: \d+: {re.escape(subj)}: not found", analysis.evidence):
            pkg = _TOOL_PACKAGES.get(subj, subj)
        else:
            pkg = _dev_package(subj)
        return RepairRecord(RepairKind.APPEND_LINE, 3, f"apt_install {pkg}", cause)
    if cat is C.MISSING_LANGUAGE_DEPENDENCY and subj:
        if "Cannot find module" in analysis.evidence or subj in _JS_TOOLS:
            return RepairRecord(RepairKind.APPEND_LINE, 4, f"npm install {subj}", cause)
        top = subj if subj in _PY_DISTS else subj.split(".")[0]
        dist = _PY_DISTS.get(top, top)
        return RepairRecord(RepairKind.APPEND_LINE, 4, f"python3 -m pip install {dist}", cause)
    if cat is C.MISSING_ENV_VAR and subj:
        return RepairRecord(RepairKind.APPEND_LINE, 4, _env_fix(subj), cause)
    if cat is C.MISSING_ARTIFACT and subj:
        text = _artifact_fix(subj)
        if text:
            return RepairRecord(RepairKind.APPEND_LINE, 5, text, cause)
    return None


def _already_applied(fix: RepairRecord, bf: BashFile) -> bool:
    if fix.kind is not RepairKind.APPEND_LINE:
        return False
    return fix.new_text in bf.section(int(fix.target)).texts()


_SYSTEM_LINE = re.compile(r"^(?:apt_install|pkg_install)\b")
_LANG_LINE = re.compile(r"^(?:python3? -m pip install|pip3? install|npm install \S)")


def consolidate(bf: BashFile, fix: Optional[RepairRecord] = None) -> dict[int, list[str]]:
    """Target line lists for sections 3-6 after a whole-script pass.

    Duplicate lines are dropped, repair-added system installs move to section 3
    and language installs to section 4, and ``fix`` (if any) is merged in.
    """
    desired = {sid: [] for sid in REPAIRABLE_SECTIONS}
    for sid in REPAIRABLE_SECTIONS:
        for ln in bf.section(sid).lines:
            text = ln.text
            if fix is not None and fix.kind is not RepairKind.APPEND_LINE and ln.line_id == fix.target:
                if fix.kind is RepairKind.DELETE_LINE:
                    continue
                text = fix.new_text
            home = sid
            if ln.origin is LineOrigin.REPAIR:
                if _SYSTEM_LINE.match(text):
                    home = 3
                elif _LANG_LINE.match(text) and sid != 4:
                    home = 4
            desired[home].append(text)
    if fix is not None and fix.kind is RepairKind.APPEND_LINE:
        desired[int(fix.target)].append(fix.new_text)
    for sid, texts in desired.items():
        seen: set[str] = set()
        desired[sid] = [t for t in texts if not (t in seen or seen.add(t))]
    return desired


def whole_script_actions(bf: BashFile, desired: dict[int, list[str]], cause: str) -> list[RepairRecord]:
    actions = []
    for sid in REPAIRABLE_SECTIONS:
        for ln in bf.section(sid).lines:
            actions.append(RepairRecord(RepairKind.DELETE_LINE, ln.line_id, None, cause))
        for text in desired[sid]:
            actions.append(RepairRecord(RepairKind.APPEND_LINE, sid, text, cause))
    return actions


def _whole_plan(bf: BashFile, fix: Optional[RepairRecord], cause: str, why: str) -> Optional[RepairPlan]:
    desired = consolidate(bf, fix)
    if all(desired[sid] == bf.section(sid).texts() for sid in REPAIRABLE_SECTIONS):
        return None
    return RepairPlan(RepairMode.WHOLE_SCRIPT, tuple(whole_script_actions(bf, desired, cause)), why)


def required_plan_mode(mode: RepairMode, streak: int, threshold: int) -> Optional[RepairMode]:
    if mode is not RepairMode.HYBRID:
        return mode
    if streak >= threshold:
        return RepairMode.WHOLE_SCRIPT
    return None


def heuristic_plan(analysis: FailureAnalysis, bf: BashFile, mode: RepairMode = RepairMode.HYBRID,
                   streak: int = 0, threshold: int = DEFAULT_ESCALATION_THRESHOLD) -> RepairPlan:
    fix = single_fix(analysis, bf)
    if fix is not None and _already_applied(fix, bf):
        fix = None  # the same line already failed to help
    cause = f"{analysis.category.value}: {analysis.evidence}".strip()
    required = required_plan_mode(mode, streak, threshold)
    if required is RepairMode.SINGLE_COMMAND:
        if fix is None:
            raise EmptyPlan(f"no single-command fix for {analysis.category.value}")
        return RepairPlan(RepairMode.SINGLE_COMMAND, (fix,), "one-line fix from the pattern table")
    if required is RepairMode.WHOLE_SCRIPT:
        why = ("escalated after repeated single-command failures" if mode is RepairMode.HYBRID
               else "whole-script maintenance")
        plan = _whole_plan(bf, fix, cause, why)
        if plan is None:
            raise EmptyPlan("whole-script pass would not change the script")
        return plan
    if fix is not None:
        return RepairPlan(RepairMode.SINGLE_COMMAND, (fix,), "one-line fix from the pattern table")
    plan = _whole_plan(bf, None, cause, f"no one-line fix for {analysis.category.value}; consolidating script")
    if plan is None:
        raise EmptyPlan(f"no repair known for {analysis.category.value}")
    return plan


def _plan_from_payload(payload: dict, bf: BashFile, cause: str, rationale: str) -> RepairPlan:
    mode = RepairMode.from_wire(payload["mode"])
    if "sections" in payload:
        desired = {sid: [ln.text for ln in bf.section(sid).lines] for sid in REPAIRABLE_SECTIONS}
        for key, lines in payload["sections"].items():
            desired[int(key)] = list(lines)
        actions = whole_script_actions(bf, desired, cause)
    else:
        actions = [RepairRecord(RepairKind(a["kind"]), a["target"], a.get("new_text"), cause)
                   for a in payload["actions"]]
    return RepairPlan(mode, tuple(actions), rationale)


def plan_repair(analysis: FailureAnalysis, bf: BashFile, mode: RepairMode = RepairMode.HYBRID,
                reasoner=None, streak: int = 0,
                threshold: int = DEFAULT_ESCALATION_THRESHOLD,
                allow_context_edits: bool = False) -> RepairPlan:
    """Plan one repair. Raises EmptyPlan when nothing applicable exists."""
    if reasoner is None:
        return heuristic_plan(analysis, bf, mode, streak, threshold)
    from .reasoner import DecisionKind, DecisionRequest

    required = required_plan_mode(mode, streak, threshold)
    req = DecisionRequest(DecisionKind.PLAN_REPAIR, {
        "analysis": analysis.to_dict(),
        "mode": mode.value,
        "required_mode": required.wire if required else None,
        "script_lines": script_lines(bf),
        "profile": bf.profile.to_dict(),
    }, attachments={"analysis": analysis, "bashfile": bf, "mode": mode, "streak": streak,
                    "threshold": threshold})
    try:
        resp = reasoner.decide(req)
    except ReasonerError as exc:
        log.info("repair planning fell back to heuristics: %s", exc)
        return heuristic_plan(analysis, bf, mode, streak, threshold)
    cause = f"{analysis.category.value}: {analysis.evidence}".strip()
    try:
        plan = _plan_from_payload(resp.payload, bf, cause, resp.rationale)
        if required is not None and plan.mode is not required:
            raise ValueError(f"plan mode {plan.mode.value} violates required mode {required.value}")
        if not plan.actions:
            raise EmptyPlan("reasoner returned no actions")
        apply_all(bf, plan.actions, allow_context_edits)
    except (ValueError, KeyError, PatchError) as exc:
        log.warning("rejected reasoner plan (%s); using heuristics", exc)
        return heuristic_plan(analysis, bf, mode, streak, threshold)
    return plan


def template_for(bf: BashFile) -> BashFile:
    return new_from_template(bf.profile)
