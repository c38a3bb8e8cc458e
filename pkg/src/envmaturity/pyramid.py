"""Test Pyramid construction: retrieval, extraction, classification,
refinement and adjustment of validation commands."""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import PurePosixPath
from typing import Iterable, Optional

import jsonschema

from .errors import ReasonerError, RetrievalExhausted, ValidationError
from .maturity import MaturityState, PYRAMID_LEVELS
from .mining import CandidateCommand, FilterVerdict, classify_by_rules, extract_commands, filter_command
from .repo_index import (DEFAULT_FILES_PER_ROUND, DEFAULT_MAX_ROUNDS, DEFAULT_TEST_HINTS, FileIndex,
                         FileKind, RetrievalState, retrieve_env_files)

log = logging.getLogger(__name__)

PYRAMID_SCHEMA_VERSION = 1
ORIGINS = ("mined", "supplemented")
_LEVEL_NAMES = tuple(lvl.level_name for lvl in PYRAMID_LEVELS)

_COMMAND_SCHEMA = {
    "type": "object",
    "required": ["cmd", "source", "origin"],
    "properties": {
        "cmd": {"type": "string", "minLength": 1},
        "source": {"type": "string"},
        "origin": {"enum": list(ORIGINS)},
        "span": {"type": ["array", "null"], "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
        "round": {"type": "integer", "minimum": 0},
    },
}
PYRAMID_JSON_SCHEMA = {
    "type": "object",
    "required": ["schema", *_LEVEL_NAMES],
    "properties": {
        "schema": {"const": PYRAMID_SCHEMA_VERSION},
        **{name: {"type": "array", "items": _COMMAND_SCHEMA} for name in _LEVEL_NAMES},
    },
}


def _json_path(err: jsonschema.ValidationError) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)


@dataclass(frozen=True)
class TestPyramid:
    """Validation commands per maturity level, each level in first-seen order."""

    __test__ = False  # not a pytest test class

    installability: tuple[CandidateCommand, ...] = ()
    testability: tuple[CandidateCommand, ...] = ()
    runnability: tuple[CandidateCommand, ...] = ()

    def __post_init__(self):
        for name in _LEVEL_NAMES:
            cmds = tuple(getattr(self, name))
            texts = [c.text for c in cmds]
            if len(set(texts)) != len(texts):
                raise ValueError(f"duplicate command at {name}")
            object.__setattr__(self, name, cmds)

    def level(self, state: MaturityState) -> tuple[CandidateCommand, ...]:
        return getattr(self, state.level_name)

    def texts(self, state: MaturityState) -> list[str]:
        return [c.text for c in self.level(state)]

    def with_level(self, state: MaturityState, cmds: Iterable[CandidateCommand]) -> "TestPyramid":
        data = {name: getattr(self, name) for name in _LEVEL_NAMES}
        data[state.level_name] = tuple(cmds)
        return TestPyramid(**data)

    def add(self, state: MaturityState, cmd: CandidateCommand) -> "TestPyramid":
        if cmd.text in self.texts(state):
            return self
        return self.with_level(state, self.level(state) + (cmd,))

    def all_commands(self) -> list[tuple[MaturityState, CandidateCommand]]:
        return [(lvl, c) for lvl in PYRAMID_LEVELS for c in self.level(lvl)]

    def level_of(self, text: str) -> Optional[MaturityState]:
        for lvl in PYRAMID_LEVELS:
            if text in self.texts(lvl):
                return lvl
        return None

    def counts(self) -> dict[str, int]:
        return {name: len(getattr(self, name)) for name in _LEVEL_NAMES}

    @property
    def disjoint(self) -> bool:
        texts = [c.text for _, c in self.all_commands()]
        return len(texts) == len(set(texts))

    def __len__(self) -> int:
        return sum(self.counts().values())

    def to_dict(self) -> dict:
        out: dict = {"schema": PYRAMID_SCHEMA_VERSION}
        for name in _LEVEL_NAMES:
            out[name] = [
                {"cmd": c.text, "source": c.source_path, "origin": c.origin,
                 "span": list(c.source_span) if c.source_span else None, "round": c.extraction_round}
                for c in getattr(self, name)
            ]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data, path: str = "<pyramid>") -> "TestPyramid":
        validator = jsonschema.Draft7Validator(PYRAMID_JSON_SCHEMA)
        errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            raise ValidationError(path, f"{_json_path(err)}: {err.message}")
        levels = {}
        for name in _LEVEL_NAMES:
            cmds = []
            for item in data[name]:
                span = item.get("span")
                try:
                    cmds.append(CandidateCommand(item["cmd"], item["source"],
                                                 tuple(span) if span else None,
                                                 item.get("round", 0), item["origin"]))
                except ValueError as exc:
                    raise ValidationError(path, f"$.{name}: {exc}") from exc
            levels[name] = tuple(cmds)
        try:
            return cls(**levels)
        except ValueError as exc:
            raise ValidationError(path, str(exc)) from exc

    @classmethod
    def from_json(cls, text: str, path: str = "<pyramid>") -> "TestPyramid":
        try:
            data = json.loads(text)
        except ValueError as exc:
            raise ValidationError(path, f"not JSON: {exc}") from exc
        return cls.from_dict(data, path)


# -- classification -------------------------------------------------------------

@dataclass(frozen=True)
class ClassificationResult:
    command: CandidateCommand
    level: Optional[MaturityState]  # None means rejected
    reason: str

    def __post_init__(self):
        if not self.reason.strip():
            raise ValueError("a classification needs a reason")

    @property
    def rejected(self) -> bool:
        return self.level is None

    @property
    def outcome(self) -> str:
        return "rejected" if self.level is None else self.level.level_name


def _default_reasoner():
    from .reasoner import HeuristicProvider
    return HeuristicProvider()


def classify_command(c: CandidateCommand, reasoner=None) -> ClassificationResult:
    from .reasoner import DecisionKind, DecisionRequest, level_from_name

    req = DecisionRequest(DecisionKind.CLASSIFY, {"command": c.text, "source": c.source_path})
    reasoner = reasoner or _default_reasoner()
    try:
        resp = reasoner.decide(req)
        note = resp.rationale
    except ReasonerError as exc:
        resp = _default_reasoner().decide(req)
        note = f"{resp.rationale} (reasoner unavailable: {exc})"
    name = resp.payload["level"]
    level = None if name == "rejected" else level_from_name(name)
    return ClassificationResult(c, level, note)


# -- refinement -----------------------------------------------------------------

class Refinement(str, enum.Enum):
    ACCOMPLISHED = "accomplished"
    CONTINUE = "continue"


@dataclass(frozen=True)
class RefinementVerdict:
    verdict: Refinement
    reason: str

    @property
    def accomplished(self) -> bool:
        return self.verdict is Refinement.ACCOMPLISHED


def refinement_decision(p: TestPyramid, rounds_used: int, max_rounds: int) -> RefinementVerdict:
    if rounds_used >= max_rounds:
        return RefinementVerdict(Refinement.ACCOMPLISHED, f"search budget spent ({rounds_used}/{max_rounds})")
    counts = p.counts()
    empty = [name for name in _LEVEL_NAMES if counts[name] == 0]
    if not empty:
        return RefinementVerdict(Refinement.ACCOMPLISHED, "every level has at least one command")
    return RefinementVerdict(Refinement.CONTINUE, "no commands yet for " + ", ".join(empty))


# -- adjustment -----------------------------------------------------------------

def _rule_default(text: str, present: list[MaturityState]) -> MaturityState:
    rule_level, _ = classify_by_rules(text)
    return rule_level if rule_level in present else min(present)


def _rebuild(p: TestPyramid, placement: dict[str, MaturityState],
             extra: Iterable[tuple[MaturityState, CandidateCommand]] = ()) -> TestPyramid:
    """Place every command once; commands keep their own level's order first,
    then anything moved in from another level, then supplements."""
    own: dict[MaturityState, list[CandidateCommand]] = {lvl: [] for lvl in PYRAMID_LEVELS}
    moved: dict[MaturityState, list[CandidateCommand]] = {lvl: [] for lvl in PYRAMID_LEVELS}
    placed: set[str] = set()
    for lvl, c in p.all_commands():
        if c.text in placed:
            continue
        target = placement.get(c.text, lvl)
        if target != lvl and any(x.text == c.text for x in p.level(target)):
            continue  # its copy at the target level keeps its place
        placed.add(c.text)
        (own if target == lvl else moved)[target].append(c)
    for lvl, c in extra:
        if c.text not in placed:
            placed.add(c.text)
            moved[lvl].append(c)
    return TestPyramid(**{lvl.level_name: tuple(own[lvl] + moved[lvl]) for lvl in PYRAMID_LEVELS})


def adjust_pyramid(p: TestPyramid, advisor=None, repo_facts: Optional[dict] = None) -> TestPyramid:
    """Resolve cross-level duplicates, honour advisor re-levelling, add supplements."""
    from .reasoner import DecisionKind, DecisionRequest, level_from_name

    present: dict[str, list[MaturityState]] = {}
    for lvl, c in p.all_commands():
        present.setdefault(c.text, []).append(lvl)
    placement = {t: _rule_default(t, lvls) for t, lvls in present.items() if len(lvls) > 1}

    req = DecisionRequest(DecisionKind.ADJUST, {
        "levels": {lvl.level_name: p.texts(lvl) for lvl in PYRAMID_LEVELS},
        "repo_facts": repo_facts or {},
    })
    advisor = advisor or _default_reasoner()
    try:
        resp = advisor.decide(req)
    except ReasonerError as exc:
        log.warning("adjustment advisor failed (%s); duplicates removed, no supplements", exc)
        return _rebuild(p, placement)

    for text, name in resp.payload.get("assignments", {}).items():
        if text in present:
            placement[text] = level_from_name(name)
        else:
            log.info("advisor assigned unknown command %r; ignored", text)
    extra = []
    for item in resp.payload.get("missing", []):
        try:
            cand = CandidateCommand(item["cmd"], "", None, 0, "supplemented")
        except ValueError:
            continue
        if filter_command(cand).keep and cand.text not in present:
            extra.append((level_from_name(item["level"]), cand))
    return _rebuild(p, placement, extra)


def repo_facts(index: FileIndex) -> dict:
    manifests = sorted(e.relative_path for e in index.entries
                       if e.kind is FileKind.BUILD_CONFIG and "/" not in e.relative_path)
    test_dirs = {"tests", "test", "spec", "__tests__"}
    has_tests = any(
        test_dirs & set(PurePosixPath(e.relative_path).parts[:-1])
        or PurePosixPath(e.relative_path).name.startswith("test_")
        for e in index.entries
    )
    scripts = {}
    if "package.json" in manifests:
        try:
            scripts = json.loads(index.read("package.json") or "{}").get("scripts", {}) or {}
        except ValueError:
            scripts = {}
    return {"manifests": manifests, "has_tests_dir": has_tests,
            "npm_scripts": {k: v for k, v in scripts.items() if isinstance(v, str)},
            "languages": index.languages()}


# -- full pipeline --------------------------------------------------------------

@dataclass
class PyramidBuild:
    pyramid: TestPyramid
    retrieval: RetrievalState
    classifications: list[ClassificationResult] = field(default_factory=list)
    rejections: list[tuple[CandidateCommand, FilterVerdict]] = field(default_factory=list)
    verdicts: list[RefinementVerdict] = field(default_factory=list)

    @property
    def rounds_used(self) -> int:
        return self.retrieval.rounds_used


def _missing_levels(p: TestPyramid) -> list[str]:
    return [name for name, n in p.counts().items() if n == 0]


def build_pyramid(index: FileIndex, reasoner=None, max_rounds: int = DEFAULT_MAX_ROUNDS,
                  files_per_round: int = DEFAULT_FILES_PER_ROUND,
                  hints: Iterable[str] = DEFAULT_TEST_HINTS) -> PyramidBuild:
    """Run the five construction steps until refinement is satisfied."""
    from .reasoner import DecisionKind, DecisionRequest

    reasoner = reasoner or _default_reasoner()
    state = RetrievalState(max_rounds=max_rounds)
    build = PyramidBuild(TestPyramid(), state)
    pyramid = TestPyramid()
    query = tuple(hints)
    while True:
        try:
            files, state = retrieve_env_files(index, state, query, files_per_round)
        except RetrievalExhausted:
            break
        for path, content in files:
            for cand in extract_commands(content, path, state.rounds_used):
                verdict = filter_command(cand)
                if not verdict.keep:
                    build.rejections.append((cand, verdict))
                    continue
                result = classify_command(cand, reasoner)
                build.classifications.append(result)
                if not result.rejected:
                    pyramid = pyramid.add(result.level, cand)
        refinement = refinement_decision(pyramid, state.rounds_used, max_rounds)
        build.verdicts.append(refinement)
        if refinement.accomplished:
            break
        req = DecisionRequest(DecisionKind.SEARCH_SUGGEST, {"missing_levels": _missing_levels(pyramid),
                                                          "involved_files": list(state.involved_files)})
        try:
            new_query = tuple(reasoner.decide(req).payload["suggestions"])
        except ReasonerError:
            new_query = ()
        if not files and set(new_query) <= set(query):
            # nothing left to find with these hints; later rounds would repeat this one
            build.verdicts.append(RefinementVerdict(Refinement.ACCOMPLISHED, "no new files to retrieve"))
            break
        query = tuple(dict.fromkeys(query + new_query))
    build.pyramid = adjust_pyramid(pyramid, reasoner, repo_facts(index))
    build.retrieval = state
    return build
