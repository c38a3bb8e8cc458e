from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Optional

from ..maturity import Action, MaturityState

CONTEXT_VALUE_CAP = 4000
REDACTED = "<redacted>"
_ENV_KEYS = {"env", "environment", "env_vars"}


class DecisionKind(str, enum.Enum):
    SUFFICIENCY = "sufficiency"
    CLASSIFY = "classify"
    ADJUST = "adjust"
    ANALYZE_FAILURE = "analyze_failure"
    PLAN_REPAIR = "plan_repair"
    POLICY_DECIDE = "policy_decide"
    SEARCH_SUGGEST = "search_suggest"


class ProviderKind(str, enum.Enum):
    REMOTE = "remote"
    SCRIPTED = "scripted"
    HEURISTIC = "heuristic"


def elide(text: str, cap: int) -> str:
    """Head+tail excerpt of ``text`` with an explicit elision marker."""
    if len(text) <= cap:
        return text
    keep = max(cap // 2, 1)
    return f"{text[:keep]}\n...[elided {len(text) - 2 * keep} chars]...\n{text[-keep:]}"


def sanitize(value: Any, cap: int = CONTEXT_VALUE_CAP, _key: str = "") -> Any:
    if _key.lower() in _ENV_KEYS and isinstance(value, dict):
        return {str(k): REDACTED for k in value}
    if isinstance(value, dict):
        return {str(k): sanitize(v, cap, str(k)) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v, cap) for v in value]
    if isinstance(value, str):
        return elide(value, cap)
    if isinstance(value, enum.Enum):
        return value.value
    return value


@dataclass(frozen=True)
class DecisionRequest:
    """One question for a decision provider.

    ``context`` is what a remote model sees; it is sanitized on construction.
    ``attachments`` carries live objects for in-process providers and is never
    serialized into a prompt.
    """

    kind: DecisionKind
    context: dict
    budget_hint: Optional[int] = None
    attachments: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", DecisionKind(self.kind))
        object.__setattr__(self, "context", sanitize(self.context))


_LEVELS = {"installability", "testability", "runnability"}
_CATEGORIES = {
    "missing_system_dependency", "missing_language_dependency", "missing_env_var",
    "compilation_error", "runtime_error", "missing_artifact", "unknown",
}


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def validate_payload(kind: DecisionKind, payload: Any) -> None:
    """Raise ValueError when ``payload`` does not fit the reply schema of ``kind``."""
    _require(isinstance(payload, dict), "payload must be an object")
    if kind is DecisionKind.SUFFICIENCY:
        _require(payload.get("verdict") in ("sufficient", "need_more"), "verdict must be sufficient|need_more")
        sugg = payload.get("suggestions", [])
        _require(isinstance(sugg, list) and all(isinstance(s, str) for s in sugg), "suggestions must be strings")
        if payload["verdict"] == "need_more":
            _require(bool(sugg), "need_more requires at least one suggestion")
    elif kind is DecisionKind.SEARCH_SUGGEST:
        sugg = payload.get("suggestions")
        _require(isinstance(sugg, list) and all(isinstance(s, str) for s in sugg), "suggestions must be strings")
    elif kind is DecisionKind.CLASSIFY:
        _require(payload.get("level") in _LEVELS | {"rejected"}, "level must be a pyramid level or rejected")
    elif kind is DecisionKind.ADJUST:
        assignments = payload.get("assignments", {})
        _require(isinstance(assignments, dict), "assignments must be an object")
        _require(all(v in _LEVELS for v in assignments.values()), "assignment levels must be pyramid levels")
        missing = payload.get("missing", [])
        _require(isinstance(missing, list), "missing must be a list")
        for item in missing:
            _require(isinstance(item, dict) and isinstance(item.get("cmd"), str)
                     and item.get("level") in _LEVELS, "missing entries need cmd and level")
    elif kind is DecisionKind.ANALYZE_FAILURE:
        _require(payload.get("category") in _CATEGORIES, "unknown failure category")
        _require(isinstance(payload.get("evidence", ""), str), "evidence must be text")
    elif kind is DecisionKind.PLAN_REPAIR:
        _require(payload.get("mode") in ("single_command", "whole_script"), "mode must be single_command|whole_script")
        if "sections" in payload:
            sections = payload["sections"]
            _require(isinstance(sections, dict), "sections must map section id to lines")
            for key, lines in sections.items():
                _require(str(key) in ("3", "4", "5", "6"), "whole-script plans rebuild sections 3-6 only")
                _require(isinstance(lines, list) and all(isinstance(x, str) for x in lines), "section lines must be strings")
        else:
            actions = payload.get("actions")
            _require(isinstance(actions, list), "actions must be a list")
            for a in actions:
                _require(isinstance(a, dict) and a.get("kind") in ("replace_line", "append_line", "delete_line"),
                         "action kind must be replace_line|append_line|delete_line")
                _require("target" in a, "action needs a target")
    elif kind is DecisionKind.POLICY_DECIDE:
        _require(payload.get("action") in {a.value for a in Action}, "action must be advance|stay|rollback")
        nxt = payload.get("next_command")
        _require(nxt is None or isinstance(nxt, str), "next_command must be text")


@dataclass(frozen=True)
class DecisionResponse:
    kind: DecisionKind
    payload: dict
    rationale: str
    provider: ProviderKind

    def __post_init__(self):
        object.__setattr__(self, "kind", DecisionKind(self.kind))
        object.__setattr__(self, "provider", ProviderKind(self.provider))
        if not self.rationale or not self.rationale.strip():
            raise ValueError("a decision must carry a rationale")
        validate_payload(self.kind, self.payload)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "payload": self.payload, "rationale": self.rationale}


def level_from_name(name: str) -> MaturityState:
    return MaturityState[name.upper()]
