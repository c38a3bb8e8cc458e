"""Table-driven stand-in for a container engine.

Fixture format (a bare list of rules is also accepted)::

    {"rules": [{"match": "pytest", "mode": "exact", "on": "command",
                "outcomes": [{"exit": 1, "stderr": "..."}, {"exit": 0}]}],
     "default": {"exit": 127, "stderr": "command not found"}}

``match`` may be a list, in which case every entry must match. Modes are
``exact`` (default), ``prefix``, ``contains`` and ``regex``; ``on`` selects
scripts, commands or ``any``. The first matching rule wins and its outcomes are
consumed in order, the last one repeating. Cursors live on the executor, so
they survive sandbox resets.
"""

from __future__ import annotations

import itertools
import json
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema

from ..errors import ValidationError
from ..maturity import ExecOutcome
from .base import SCRIPT_COMMAND, HandleState, SandboxHandle, SandboxSpec, validate_image_ref

_OUTCOME_SCHEMA = {
    "type": "object",
    "properties": {
        "exit": {"type": "integer"},
        "stdout": {"type": "string"},
        "stderr": {"type": "string"},
        "timeout": {"type": "boolean"},
        "duration_ms": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}
_RULE_SCHEMA = {
    "type": "object",
    "required": ["match", "outcomes"],
    "properties": {
        "match": {"oneOf": [{"type": "string"}, {"type": "array", "items": {"type": "string"}, "minItems": 1}]},
        "mode": {"enum": ["exact", "prefix", "contains", "regex"]},
        "on": {"enum": ["script", "command", "any"]},
        "outcomes": {"type": "array", "items": _OUTCOME_SCHEMA, "minItems": 1},
        "note": {"type": "string"},
    },
    "additionalProperties": False,
}
TABLE_SCHEMA = {
    "oneOf": [
        {"type": "array", "items": _RULE_SCHEMA},
        {"type": "object", "required": ["rules"],
         "properties": {"rules": {"type": "array", "items": _RULE_SCHEMA}, "default": _OUTCOME_SCHEMA},
         "additionalProperties": False},
    ]
}


@dataclass(frozen=True)
class SimOutcome:
    exit: int = 0
    stdout: str = ""
    stderr: str = ""
    timeout: bool = False
    duration_ms: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SimOutcome":
        return cls(d.get("exit", 0), d.get("stdout", ""), d.get("stderr", ""),
                   d.get("timeout", False), d.get("duration_ms", 0))


@dataclass(frozen=True)
class SimRule:
    match: tuple[str, ...]
    outcomes: tuple[SimOutcome, ...]
    mode: str = "exact"
    on: str = "any"

    def applies(self, target: str, text: str) -> bool:
        if self.on != "any" and self.on != target:
            return False
        return all(self._one(m, text) for m in self.match)

    def _one(self, pattern: str, text: str) -> bool:
        if self.mode == "exact":
            return text.strip() == pattern.strip()
        if self.mode == "prefix":
            return text.lstrip().startswith(pattern)
        if self.mode == "contains":
            return pattern in text
        return re.search(pattern, text, re.M) is not None


DEFAULT_UNMATCHED = SimOutcome(127, "", "simulated: no rule for this command")


@dataclass(frozen=True)
class SimulationTable:
    rules: tuple[SimRule, ...]
    default: SimOutcome = DEFAULT_UNMATCHED

    @classmethod
    def from_json(cls, data, path: str = "<simulation>") -> "SimulationTable":
        try:
            jsonschema.validate(data, TABLE_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ValidationError(path, exc.message) from exc
        if isinstance(data, list):
            data = {"rules": data}
        rules = []
        for r in data["rules"]:
            match = (r["match"],) if isinstance(r["match"], str) else tuple(r["match"])
            if r.get("mode") == "regex":
                for m in match:
                    try:
                        re.compile(m)
                    except re.error as exc:
                        raise ValidationError(path, f"bad regex {m!r}: {exc}") from exc
            rules.append(SimRule(match, tuple(SimOutcome.from_dict(o) for o in r["outcomes"]),
                                 r.get("mode", "exact"), r.get("on", "any")))
        default = SimOutcome.from_dict(data["default"]) if "default" in data else DEFAULT_UNMATCHED
        return cls(tuple(rules), default)

    @classmethod
    def load(cls, path: str | Path) -> "SimulationTable":
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except ValueError as exc:
            raise ValidationError(str(path), f"not JSON: {exc}") from exc
        return cls.from_json(data, str(path))


class SimulatedExecutor:
    """Deterministic executor: identical call sequences give identical outcomes."""

    def __init__(self, table: SimulationTable):
        self.table = table
        self._cursors = [0] * len(table.rules)
        self._ids = itertools.count(1)
        self._lock = threading.Lock()
        self.calls: list[tuple[str, str, str]] = []  # (handle id, target, text)

    def create(self, spec: SandboxSpec) -> SandboxHandle:
        validate_image_ref(spec.base_image)
        return SandboxHandle(f"sim-{next(self._ids)}", spec)

    def _next(self, target: str, text: str) -> SimOutcome:
        with self._lock:
            for i, rule in enumerate(self.table.rules):
                if rule.applies(target, text):
                    idx = min(self._cursors[i], len(rule.outcomes) - 1)
                    self._cursors[i] += 1
                    return rule.outcomes[idx]
        return self.table.default

    def _run(self, h: SandboxHandle, target: str, text: str, label: str) -> ExecOutcome:
        h.require_running()
        self.calls.append((h.id, target, text))
        o = self._next(target, text)
        return ExecOutcome.capture(label, 124 if o.timeout else o.exit, o.stdout, o.stderr,
                                   o.duration_ms, timed_out=o.timeout)

    def run_script(self, h: SandboxHandle, script_text: str, timeout: Optional[float] = None) -> ExecOutcome:
        return self._run(h, "script", script_text, SCRIPT_COMMAND)

    def run_command(self, h: SandboxHandle, cmd: str, timeout: Optional[float] = None) -> ExecOutcome:
        return self._run(h, "command", cmd, cmd)

    def destroy(self, h: SandboxHandle) -> None:
        h.state = HandleState.STOPPED

    def reset(self, h: SandboxHandle) -> SandboxHandle:
        self.destroy(h)
        return h.successor(f"sim-{next(self._ids)}")
