"""Report schema checks and corpus-level aggregates (retention funnel, pass@k)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import jsonschema

from .errors import ValidationError
from .maturity import MaturityState, PYRAMID_LEVELS

REPORT_SCHEMA_VERSION = 1
_STATE_LABELS = [s.label for s in MaturityState]

_OUTCOME = {
    "type": "object",
    "required": ["command", "exit_code"],
    "properties": {"command": {"type": "string"}, "exit_code": {"type": "integer"},
                   "stdout": {"type": "string"}, "stderr": {"type": "string"},
                   "duration_ms": {"type": "integer"}, "truncated": {"type": "boolean"},
                   "timed_out": {"type": "boolean"}},
}
_STEP = {
    "type": "object",
    "required": ["index", "phase", "command_or_action", "state_before", "state_after"],
    "properties": {
        "index": {"type": "integer", "minimum": 1},
        "phase": {"enum": ["execution_loop", "feedback_loop", "repair"]},
        "command_or_action": {"type": "string"},
        "state_before": {"enum": _STATE_LABELS},
        "state_after": {"enum": _STATE_LABELS},
        "outcome": {"oneOf": [{"type": "null"}, _OUTCOME]},
        "level": {"enum": [*_STATE_LABELS, None]},
        "plan_mode": {"type": ["string", "null"]},
        "applied": {"type": ["boolean", "null"]},
        "detail": {"type": "string"},
    },
}
REPORT_JSON_SCHEMA = {
    "type": "object",
    "required": ["schema", "repo", "final_state", "trajectory", "repairs_applied", "steps_used", "wall_time"],
    "properties": {
        "schema": {"const": REPORT_SCHEMA_VERSION},
        "repo": {"type": "string"},
        "final_state": {"enum": _STATE_LABELS},
        "trajectory": {"type": "array", "items": _STEP},
        "repairs_applied": {"type": "integer", "minimum": 0},
        "steps_used": {"type": "integer", "minimum": 0},
        "wall_time": {"type": "number", "minimum": 0},
        "exhausted": {"type": "boolean"},
        "stop_reason": {"type": "string"},
        "source": {"type": "string"},
        "config": {"type": "object"},
    },
}


def validate_report(data, path: str = "<report>") -> None:
    errors = sorted(jsonschema.Draft7Validator(REPORT_JSON_SCHEMA).iter_errors(data),
                    key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        raise ValidationError(path, f"{where}: {err.message}")


def load_report(path) -> "DeploymentReport":
    from .deploy import DeploymentReport

    try:
        data = json.loads(open(path, encoding="utf-8").read())
    except ValueError as exc:
        raise ValidationError(str(path), f"not JSON: {exc}") from exc
    validate_report(data, str(path))
    return DeploymentReport.from_dict(data)


# -- corpus summary ------------------------------------------------------------

_FUNNEL = [(MaturityState.UNCONFIGURED, MaturityState.INSTALLABILITY),
           (MaturityState.INSTALLABILITY, MaturityState.TESTABILITY),
           (MaturityState.TESTABILITY, MaturityState.RUNNABILITY)]


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class CorpusSummary:
    per_repo: dict[str, list[str]] = field(default_factory=dict)
    total: int = 0
    counts: dict[str, int] = field(default_factory=dict)  # final state >= level
    retention: dict[str, float] = field(default_factory=dict)
    pass_at_k: dict[int, float] = field(default_factory=dict)
    target_level: str = MaturityState.RUNNABILITY.label

    def to_dict(self) -> dict:
        return {"total": self.total, "counts": self.counts, "retention": self.retention,
                "pass_at_k": {str(k): v for k, v in self.pass_at_k.items()},
                "target_level": self.target_level, "per_repo": self.per_repo}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def retention_key(lo: MaturityState, hi: MaturityState) -> str:
    return f"{lo.label}->{hi.label}"


def _final_state(r) -> tuple[str, MaturityState]:
    if isinstance(r, dict):
        return r.get("source") or r.get("repo", ""), MaturityState.from_label(r["final_state"])
    if isinstance(r, tuple):
        return r[0], MaturityState(r[1]) if isinstance(r[1], int) else MaturityState.from_label(r[1])
    return r.source or r.repo, r.final_state


def summarize(reports: Iterable, k_values: Sequence[int] = (1,),
              target_level: MaturityState = MaturityState.RUNNABILITY) -> CorpusSummary:
    """Aggregate final states.

    Counts and retention treat each report as one attempt. Pass@k groups
    reports by repo in input order; a repo is solved when any of its first
    ``k`` attempts reached ``target_level``.
    """
    finals = [_final_state(r) for r in reports]
    k_values = sorted(set(int(k) for k in k_values))
    if any(k < 1 for k in k_values):
        raise ValueError("k must be positive")
    if not finals:
        return CorpusSummary({}, 0, {lvl.label: 0 for lvl in PYRAMID_LEVELS},
                             {retention_key(lo, hi): 0.0 for lo, hi in _FUNNEL}, {k: 0.0 for k in k_values},
                             target_level.label)
    per_repo: dict[str, list[MaturityState]] = {}
    for repo, state in finals:
        per_repo.setdefault(repo, []).append(state)
    counts = {lvl.label: sum(1 for _, s in finals if s >= lvl) for lvl in PYRAMID_LEVELS}
    counts_all = {MaturityState.UNCONFIGURED: len(finals),
                  **{lvl: counts[lvl.label] for lvl in PYRAMID_LEVELS}}
    retention = {retention_key(lo, hi): _ratio(counts_all[hi], counts_all[lo]) for lo, hi in _FUNNEL}
    pass_at_k = {
        k: _ratio(sum(1 for states in per_repo.values() if any(s >= target_level for s in states[:k])),
                  len(per_repo))
        for k in k_values
    }
    return CorpusSummary({r: [s.label for s in v] for r, v in per_repo.items()}, len(finals), counts,
                         retention, pass_at_k, target_level.label)
