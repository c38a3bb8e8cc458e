"""Maturity hierarchy: ordered states, the exec oracle and the transition skeleton.

Everything here is a pure value or a pure function. Callers own persistence.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional

DEFAULT_STREAM_CAP = 64 * 1024
TIMEOUT_EXIT_CODE = 124


class MaturityState(enum.IntEnum):
    UNCONFIGURED = 0
    INSTALLABILITY = 1
    TESTABILITY = 2
    RUNNABILITY = 3

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def level_name(self) -> str:
        """Key used for this level in pyramid documents (``installability``...)."""
        return self.name.lower()

    @classmethod
    def from_label(cls, text: str) -> "MaturityState":
        key = text.strip().lower()
        for state, label in _LABELS.items():
            if key in (label, state.name.lower()):
                return state
        raise ValueError(f"unknown maturity state: {text!r}")

    def successor(self) -> Optional["MaturityState"]:
        if self is MaturityState.RUNNABILITY:
            return None
        return MaturityState(self + 1)

    def predecessor(self) -> Optional["MaturityState"]:
        if self is MaturityState.UNCONFIGURED:
            return None
        return MaturityState(self - 1)


_LABELS = {
    MaturityState.UNCONFIGURED: "unconfigured",
    MaturityState.INSTALLABILITY: "installable",
    MaturityState.TESTABILITY: "testable",
    MaturityState.RUNNABILITY: "runnable",
}

#: The three levels that own pyramid commands, lowest first.
PYRAMID_LEVELS = (
    MaturityState.INSTALLABILITY,
    MaturityState.TESTABILITY,
    MaturityState.RUNNABILITY,
)


class Ordering(enum.IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


def compare(a: MaturityState, b: MaturityState) -> Ordering:
    if a < b:
        return Ordering.LESS
    if a > b:
        return Ordering.GREATER
    return Ordering.EQUAL


def truncate_stream(text: str, cap: int = DEFAULT_STREAM_CAP) -> tuple[str, bool]:
    """Keep the first and last ``cap // 2`` bytes of ``text``.

    Error messages usually sit at the tail of a log, so the tail survives.
    """
    raw = text.encode("utf-8", errors="replace")
    if len(raw) <= cap:
        return text, False
    half = cap // 2
    head = raw[:half].decode("utf-8", errors="ignore")
    tail = raw[len(raw) - half:].decode("utf-8", errors="ignore")
    elided = len(raw) - 2 * half
    return f"{head}\n...[{elided} bytes truncated]...\n{tail}", True


@dataclass(frozen=True)
class ExecOutcome:
    command: str
    exit_code: int
    stdout: str = ""
    stderr: str = ""
    duration_ms: int = 0
    truncated: bool = False
    timed_out: bool = False

    def __post_init__(self):
        if self.timed_out and self.exit_code == 0:
            raise ValueError("a timed-out outcome cannot report exit code 0")

    @property
    def success(self) -> bool:
        return self.exit_code == 0

    @classmethod
    def capture(cls, command: str, exit_code: int, stdout: str, stderr: str,
                duration_ms: int = 0, timed_out: bool = False,
                cap: int = DEFAULT_STREAM_CAP) -> "ExecOutcome":
        out, t1 = truncate_stream(stdout, cap)
        err, t2 = truncate_stream(stderr, cap)
        if timed_out:
            exit_code = TIMEOUT_EXIT_CODE
        return cls(command, exit_code, out, err, duration_ms, t1 or t2, timed_out)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "exit_code": self.exit_code,
            "stdout": self.stdout,
            "stderr": self.stderr,
            "duration_ms": self.duration_ms,
            "truncated": self.truncated,
            "timed_out": self.timed_out,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExecOutcome":
        return cls(
            command=data["command"],
            exit_code=int(data["exit_code"]),
            stdout=data.get("stdout", ""),
            stderr=data.get("stderr", ""),
            duration_ms=int(data.get("duration_ms", 0)),
            truncated=bool(data.get("truncated", False)),
            timed_out=bool(data.get("timed_out", False)),
        )


@dataclass
class StateHistory:
    """Append-only record of (level, outcome) pairs in execution order."""

    _records: list[tuple[MaturityState, ExecOutcome]] = field(default_factory=list)

    @property
    def records(self) -> tuple[tuple[MaturityState, ExecOutcome], ...]:
        return tuple(self._records)

    def record(self, level: MaturityState, outcome: ExecOutcome) -> None:
        if level not in PYRAMID_LEVELS:
            raise ValueError(f"commands belong to a pyramid level, not {level.label}")
        self._records.append((level, outcome))

    def outcomes_at(self, level: MaturityState) -> list[ExecOutcome]:
        return [o for lvl, o in self._records if lvl == level]

    def succeeded(self, command: str) -> bool:
        return any(o.success and o.command == command for _, o in self._records)

    def __len__(self) -> int:
        return len(self._records)


class Action(enum.Enum):
    ADVANCE = "advance"
    STAY = "stay"
    ROLLBACK = "rollback"


@dataclass(frozen=True)
class PolicyDecision:
    action: Action
    rationale: str = ""


def aggregate_exec(outcomes: Iterable[ExecOutcome]) -> bool:
    """A level is satisfied as soon as one of its commands exits 0."""
    return any(o.success for o in outcomes)


def default_decision(level_satisfied: bool) -> PolicyDecision:
    if level_satisfied:
        return PolicyDecision(Action.ADVANCE, "validation succeeded")
    return PolicyDecision(Action.ROLLBACK, "validation failed")


def transition(current: MaturityState, level_satisfied: bool,
               decision: Optional[PolicyDecision] = None) -> MaturityState:
    """Apply one policy step; boundaries clamp instead of raising."""
    if decision is None:
        decision = default_decision(level_satisfied)
    if decision.action is Action.ADVANCE:
        nxt = current.successor()
    elif decision.action is Action.ROLLBACK:
        nxt = current.predecessor()
    else:
        nxt = None
    return current if nxt is None else nxt


def max_supported_state(history: StateHistory | Iterable[tuple[MaturityState, ExecOutcome]]
                        ) -> MaturityState:
    records = history.records if isinstance(history, StateHistory) else history
    best = MaturityState.UNCONFIGURED
    for level, outcome in records:
        if outcome.success and level > best:
            best = level
    return best
