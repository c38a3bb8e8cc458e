from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Iterable, Mapping, Optional

from ..errors import ScriptedSessionError
from .types import DecisionKind, DecisionRequest, DecisionResponse, ProviderKind


class ScriptedProvider:
    """Replays canned responses strictly in order.

    A request whose kind differs from the next scripted entry halts the session:
    that call and every later one raise ScriptedSessionError.
    """

    name = ProviderKind.SCRIPTED

    def __init__(self, entries: Iterable[tuple[DecisionKind, DecisionResponse]]):
        self._entries = list(entries)
        self._cursor = 0
        self._halted: Optional[str] = None
        self._lock = threading.Lock()
        self.requests: list[DecisionRequest] = []

    @classmethod
    def from_json(cls, data: list) -> "ScriptedProvider":
        entries = []
        for i, item in enumerate(data):
            kind = DecisionKind(item["kind"])
            try:
                resp = DecisionResponse(kind, item.get("payload", {}), item.get("rationale", "scripted"),
                                        ProviderKind.SCRIPTED)
            except ValueError as exc:
                raise ScriptedSessionError(f"entry {i}: {exc}") from exc
            entries.append((kind, resp))
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path) -> "ScriptedProvider":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    @property
    def remaining(self) -> int:
        return len(self._entries) - self._cursor

    def decide(self, req: DecisionRequest) -> DecisionResponse:
        with self._lock:
            if self._halted:
                raise ScriptedSessionError(f"session halted: {self._halted}")
            self.requests.append(req)
            if self._cursor >= len(self._entries):
                self._halted = f"no scripted entry left for {req.kind.value} request"
                raise ScriptedSessionError(self._halted)
            expected, resp = self._entries[self._cursor]
            if expected is not req.kind:
                self._halted = (f"entry {self._cursor} expects {expected.value}, "
                                f"got {req.kind.value}")
                raise ScriptedSessionError(self._halted)
            self._cursor += 1
            return resp


class ProviderRouter:
    """Send each request kind to its own provider, falling back to ``default``."""

    def __init__(self, default, overrides: Optional[Mapping[DecisionKind, object]] = None):
        self.default = default
        self.overrides = dict(overrides or {})

    @property
    def name(self):
        return getattr(self.default, "name", ProviderKind.HEURISTIC)

    def provider_for(self, kind: DecisionKind):
        return self.overrides.get(kind, self.default)

    def decide(self, req: DecisionRequest) -> DecisionResponse:
        return self.provider_for(req.kind).decide(req)
