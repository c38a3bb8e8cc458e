"""Chat-completions style HTTP provider.

Request body::

    {"model": ..., "temperature": ..., "messages": [{"role": "system", ...},
                                                    {"role": "user", "content": prompt}]}

The reply text is read from ``choices[0].message.content`` and must contain one
JSON object (bare or inside a ```json fence).
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import urllib.error
import urllib.request
from typing import Callable, Optional

from ..errors import ReasonerError
from .prompts import SYSTEM_PROMPT, render_prompt
from .types import DecisionRequest, DecisionResponse, ProviderKind

log = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "ENVMATURITY_API_KEY"
DEFAULT_ENDPOINT_ENV = "ENVMATURITY_ENDPOINT"
REASK = ("Your previous reply could not be parsed: {error}. Reply again with only the JSON "
         "object described above.")

Transport = Callable[[str, dict, dict, float], dict]


def _http_transport(url: str, body: dict, headers: dict, timeout: float) -> dict:
    data = json.dumps(body).encode("utf-8")
    req = urllib.request.Request(url, data=data, headers=headers, method="POST")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode("utf-8"))


def extract_json(text: str) -> dict:
    fence = re.search(r"```(?:json)?\s*(\{.*?\})\s*```", text, re.S)
    if fence:
        return json.loads(fence.group(1))
    start = text.find("{")
    while start >= 0:
        depth = 0
        in_str = False
        esc = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if esc:
                    esc = False
                elif ch == "\\":
                    esc = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    try:
                        return json.loads(text[start:i + 1])
                    except ValueError:
                        break
        start = text.find("{", start + 1)
    raise ValueError("no JSON object in reply")


class RemoteProvider:
    name = ProviderKind.REMOTE

    def __init__(self, endpoint: Optional[str] = None, model: str = "gpt-4o-mini",
                 api_key_env: str = DEFAULT_API_KEY_ENV, temperature: float = 1.0,
                 timeout: float = 120.0, retries: int = 2, max_in_flight: int = 4,
                 transport: Optional[Transport] = None, fallback=None):
        self.endpoint = endpoint or os.environ.get(DEFAULT_ENDPOINT_ENV, "")
        self.model = model
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.timeout = timeout
        self.retries = retries
        self._transport = transport or _http_transport
        self._slots = threading.BoundedSemaphore(max_in_flight)
        if fallback is None:
            from .heuristic import HeuristicProvider
            fallback = HeuristicProvider()
        self.fallback = fallback

    def config(self) -> dict:
        return {"provider": "remote", "endpoint": self.endpoint, "model": self.model,
                "temperature": self.temperature}

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, messages: list[dict]) -> str:
        if not self.endpoint:
            raise ReasonerError("remote provider has no endpoint configured")
        body = {"model": self.model, "temperature": self.temperature, "messages": messages}
        last: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                with self._slots:
                    reply = self._transport(self.endpoint, body, self._headers(), self.timeout)
                return reply["choices"][0]["message"]["content"]
            except (urllib.error.URLError, OSError, TimeoutError) as exc:
                last = exc
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise ReasonerError(f"malformed chat-completion reply: {exc}") from exc
        raise ReasonerError(f"remote provider unreachable: {last}")

    def decide(self, req: DecisionRequest) -> DecisionResponse:
        messages = [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": render_prompt(req)},
        ]
        error = ""
        for attempt in range(2):
            text = self._post(messages)
            try:
                data = extract_json(text)
                rationale = str(data.pop("rationale", "") or "").strip() or text.strip()[:500] or "remote"
                return DecisionResponse(req.kind, data, rationale, ProviderKind.REMOTE)
            except ValueError as exc:
                error = str(exc)
                messages = messages + [
                    {"role": "assistant", "content": text},
                    {"role": "user", "content": REASK.format(error=error)},
                ]
        log.warning("remote reply unparseable twice (%s); using heuristic provider", error)
        resp = self.fallback.decide(req)
        return DecisionResponse(resp.kind, resp.payload,
                                f"{resp.rationale} (remote reply unparseable: {error})",
                                ProviderKind.HEURISTIC)
