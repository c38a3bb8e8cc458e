"""Decision providers: remote chat API, scripted fixtures, offline heuristics."""

from .heuristic import HeuristicProvider
from .prompts import ADJUST_QUESTIONS, PROMPT_VERSION, render_prompt
from .remote import RemoteProvider, extract_json
from .scripted import ProviderRouter, ScriptedProvider
from .types import (DecisionKind, DecisionRequest, DecisionResponse, ProviderKind,
                    level_from_name, validate_payload)

__all__ = [
    "ADJUST_QUESTIONS", "DecisionKind", "DecisionRequest", "DecisionResponse", "HeuristicProvider",
    "PROMPT_VERSION", "ProviderKind", "ProviderRouter", "RemoteProvider", "ScriptedProvider",
    "extract_json", "level_from_name", "render_prompt", "validate_payload",
]
