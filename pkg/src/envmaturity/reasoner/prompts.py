"""Prompt templates for the remote provider.

These texts are original to this project and versioned by PROMPT_VERSION.
Rendering is deterministic: the same request always yields the same prompt.
"""

from __future__ import annotations

import json

from .types import DecisionKind, DecisionRequest, elide

PROMPT_VERSION = "1"
PROMPT_CONTEXT_CAP = 24000

SYSTEM_PROMPT = (
    "You configure software environments inside a disposable Linux container. "
    "Answer only with one JSON object that matches the requested schema, after an "
    "optional short explanation. Never invent commands that are not supported by the "
    "evidence you are given unless the schema explicitly asks for additions."
)

LEVEL_DEFINITIONS = {
    "installability": "build or dependency-installation commands succeed "
                      "(e.g. pip install -r requirements.txt, npm install, mvn install).",
    "testability": "test-oriented commands run: unit or smoke tests and runtime probes "
                   "(e.g. pytest, mvn test, node --version).",
    "runnability": "the main entry point or an end-to-end/integration workflow runs "
                   "(e.g. python main.py, starting the CLI, integration suites).",
}

ADJUST_QUESTIONS = (
    "Is this command appropriate for this level?",
    "What common commands are missing?",
)

_TASKS = {
    DecisionKind.SUFFICIENCY: (
        "Decide whether the files below are enough to write a setup script for this repository. "
        "If not, suggest what to search for next.",
        '{"verdict": "sufficient" | "need_more", "suggestions": [string], "rationale": string}',
    ),
    DecisionKind.SEARCH_SUGGEST: (
        "Suggest short path fragments or file names worth searching for next.",
        '{"suggestions": [string], "rationale": string}',
    ),
    DecisionKind.CLASSIFY: (
        "Assign the command to exactly one maturity level, or reject it when it is not a "
        "runnable validation command. Explain your reasoning.",
        '{"level": "installability" | "testability" | "runnability" | "rejected", "rationale": string}',
    ),
    DecisionKind.ADJUST: (
        "Review the test pyramid level by level. For each command answer both questions below, "
        "move commands that sit at the wrong level, keep each command at one level only, and "
        "conservatively add commonly required commands that are missing.",
        '{"assignments": {command: level}, "missing": [{"cmd": string, "level": level}], "rationale": string}',
    ),
    DecisionKind.ANALYZE_FAILURE: (
        "Classify the environment-related cause of this failed execution and quote the decisive "
        "line of output verbatim. Point at the faulty script line id when one is responsible.",
        '{"category": "missing_system_dependency" | "missing_language_dependency" | "missing_env_var" | '
        '"compilation_error" | "runtime_error" | "missing_artifact" | "unknown", "evidence": string, '
        '"faulty_line": string | null, "rationale": string}',
    ),
    DecisionKind.PLAN_REPAIR: (
        "Plan a repair of the setup script. A single_command plan holds exactly one action "
        "(append_line to a section id, replace_line or delete_line on a line id). A whole_script "
        "plan gives the complete new line lists of sections 3 to 6. Respect required_mode when set.",
        '{"mode": "single_command" | "whole_script", "actions": [{"kind": string, "target": string | int, '
        '"new_text": string | null}], "sections": {"3": [string], ...}, "rationale": string}',
    ),
    DecisionKind.POLICY_DECIDE: (
        "Decide whether the environment maturity state should advance, stay, or roll back after "
        "this execution. Optionally name the next pyramid command to run; it must be one of the "
        "pyramid commands listed.",
        '{"action": "advance" | "stay" | "rollback", "next_command": string | null, "rationale": string}',
    ),
}


def render_prompt(req: DecisionRequest) -> str:
    task, schema = _TASKS[req.kind]
    parts = [f"[prompt v{PROMPT_VERSION} | {req.kind.value}]", task, ""]
    if req.kind in (DecisionKind.CLASSIFY, DecisionKind.ADJUST, DecisionKind.POLICY_DECIDE):
        parts.append("Maturity levels:")
        for name, text in LEVEL_DEFINITIONS.items():
            parts.append(f"- {name}: {text}")
        parts.append("")
    if req.kind is DecisionKind.ADJUST:
        parts.append("Questions:")
        parts.extend(f"{i}. {q}" for i, q in enumerate(ADJUST_QUESTIONS, start=1))
        parts.append("")
    body = json.dumps(req.context, indent=2, sort_keys=True, ensure_ascii=False)
    parts.append("Context:")
    parts.append(elide(body, PROMPT_CONTEXT_CAP))
    parts.append("")
    if req.budget_hint is not None:
        parts.append(f"Keep the answer within {req.budget_hint} tokens.")
    parts.append("Reply with JSON matching:")
    parts.append(schema)
    return "\n".join(parts)
