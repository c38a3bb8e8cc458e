"""Deterministic, offline decision provider.

Every answer is a pure function of the request. Failure analysis and repair
planning need the live script, which arrives through ``req.attachments``.
"""

from __future__ import annotations

from ..errors import EmptyPlan, ReasonerError
from ..maturity import Action, MaturityState, PYRAMID_LEVELS, default_decision
from ..mining import classify_by_rules, extract_commands, filter_command
from ..repo_index import FileKind, classify_path
from .types import DecisionKind, DecisionRequest, DecisionResponse, ProviderKind

_SEARCH_HINTS = {
    "installability": ["requirements", "setup", "pyproject", "package.json", "pom.xml", "install"],
    "testability": ["test", "tox", "pytest", "workflow", "contributing"],
    "runnability": ["main", "cli", "app", "server", "usage", "example"],
}


def _level_name(level: MaturityState) -> str:
    return level.level_name


class HeuristicProvider:
    name = ProviderKind.HEURISTIC

    def decide(self, req: DecisionRequest) -> DecisionResponse:
        handler = getattr(self, f"_{req.kind.value}")
        payload, rationale = handler(req)
        return DecisionResponse(req.kind, payload, rationale, ProviderKind.HEURISTIC)

    # -- repository context ---------------------------------------------------

    def _sufficiency(self, req: DecisionRequest):
        files = req.context.get("files", [])
        for f in files:
            kind, _ = classify_path(f["path"])
            if kind is FileKind.BUILD_CONFIG:
                return {"verdict": "sufficient", "suggestions": []}, f"build manifest {f['path']} present"
        for f in files:
            kind, _ = classify_path(f["path"])
            if kind in (FileKind.DOCS, FileKind.CI_CONFIG, FileKind.SCRIPT):
                for cand in extract_commands(f.get("excerpt", ""), f["path"]):
                    if filter_command(cand).keep:
                        return ({"verdict": "sufficient", "suggestions": []},
                                f"{f['path']} documents setup commands")
        if not files:
            return ({"verdict": "need_more", "suggestions": ["locate dependency manifests"]},
                    "no files retrieved yet")
        return ({"verdict": "need_more", "suggestions": ["requirements", "install", "build", "setup"]},
                "no manifest or documented command among retrieved files")

    def _search_suggest(self, req: DecisionRequest):
        missing = req.context.get("missing_levels") or list(_SEARCH_HINTS)
        out: list[str] = []
        for name in missing:
            for hint in _SEARCH_HINTS.get(name, []):
                if hint not in out:
                    out.append(hint)
        return {"suggestions": out}, "path hints for levels without commands: " + ", ".join(missing)

    # -- pyramid ----------------------------------------------------------------

    def _classify(self, req: DecisionRequest):
        text = req.context.get("command", "")
        level, rule = classify_by_rules(text)
        if level is None:
            return {"level": "rejected"}, f"no classification rule matched {text!r}"
        return {"level": _level_name(level)}, f"rule {rule} assigns {level.level_name}"

    def _adjust(self, req: DecisionRequest):
        levels: dict[str, list[str]] = req.context.get("levels", {})
        facts: dict = req.context.get("repo_facts", {})
        order = [lvl.level_name for lvl in PYRAMID_LEVELS]
        present: dict[str, list[str]] = {}
        for name in order:
            for cmd in levels.get(name, []):
                present.setdefault(cmd, []).append(name)
        assignments: dict[str, str] = {}
        notes = []
        for cmd, names in present.items():
            if len(names) < 2:
                continue
            rule_level, _ = classify_by_rules(cmd)
            rule_name = rule_level.level_name if rule_level else None
            chosen = rule_name if rule_name in names else names[0]
            assignments[cmd] = chosen
            notes.append(f"{cmd!r} kept at {chosen}")
        missing = []
        taken = set(present)
        for name, cmd in _supplements(facts, levels):
            if cmd not in taken:
                missing.append({"cmd": cmd, "level": name})
                taken.add(cmd)
                notes.append(f"supplemented {cmd!r} at {name}")
        rationale = "; ".join(notes) if notes else "pyramid already consistent"
        return {"assignments": assignments, "missing": missing}, rationale

    # -- deployment -------------------------------------------------------------

    def _policy_decide(self, req: DecisionRequest):
        decision = default_decision(bool(req.context.get("satisfied")))
        return {"action": decision.action.value, "next_command": None}, decision.rationale

    def _analyze_failure(self, req: DecisionRequest):
        from ..maturity import ExecOutcome
        from ..repair import heuristic_analysis

        outcome = req.attachments.get("outcome")
        if outcome is None:
            outcome = ExecOutcome.from_dict(req.context.get("outcome", {}))
        analysis = heuristic_analysis(outcome, req.attachments.get("bashfile"))
        payload = analysis.to_dict()
        return payload, analysis.rationale or "pattern table"

    def _plan_repair(self, req: DecisionRequest):
        from ..repair import RepairMode, heuristic_plan

        bf = req.attachments.get("bashfile")
        analysis = req.attachments.get("analysis")
        if bf is None or analysis is None:
            raise ReasonerError("heuristic repair planning needs the live script and analysis")
        try:
            plan = heuristic_plan(analysis, bf, req.attachments.get("mode", RepairMode.HYBRID),
                                  req.attachments.get("streak", 0), req.attachments.get("threshold", 3))
        except EmptyPlan as exc:
            raise ReasonerError(str(exc)) from exc
        return plan.to_payload(), plan.rationale


def _supplements(facts: dict, levels: dict[str, list[str]]):
    """Commonly required commands for levels that came out empty.

    Conservative on purpose: only manifests that are certainly present lead to an
    addition, and the runnability level is never filled by guesswork.
    """
    manifests = set(facts.get("manifests", []))
    scripts = facts.get("npm_scripts", {})
    has_tests = bool(facts.get("has_tests_dir"))
    if not levels.get("installability"):
        if "requirements.txt" in manifests:
            yield "installability", "pip install -r requirements.txt"
        elif manifests & {"pyproject.toml", "setup.py"}:
            yield "installability", "pip install -e ."
        elif "package.json" in manifests:
            yield "installability", "npm install"
        elif "pom.xml" in manifests:
            yield "installability", "mvn install -DskipTests"
    if not levels.get("testability") and has_tests:
        if manifests & {"requirements.txt", "pyproject.toml", "setup.py", "setup.cfg", "tox.ini"}:
            yield "testability", "pytest"
        elif "test" in scripts:
            yield "testability", "npm test"
        elif "pom.xml" in manifests:
            yield "testability", "mvn test"


__all__ = ["HeuristicProvider", "Action"]
