"""Interactive deployment: the execution loop, the feedback loop over the test
pyramid, and repair with rollback to script re-execution."""

from __future__ import annotations

import enum
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

from .bashfile import BashFile, apply_all, check_syntax, render
from .errors import EmptyPlan, ExecutionFailed, PatchError, ReasonerError
from .maturity import (Action, ExecOutcome, MaturityState, PolicyDecision, StateHistory,
                       default_decision, max_supported_state, transition)
from .mining import CandidateCommand
from .pyramid import TestPyramid
from .report import REPORT_SCHEMA_VERSION
from .repair import (DEFAULT_ESCALATION_THRESHOLD, FailureAnalysis, RepairMode, RepairPlan,
                     analyze_failure, plan_repair)
from .sandbox.base import SCRIPT_COMMAND, SandboxHandle

log = logging.getLogger(__name__)

M = MaturityState


class Phase(str, enum.Enum):
    EXECUTION_LOOP = "execution_loop"
    FEEDBACK_LOOP = "feedback_loop"
    REPAIR = "repair"


class StopReason(str, enum.Enum):
    RUNNABLE = "runnable"
    NO_CANDIDATE = "no_candidate"
    BUDGET_EXHAUSTED = "budget_exhausted"
    EXECUTION_FAILED = "execution_failed"


@dataclass(frozen=True)
class LoopBudget:
    execution_loop_limit: int = 100
    feedback_loop_limit: int = 200
    total_step_limit: int = 200

    def __post_init__(self):
        for name in ("execution_loop_limit", "feedback_loop_limit", "total_step_limit"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def for_mode(cls, mode: RepairMode) -> "LoopBudget":
        """Defaults: 200 steps in total, 250 when only single-command repair is allowed."""
        if RepairMode(mode) is RepairMode.SINGLE_COMMAND:
            return cls(125, 250, 250)
        return cls()

    def to_dict(self) -> dict:
        return {"execution_loop_limit": self.execution_loop_limit,
                "feedback_loop_limit": self.feedback_loop_limit,
                "total_step_limit": self.total_step_limit}


@dataclass(frozen=True)
class TrajectoryStep:
    index: int
    phase: Phase
    command_or_action: str
    state_before: MaturityState
    state_after: MaturityState
    outcome: Optional[ExecOutcome] = None
    level: Optional[MaturityState] = None  # pyramid level of a feedback-loop command
    plan_mode: Optional[str] = None  # repair steps only
    applied: Optional[bool] = None  # repair steps only
    detail: str = ""

    def __post_init__(self):
        if abs(int(self.state_after) - int(self.state_before)) > 1:
            raise ValueError("a step moves the maturity state by at most one level")

    def to_dict(self) -> dict:
        return {
            "index": self.index, "phase": self.phase.value, "command_or_action": self.command_or_action,
            "state_before": self.state_before.label, "state_after": self.state_after.label,
            "outcome": self.outcome.to_dict() if self.outcome else None,
            "level": self.level.label if self.level is not None else None,
            "plan_mode": self.plan_mode, "applied": self.applied, "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryStep":
        return cls(d["index"], Phase(d["phase"]), d["command_or_action"],
                   M.from_label(d["state_before"]), M.from_label(d["state_after"]),
                   ExecOutcome.from_dict(d["outcome"]) if d.get("outcome") else None,
                   M.from_label(d["level"]) if d.get("level") else None,
                   d.get("plan_mode"), d.get("applied"), d.get("detail", ""))

    def render(self) -> str:
        states = f"{self.state_before.label} -> {self.state_after.label}"
        if self.phase is Phase.REPAIR:
            status = "applied" if self.applied else "not applied"
            mode = self.plan_mode or "none"
            line = f"{self.index:>3}. [repair] {mode}: {self.command_or_action} ({status})"
            return line + (f" | {self.detail}" if self.detail else "")
        tag = "execute" if self.phase is Phase.EXECUTION_LOOP else f"feedback:{self.level.label}"
        code = self.outcome.exit_code if self.outcome else "?"
        return f"{self.index:>3}. [{tag}] {self.command_or_action} -> exit {code} | {states}"


def history_of(trajectory) -> StateHistory:
    """Level/outcome records of the feedback-loop steps, in order."""
    h = StateHistory()
    for step in trajectory:
        if step.phase is Phase.FEEDBACK_LOOP and step.outcome is not None and step.level is not None:
            h.record(step.level, step.outcome)
    return h


@dataclass
class DeploymentReport:
    repo: str
    final_state: MaturityState
    trajectory: list[TrajectoryStep]
    repairs_applied: int
    steps_used: int
    wall_time: float
    exhausted: bool = False
    stop_reason: str = ""
    sandbox_resets: int = 0
    script_version: int = 0
    config: dict = field(default_factory=dict)
    pyramid_counts: dict = field(default_factory=dict)
    involved_files: list[str] = field(default_factory=list)
    schema: int = REPORT_SCHEMA_VERSION
    source: str = ""  # path or URL the run started from; repo is only its short name

    def __post_init__(self):
        recomputed = max_supported_state(history_of(self.trajectory))
        if recomputed != self.final_state:
            raise ValueError(f"final_state {self.final_state.label} disagrees with trajectory "
                             f"({recomputed.label})")

    def to_dict(self) -> dict:
        return {
            "schema": self.schema, "repo": self.repo, "final_state": self.final_state.label,
            "repairs_applied": self.repairs_applied, "steps_used": self.steps_used,
            "wall_time": self.wall_time, "exhausted": self.exhausted, "stop_reason": self.stop_reason,
            "sandbox_resets": self.sandbox_resets, "script_version": self.script_version,
            "config": self.config, "pyramid_counts": self.pyramid_counts,
            "involved_files": self.involved_files, "source": self.source,
            "trajectory": [s.to_dict() for s in self.trajectory],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DeploymentReport":
        from .report import validate_report  # schema check lives with the CLI-facing code

        validate_report(d)
        return cls(d["repo"], M.from_label(d["final_state"]),
                   [TrajectoryStep.from_dict(s) for s in d["trajectory"]],
                   d["repairs_applied"], d["steps_used"], d["wall_time"], d.get("exhausted", False),
                   d.get("stop_reason", ""), d.get("sandbox_resets", 0), d.get("script_version", 0),
                   d.get("config", {}), d.get("pyramid_counts", {}), d.get("involved_files", []),
                   d.get("schema", REPORT_SCHEMA_VERSION), d.get("source", ""))

    @classmethod
    def from_json(cls, text: str) -> "DeploymentReport":
        return cls.from_dict(json.loads(text))

    def render_trace(self) -> str:
        lines = [f"repo: {self.repo}"]
        lines += [s.render() for s in self.trajectory]
        tail = f"final: {self.final_state.label} (steps {self.steps_used}, repairs {self.repairs_applied}"
        tail += f", stop {self.stop_reason}" if self.stop_reason else ""
        lines.append(tail + ")")
        return "\n".join(lines) + "\n"


# -- test selection and policy ---------------------------------------------------

def select_next_test(state: MaturityState, pyramid: TestPyramid, history: StateHistory,
                     hint: Optional[str] = None, exclude=()) -> Optional[CandidateCommand]:
    """Next pyramid command to validate, or None when nothing is left.

    A policy ``hint`` is honoured only when it names a pyramid command. Otherwise
    the first not-yet-succeeded command at the state's level is chosen, moving
    up a level whenever the current one is exhausted.
    """
    if hint:
        for _, c in pyramid.all_commands():
            if c.text == hint:
                return c
        log.info("ignoring policy hint outside the pyramid: %r", hint)
    start = max(state, M.INSTALLABILITY)
    for lvl in (M.INSTALLABILITY, M.TESTABILITY, M.RUNNABILITY):
        if lvl < start:
            continue
        for c in pyramid.level(lvl):
            if c.text not in exclude and not history.succeeded(c.text):
                return c
    return None


@dataclass(frozen=True)
class PolicyChoice:
    decision: PolicyDecision
    next_command: Optional[str] = None


def _policy_decide(reasoner, state: MaturityState, level: MaturityState, outcome: ExecOutcome,
                   pyramid: TestPyramid, history: StateHistory) -> PolicyChoice:
    if reasoner is None:
        return PolicyChoice(default_decision(outcome.success))
    from .reasoner import DecisionKind, DecisionRequest

    req = DecisionRequest(DecisionKind.POLICY_DECIDE, {
        "state": state.label,
        "command": outcome.command,
        "command_level": level.level_name,
        "satisfied": outcome.success,
        "exit_code": outcome.exit_code,
        "stderr_tail": outcome.stderr[-2000:],
        "pyramid": {lvl.level_name: pyramid.texts(lvl) for lvl in (M.INSTALLABILITY, M.TESTABILITY,
                                                                   M.RUNNABILITY)},
        "succeeded": sorted({o.command for _, o in history.records if o.success}),
    })
    try:
        resp = reasoner.decide(req)
    except ReasonerError as exc:
        log.warning("policy fell back to the default rule: %s", exc)
        return PolicyChoice(default_decision(outcome.success))
    nxt = resp.payload.get("next_command")
    if nxt is not None and pyramid.level_of(nxt) is None:
        log.info("policy proposed a command outside the pyramid (%r); dropped", nxt)
        nxt = None
    return PolicyChoice(PolicyDecision(Action(resp.payload["action"]), resp.rationale), nxt)


# -- the orchestrator ---------------------------------------------------------------

@dataclass
class DeployConfig:
    repair_mode: RepairMode = RepairMode.HYBRID
    budget: Optional[LoopBudget] = None
    feedback: bool = True
    fresh_sandbox_on_rollback: bool = False
    escalation_threshold: int = DEFAULT_ESCALATION_THRESHOLD

    def __post_init__(self):
        self.repair_mode = RepairMode(self.repair_mode)
        if self.budget is None:
            self.budget = LoopBudget.for_mode(self.repair_mode)
        if self.escalation_threshold < 1:
            raise ValueError("escalation threshold must be positive")

    def to_dict(self) -> dict:
        return {"repair_mode": self.repair_mode.value, "budget": self.budget.to_dict(),
                "feedback": self.feedback, "fresh_sandbox_on_rollback": self.fresh_sandbox_on_rollback,
                "escalation_threshold": self.escalation_threshold}


class _BudgetSpent(Exception):
    pass


class Deployment:
    """State for one repository run; not shared between runs."""

    def __init__(self, executor, handle: SandboxHandle, reasoner=None, config: Optional[DeployConfig] = None,
                 policy=None):
        self.executor = executor
        self.handle = handle
        self.reasoner = reasoner
        self.policy = policy if policy is not None else reasoner
        self.config = config or DeployConfig()
        self.trajectory: list[TrajectoryStep] = []
        self.repairs_applied = 0
        self.state = M.UNCONFIGURED
        self.resets = 0
        self._streak = 0
        self._awaiting: Optional[str] = None  # target of the last single-command repair

    @property
    def budget(self) -> LoopBudget:
        return self.config.budget

    @property
    def steps_left(self) -> int:
        return self.budget.total_step_limit - len(self.trajectory)

    def _append(self, phase: Phase, text: str, before: MaturityState, after: MaturityState, **kw) -> TrajectoryStep:
        if self.steps_left <= 0:
            raise _BudgetSpent()
        step = TrajectoryStep(len(self.trajectory) + 1, phase, text, before, after, **kw)
        self.trajectory.append(step)
        return step

    # escalation bookkeeping
    def _note_failure(self) -> None:
        if self._awaiting is not None:
            self._streak += 1
            self._awaiting = None

    def _note_success(self, target: str) -> None:
        if target == "command" or self._awaiting == "script":
            self._streak = 0
            self._awaiting = None

    # -- repair ---------------------------------------------------------------

    def repair(self, bf: BashFile, outcome: ExecOutcome, target: str) -> BashFile:
        """Analyze, plan and patch; always appends exactly one Repair step."""
        analysis = analyze_failure(outcome, bf, self.reasoner)
        try:
            plan = plan_repair(analysis, bf, self.config.repair_mode, self.reasoner,
                               self._streak, self.config.escalation_threshold)
        except EmptyPlan as exc:
            self._append(Phase.REPAIR, "no plan", self.state, self.state, plan_mode=None, applied=False,
                         detail=f"{analysis.category.value}: {exc}")
            return bf
        new_bf, step = self.apply_plan(bf, plan, analysis)
        if step.applied and plan.mode is RepairMode.SINGLE_COMMAND:
            self._awaiting = target
        elif step.applied:
            self._streak = 0
            self._awaiting = None
        return new_bf

    def apply_plan(self, bf: BashFile, plan: RepairPlan,
                   analysis: Optional[FailureAnalysis] = None) -> tuple[BashFile, TrajectoryStep]:
        category = analysis.category.value if analysis else "plan"
        if plan.mode is RepairMode.SINGLE_COMMAND:
            text = plan.actions[0].describe()
        else:
            added = sum(1 for a in plan.actions if a.kind.value == "append_line")
            text = f"rebuild sections 3-6 ({added} lines)"
        try:
            if self.config.repair_mode is RepairMode.WHOLE_SCRIPT and plan.mode is RepairMode.SINGLE_COMMAND:
                raise PatchError("single-command plans are disabled in whole-script mode")
            if self.config.repair_mode is RepairMode.SINGLE_COMMAND and plan.mode is RepairMode.WHOLE_SCRIPT:
                raise PatchError("whole-script plans are disabled in single-command mode")
            new_bf = apply_all(bf, plan.actions)
            error = check_syntax(render(new_bf))
            if error:
                raise PatchError(f"patched script fails the syntax check: {error}")
        except PatchError as exc:
            step = self._append(Phase.REPAIR, text, self.state, self.state, plan_mode=plan.mode.value,
                                applied=False, detail=f"{category}: {exc}")
            return bf, step
        self.repairs_applied += 1
        step = self._append(Phase.REPAIR, text, self.state, self.state, plan_mode=plan.mode.value,
                            applied=True, detail=category)
        return new_bf, step

    # -- loops ----------------------------------------------------------------

    def execution_loop(self, bf: BashFile, repairs: bool = True) -> BashFile:
        """Run the script until it exits 0; raises ExecutionFailed on budget exhaustion."""
        limit = self.budget.execution_loop_limit if repairs else 1
        for _ in range(limit):
            before = self.state
            try:
                if self.steps_left <= 0:
                    raise _BudgetSpent()
                outcome = self.executor.run_script(self.handle, render(bf), self.handle.spec.time_limit)
            except _BudgetSpent:
                raise ExecutionFailed("total step budget spent during script execution",
                                      self.trajectory, bf) from None
            # a script that exits 0 makes the installability level the one under validation
            after = max(before, M.INSTALLABILITY) if outcome.success else before
            self._append(Phase.EXECUTION_LOOP, SCRIPT_COMMAND, before, after, outcome=outcome)
            self.state = after
            if outcome.success:
                self._note_success("script")
                return bf
            self._note_failure()
            if not repairs:
                break
            try:
                bf = self.repair(bf, outcome, "script")
            except _BudgetSpent:
                raise ExecutionFailed("total step budget spent during repair", self.trajectory, bf) from None
        raise ExecutionFailed(f"script did not exit 0 within {limit} attempts", self.trajectory, bf)

    def feedback_loop(self, bf: BashFile, pyramid: TestPyramid) -> tuple[BashFile, StopReason, bool]:
        history = StateHistory()
        hint: Optional[str] = None
        attempted: set[str] = set()
        iterations = 0
        while True:
            if iterations >= self.budget.feedback_loop_limit or self.steps_left <= 0:
                return bf, StopReason.BUDGET_EXHAUSTED, True
            exclude = attempted if not self.config.feedback else ()
            cand = select_next_test(self.state, pyramid, history, hint, exclude)
            hint = None
            if cand is None:
                return bf, StopReason.NO_CANDIDATE, False
            level = pyramid.level_of(cand.text)
            iterations += 1
            attempted.add(cand.text)
            outcome = self.executor.run_command(self.handle, cand.text, self.handle.spec.command_time_limit)
            history.record(level, outcome)
            before = self.state
            if outcome.success and level is M.RUNNABILITY:
                after = before.successor() or before
            else:
                choice = _policy_decide(self.policy, before, level, outcome, pyramid, history)
                hint = choice.next_command
                after = transition(before, outcome.success, choice.decision)
                after = max(after, M.INSTALLABILITY)
            self._append(Phase.FEEDBACK_LOOP, cand.text, before, after, outcome=outcome, level=level)
            self.state = after
            if outcome.success:
                self._note_success("command")
                if level is M.RUNNABILITY:
                    return bf, StopReason.RUNNABLE, False
                continue
            self._note_failure()
            if not self.config.feedback:
                continue
            if self.steps_left < 2:
                # a repair must be followed by re-execution; no room for both
                return bf, StopReason.BUDGET_EXHAUSTED, True
            bf = self.repair(bf, outcome, "command")
            try:
                bf = self.revalidate(bf)
            except ExecutionFailed as exc:
                exhausted = self.steps_left <= 0
                return exc.bashfile or bf, (StopReason.BUDGET_EXHAUSTED if exhausted
                                            else StopReason.EXECUTION_FAILED), exhausted

    def revalidate(self, bf: BashFile) -> BashFile:
        """Roll back to script execution after a repair."""
        if self.config.fresh_sandbox_on_rollback:
            self.handle = self.executor.reset(self.handle)
            self.resets += 1
        return self.execution_loop(bf)


def run_deployment(bf: BashFile, pyramid: TestPyramid, executor, handle: SandboxHandle, reasoner=None,
                   config: Optional[DeployConfig] = None, repo: str = "", policy=None,
                   extra_config: Optional[dict] = None) -> tuple[BashFile, DeploymentReport]:
    """Execution loop followed by the feedback loop; never raises on budget exhaustion."""
    started = time.monotonic()
    dep = Deployment(executor, handle, reasoner, config, policy)
    exhausted = False
    try:
        try:
            bf = dep.execution_loop(bf, repairs=dep.config.feedback)
        except ExecutionFailed as exc:
            bf = exc.bashfile or bf
            exhausted = dep.config.feedback
            stop = StopReason.BUDGET_EXHAUSTED if exhausted else StopReason.EXECUTION_FAILED
        else:
            bf, stop, exhausted = dep.feedback_loop(bf, pyramid)
    except _BudgetSpent:
        stop, exhausted = StopReason.BUDGET_EXHAUSTED, True
    final = max_supported_state(history_of(dep.trajectory))
    cfg = dep.config.to_dict()
    cfg.update(extra_config or {})
    report = DeploymentReport(
        repo=repo, final_state=final, trajectory=list(dep.trajectory), repairs_applied=dep.repairs_applied,
        steps_used=len(dep.trajectory), wall_time=round(time.monotonic() - started, 3), exhausted=exhausted,
        stop_reason=stop.value, sandbox_resets=dep.resets, script_version=bf.version, config=cfg,
        pyramid_counts=pyramid.counts(),
    )
    return bf, report


# functional entry points mirroring the loop stages

def execution_loop(bf: BashFile, executor, handle: SandboxHandle, reasoner=None,
                   budget: Optional[LoopBudget] = None, mode: RepairMode = RepairMode.HYBRID
                   ) -> tuple[BashFile, list[TrajectoryStep]]:
    dep = Deployment(executor, handle, reasoner, DeployConfig(mode, budget))
    bf = dep.execution_loop(bf)
    return bf, dep.trajectory


def feedback_loop(bf: BashFile, pyramid: TestPyramid, executor, handle: SandboxHandle, reasoner=None,
                  budget: Optional[LoopBudget] = None, mode: RepairMode = RepairMode.HYBRID,
                  policy=None, repo: str = "") -> DeploymentReport:
    """Feedback loop for an already validated script (state starts at installable)."""
    started = time.monotonic()
    dep = Deployment(executor, handle, reasoner, DeployConfig(mode, budget), policy)
    dep.state = M.INSTALLABILITY
    try:
        bf, stop, exhausted = dep.feedback_loop(bf, pyramid)
    except _BudgetSpent:
        stop, exhausted = StopReason.BUDGET_EXHAUSTED, True
    return DeploymentReport(repo, max_supported_state(history_of(dep.trajectory)), list(dep.trajectory),
                            dep.repairs_applied, len(dep.trajectory), round(time.monotonic() - started, 3),
                            exhausted, stop.value, dep.resets, bf.version, dep.config.to_dict(),
                            pyramid.counts())


def repair_and_revalidate(bf: BashFile, plan: RepairPlan, executor, handle: SandboxHandle,
                          reasoner=None, budget: Optional[LoopBudget] = None,
                          mode: RepairMode = RepairMode.HYBRID) -> tuple[BashFile, list[TrajectoryStep]]:
    """Apply ``plan`` and re-run the script; a plan that fails to apply leaves ``bf`` as is."""
    dep = Deployment(executor, handle, reasoner, DeployConfig(mode, budget))
    bf, _ = dep.apply_plan(bf, plan)
    try:
        bf = dep.revalidate(bf)
    except ExecutionFailed as exc:
        bf = exc.bashfile or bf
    return bf, dep.trajectory
