"""End-to-end run: index, script, pyramid, sandbox deployment, artifacts."""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import re
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .bashfile import BashFile, detect_profile, emit_dockerfile, new_from_template, render
from .deploy import DeployConfig, DeploymentReport, LoopBudget, run_deployment
from .errors import RepoIndexError, ValidationError
from .maturity import MaturityState
from .pyramid import TestPyramid, build_pyramid
from .repair import RepairMode
from .repo_index import DEFAULT_MAX_ROUNDS, build_index, gather_env_context
from .sandbox import DockerEngineExecutor, Network, SandboxSpec, SimulatedExecutor, SimulationTable

log = logging.getLogger(__name__)

PROVIDERS = ("heuristic", "scripted", "remote")


@dataclass
class RunConfig:
    repo: str = ""
    output_dir: str = "envmaturity-out"
    target_level: str = "runnable"
    repair_mode: str = "hybrid"
    feedback: bool = True
    fresh_sandbox_on_rollback: bool = False
    execution_loop_limit: Optional[int] = None
    feedback_loop_limit: Optional[int] = None
    total_step_limit: Optional[int] = None
    escalation_threshold: int = 3
    provider: str = "heuristic"
    session: Optional[str] = None  # scripted-session JSON
    model: str = "gpt-4o-mini"
    endpoint: Optional[str] = None
    temperature: float = 1.0
    simulation: Optional[str] = None  # simulation table JSON; selects the simulated executor
    engine: Optional[str] = None
    base_image: str = "ubuntu:22.04"
    network: str = "enabled"
    time_limit: float = 900.0
    command_time_limit: float = 300.0
    memory_limit: Optional[int] = None
    pyramid_max_rounds: int = DEFAULT_MAX_ROUNDS
    env_max_rounds: int = DEFAULT_MAX_ROUNDS
    pyramid_file: Optional[str] = None
    trace: bool = False

    def __post_init__(self):
        try:
            MaturityState.from_label(self.target_level)
            RepairMode(self.repair_mode)
            Network(self.network)
        except ValueError as exc:
            raise ValidationError("config", str(exc)) from exc
        if self.provider not in PROVIDERS:
            raise ValidationError("config.provider", f"must be one of {', '.join(PROVIDERS)}")
        if self.provider == "scripted" and not self.session:
            raise ValidationError("config.session", "the scripted provider needs a session file")

    @property
    def target(self) -> MaturityState:
        return MaturityState.from_label(self.target_level)

    def budget(self) -> LoopBudget:
        base = LoopBudget.for_mode(RepairMode(self.repair_mode))
        return LoopBudget(self.execution_loop_limit or base.execution_loop_limit,
                          self.feedback_loop_limit or base.feedback_loop_limit,
                          self.total_step_limit or base.total_step_limit)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def fields(cls) -> set[str]:
        return {f.name for f in dataclasses.fields(cls)}

    @classmethod
    def from_mapping(cls, data: dict, path: str = "config") -> "RunConfig":
        unknown = set(data) - cls.fields()
        if unknown:
            raise ValidationError(path, f"unknown keys: {', '.join(sorted(unknown))}")
        return cls(**data)


def load_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) if not path.endswith(".json") else json.loads(text)
    except (yaml.YAMLError, ValueError) as exc:
        raise ValidationError(path, f"unparseable config: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError(path, "config must be a mapping")
    data = {str(k).replace("-", "_"): v for k, v in data.items()}
    unknown = set(data) - RunConfig.fields()
    if unknown:
        raise ValidationError(path, f"unknown keys: {', '.join(sorted(unknown))}")
    return data


def make_reasoner(cfg: RunConfig):
    from .reasoner import (DecisionKind, HeuristicProvider, ProviderRouter, RemoteProvider,
                           ScriptedProvider)

    if cfg.provider == "remote":
        return RemoteProvider(cfg.endpoint, cfg.model, temperature=cfg.temperature)
    if cfg.provider == "scripted":
        data = json.loads(Path(cfg.session).read_text(encoding="utf-8"))
        scripted = ScriptedProvider.from_json(data)
        kinds = {DecisionKind(item["kind"]) for item in data}
        return ProviderRouter(HeuristicProvider(), {k: scripted for k in kinds})
    return HeuristicProvider()


def provider_provenance(cfg: RunConfig, reasoner) -> dict:
    if cfg.provider == "remote":
        return reasoner.config()
    out = {"provider": cfg.provider}
    if cfg.session:
        out["session"] = os.path.basename(cfg.session)
    return out


_URL = re.compile(r"^(?:https?|git|ssh)://|^git@[\w.-]+:")


def materialize_repo(source: str) -> tuple[Path, Optional[str]]:
    """Local path for ``source``; clone URLs go to a temporary directory (returned for cleanup)."""
    if _URL.match(source):
        tmp = tempfile.mkdtemp(prefix="envmaturity-")
        proc = subprocess.run(["git", "clone", "--depth", "1", source, tmp], capture_output=True, text=True)
        if proc.returncode != 0:
            shutil.rmtree(tmp, ignore_errors=True)
            raise RepoIndexError(f"clone failed: {proc.stderr.strip()}")
        return Path(tmp), tmp
    path = Path(source)
    if not path.is_dir():
        raise RepoIndexError(f"repository not found: {source}")
    return path, None


def repo_name(source: str) -> str:
    name = source.rstrip("/").rsplit("/", 1)[-1]
    return name[:-4] if name.endswith(".git") else name


def source_id(source: str) -> str:
    """Stable identity of a repository across runs: the URL, or the absolute local path."""
    return source if _URL.match(source) else str(Path(source).resolve())


def initial_bashfile(index) -> BashFile:
    return new_from_template(detect_profile(index.paths(), index.languages()))


def make_executor(cfg: RunConfig):
    if cfg.simulation:
        return SimulatedExecutor(SimulationTable.load(cfg.simulation))
    return DockerEngineExecutor(cfg.engine)


def sandbox_spec(cfg: RunConfig, repo_path: Optional[Path]) -> SandboxSpec:
    return SandboxSpec(base_image=cfg.base_image, network=Network(cfg.network), time_limit=cfg.time_limit,
                       command_time_limit=cfg.command_time_limit, memory_limit=cfg.memory_limit,
                       repo_path=str(repo_path) if repo_path and not cfg.simulation else None)


def deploy_config(cfg: RunConfig) -> DeployConfig:
    return DeployConfig(RepairMode(cfg.repair_mode), cfg.budget(), cfg.feedback,
                        cfg.fresh_sandbox_on_rollback, cfg.escalation_threshold)


@dataclass
class RunResult:
    report: DeploymentReport
    bashfile: BashFile
    pyramid: TestPyramid
    artifacts: dict[str, Path] = field(default_factory=dict)

    def exit_code(self, target: MaturityState) -> int:
        return 0 if self.report.final_state >= target else 1


def deploy_stage(cfg: RunConfig, bf: BashFile, pyramid: TestPyramid, repo_path: Optional[Path],
                 reasoner, repo: str, involved: list[str] = ()) -> tuple[BashFile, DeploymentReport]:
    executor = make_executor(cfg)
    handle = executor.create(sandbox_spec(cfg, repo_path))
    try:
        extra = {"run": cfg.to_dict(), "reasoner": provider_provenance(cfg, reasoner)}
        bf, report = run_deployment(bf, pyramid, executor, handle, reasoner, deploy_config(cfg), repo,
                                    extra_config=extra)
    finally:
        executor.destroy(handle)
    report.involved_files = list(involved)
    report.source = source_id(cfg.repo) if cfg.repo else ""
    return bf, report


def write_artifacts(out: Path, bf: BashFile, report: DeploymentReport, pyramid: TestPyramid,
                    base_image: str, trace: bool) -> dict[str, Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = {"setup.sh": out / "setup.sh", "Dockerfile": out / "Dockerfile",
             "report.json": out / "report.json", "pyramid.json": out / "pyramid.json"}
    paths["setup.sh"].write_text(render(bf), encoding="utf-8")
    paths["Dockerfile"].write_text(emit_dockerfile(bf, base_image), encoding="utf-8")
    paths["report.json"].write_text(report.to_json(), encoding="utf-8")
    paths["pyramid.json"].write_text(pyramid.to_json(), encoding="utf-8")
    if trace:
        paths["trace.txt"] = out / "trace.txt"
        paths["trace.txt"].write_text(report.render_trace(), encoding="utf-8")
    return paths


def run(cfg: RunConfig) -> RunResult:
    repo_path, cleanup = materialize_repo(cfg.repo)
    try:
        reasoner = make_reasoner(cfg)
        index = build_index(repo_path)
        env = gather_env_context(index, reasoner, cfg.env_max_rounds)
        bf = initial_bashfile(index)
        if cfg.pyramid_file:
            pyramid = TestPyramid.from_json(Path(cfg.pyramid_file).read_text(encoding="utf-8"), cfg.pyramid_file)
        else:
            pyramid = build_pyramid(index, reasoner, cfg.pyramid_max_rounds).pyramid
        bf, report = deploy_stage(cfg, bf, pyramid, repo_path, reasoner, repo_name(cfg.repo),
                                  list(env.state.involved_files))
        artifacts = write_artifacts(Path(cfg.output_dir), bf, report, pyramid, cfg.base_image, cfg.trace)
        return RunResult(report, bf, pyramid, artifacts)
    finally:
        if cleanup:
            shutil.rmtree(cleanup, ignore_errors=True)
