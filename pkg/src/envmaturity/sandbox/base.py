from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Protocol

from ..errors import ImageError, SandboxStopped
from ..maturity import ExecOutcome

DEFAULT_SCRIPT_TIMEOUT = 900.0
DEFAULT_COMMAND_TIMEOUT = 300.0
SCRIPT_PATH = "/tmp/envmaturity/setup.sh"
SCRIPT_COMMAND = "bash setup.sh"

# registry[:port]/path[:tag][@digest], following the docker reference grammar
_IMAGE_REF = re.compile(
    r"^(?:(?:[a-zA-Z0-9](?:[a-zA-Z0-9-]*[a-zA-Z0-9])?(?:\.[a-zA-Z0-9](?:[a-zA-Z0-9-]*[a-zA-Z0-9])?)*"
    r"|localhost)(?::\d+)?/)?"
    r"[a-z0-9]+(?:(?:[._]|__|-+)[a-z0-9]+)*(?:/[a-z0-9]+(?:(?:[._]|__|-+)[a-z0-9]+)*)*"
    r"(?::[\w][\w.-]{0,127})?(?:@sha256:[a-f0-9]{64})?$"
)


def validate_image_ref(ref: str) -> str:
    if not isinstance(ref, str) or not _IMAGE_REF.match(ref):
        raise ImageError(f"invalid image reference: {ref!r}")
    return ref


def split_image_ref(ref: str) -> tuple[str, str]:
    """(repository, tag) with digests kept on the repository part."""
    if "@" in ref:
        return ref, ""
    head, _, last = ref.rpartition("/")
    if ":" in last:
        name, tag = last.rsplit(":", 1)
        return (f"{head}/{name}" if head else name), tag
    return ref, "latest"


class Network(str, enum.Enum):
    ENABLED = "enabled"
    DISABLED = "disabled"


@dataclass(frozen=True)
class Mount:
    host_path: str
    container_path: str
    read_only: bool = True


@dataclass(frozen=True)
class SandboxSpec:
    base_image: str = "ubuntu:22.04"
    workdir: str = "/workspace"
    mounts: tuple[Mount, ...] = ()
    env: dict = field(default_factory=dict)
    network: Network = Network.ENABLED
    time_limit: float = DEFAULT_SCRIPT_TIMEOUT
    command_time_limit: float = DEFAULT_COMMAND_TIMEOUT
    memory_limit: Optional[int] = None
    repo_path: Optional[str] = None  # host directory copied into workdir at creation

    def __post_init__(self):
        object.__setattr__(self, "network", Network(self.network))
        object.__setattr__(self, "mounts", tuple(self.mounts))
        if self.time_limit <= 0 or self.command_time_limit <= 0:
            raise ValueError("time limits must be positive")
        if not self.workdir.startswith("/"):
            raise ValueError(f"workdir must be absolute: {self.workdir}")
        for m in self.mounts:
            if not m.container_path.startswith("/"):
                raise ValueError(f"mount target must be absolute: {m.container_path}")
        if self.memory_limit is not None and self.memory_limit <= 0:
            raise ValueError("memory limit must be positive")

    def to_dict(self) -> dict:
        return {"base_image": self.base_image, "workdir": self.workdir,
                "mounts": [[m.host_path, m.container_path, m.read_only] for m in self.mounts],
                "env_names": sorted(self.env), "network": self.network.value,
                "time_limit": self.time_limit, "command_time_limit": self.command_time_limit,
                "memory_limit": self.memory_limit}


class HandleState(str, enum.Enum):
    RUNNING = "running"
    STOPPED = "stopped"


@dataclass
class SandboxHandle:
    id: str
    spec: SandboxSpec
    state: HandleState = HandleState.RUNNING
    resets: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def running(self) -> bool:
        return self.state is HandleState.RUNNING

    def require_running(self) -> None:
        if not self.running:
            raise SandboxStopped(f"sandbox {self.id} is stopped")

    def successor(self, new_id: str) -> "SandboxHandle":
        return replace(self, id=new_id, state=HandleState.RUNNING, resets=self.resets + 1,
                       warnings=list(self.warnings))


class Executor(Protocol):
    def create(self, spec: SandboxSpec) -> SandboxHandle: ...

    def run_script(self, h: SandboxHandle, script_text: str,
                   timeout: Optional[float] = None) -> ExecOutcome: ...

    def run_command(self, h: SandboxHandle, cmd: str,
                    timeout: Optional[float] = None) -> ExecOutcome: ...

    def destroy(self, h: SandboxHandle) -> None: ...

    def reset(self, h: SandboxHandle) -> SandboxHandle: ...
