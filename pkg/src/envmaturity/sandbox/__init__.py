from .base import (DEFAULT_COMMAND_TIMEOUT, DEFAULT_SCRIPT_TIMEOUT, SCRIPT_COMMAND, Executor,
                   HandleState, Mount, Network, SandboxHandle, SandboxSpec, validate_image_ref)
from .docker import DockerEngineExecutor, demux, engine_available, engine_endpoint
from .simulated import SimOutcome, SimRule, SimulatedExecutor, SimulationTable

__all__ = [
    "DEFAULT_COMMAND_TIMEOUT", "DEFAULT_SCRIPT_TIMEOUT", "DockerEngineExecutor", "Executor",
    "HandleState", "Mount", "Network", "SCRIPT_COMMAND", "SandboxHandle", "SandboxSpec",
    "SimOutcome", "SimRule", "SimulatedExecutor", "SimulationTable", "demux", "engine_available",
    "engine_endpoint", "validate_image_ref",
]
