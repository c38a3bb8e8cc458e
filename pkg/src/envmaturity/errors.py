class EnvMaturityError(Exception):
    """Base class for every error raised by this package."""


class RepoIndexError(EnvMaturityError, OSError):
    """The repository root is missing or unreadable."""


class RetrievalExhausted(EnvMaturityError):
    """A retrieval round was requested after the round budget was spent."""


class PatchError(EnvMaturityError):
    """A repair action could not be applied; the script is left unchanged."""


class EmitError(EnvMaturityError):
    """The rendered script does not pass the shell syntax check."""


class SandboxError(EnvMaturityError):
    pass


class SandboxUnavailable(SandboxError):
    """The container engine is not reachable."""


class ImageError(SandboxError):
    """The base image reference is invalid or could not be pulled."""


class SandboxStopped(SandboxError):
    """A command was issued against a destroyed sandbox."""


class ExecTransportError(SandboxError):
    """The engine connection failed while a command was running."""


class ReasonerError(EnvMaturityError):
    """The decision provider could not produce a usable answer."""


class ScriptedSessionError(EnvMaturityError):
    """A scripted session received a request it was not scripted for."""


class EmptyPlan(EnvMaturityError):
    """No repair could be planned for a failure."""


class ExecutionFailed(EnvMaturityError):
    """The script never exited 0 within the execution-loop budget."""

    def __init__(self, message, trajectory=None, bashfile=None):
        super().__init__(message)
        self.trajectory = trajectory or []
        self.bashfile = bashfile


class BudgetExhausted(EnvMaturityError):
    """The total step budget ran out."""


class ValidationError(EnvMaturityError):
    """An input document does not match its schema."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason
