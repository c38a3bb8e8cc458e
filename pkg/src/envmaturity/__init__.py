"""Maturity-driven environment setup for source repositories."""

from .maturity import ExecOutcome, MaturityState, aggregate_exec, compare, max_supported_state, transition

__version__ = "0.1.0"

__all__ = ["ExecOutcome", "MaturityState", "__version__", "aggregate_exec", "compare",
           "max_supported_state", "transition"]
