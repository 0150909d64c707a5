"""Exception hierarchy shared by all cgl modules."""

from __future__ import annotations


class CglError(Exception):
    """Base class for all library errors."""


class SchemaError(CglError):
    """A document violates the JSON schema; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class InvariantError(CglError):
    """A domain type invariant is violated (bad distribution, dangling id, ...)."""


class SolverError(CglError):
    """The LP solver failed (cycling beyond the pivot cap, singular system)."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class NonConvergedError(CglError):
    """A fixed-point computation did not converge and the caller required it."""


class RefusalError(CglError):
    """A precondition makes the request unanswerable (size cap, missing report)."""


class AbmQueryError(CglError):
    """A local interaction failed the aBM query the synthesis needs.

    Carries the state and the environment that witnessed the failure.
    """

    def __init__(self, state: str, env):
        super().__init__(f"local interaction at {state!r} is not aBM for the queried environment")
        self.state = state
        self.env = env
