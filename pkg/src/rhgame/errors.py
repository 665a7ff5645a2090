"""Exception types shared across the package."""

from __future__ import annotations


class StructuralError(ValueError):
    """Array shapes or indices do not match the network/population."""


class ContractError(ValueError):
    """A documented precondition of an operation was violated."""


class InfeasibleSpecError(ValueError):
    """An agent's demand cannot be placed inside its window."""


class ConfigError(ValueError):
    """Invalid scenario file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
