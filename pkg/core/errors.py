"""
Exception hierarchy for DualMask-Core.

Every error carries the process exit code the command-line surface reports
for it, so library code only raises and `core.cli` decides how to exit.
"""

from typing import Optional


class DualMaskError(Exception):
    """Base class for all errors raised by DualMask-Core."""

    exit_code = 3


class UsageError(DualMaskError):
    """Invalid flag combination, detected before any compute."""

    exit_code = 2


class ConfigError(DualMaskError):
    """Invalid configuration or checkpoint/corpus incompatibility."""


class DataError(DualMaskError):
    """Unreadable or ill-formed corpus, frame file, or output location."""


class DimensionError(DualMaskError, ValueError):
    """Operand shapes do not agree."""


class ContractViolation(DualMaskError, ValueError):
    """A documented precondition of an operation does not hold."""


class DomainError(DualMaskError, ValueError):
    """A scalar argument lies outside its admissible range."""


class CapacityError(DualMaskError):
    """A packed sequence would exceed the model's max_positions."""

    def __init__(self, length: int, max_positions: int, what: str = "sequence"):
        super().__init__(
            f"{what} of length {length} exceeds max_positions={max_positions}"
        )
        self.length = length
        self.max_positions = max_positions


class NumericAbort(DualMaskError):
    """Training hit a non-finite gradient and must stop."""

    exit_code = 4

    def __init__(self, step: int, parameter: Optional[str], norm: float):
        super().__init__(
            f"non-finite gradient at step {step} (parameter={parameter}, global_norm={norm})"
        )
        self.step = step
        self.parameter = parameter
        self.norm = norm


class CheckpointError(DualMaskError):
    """Checkpoint could not be written or read."""

    exit_code = 4
