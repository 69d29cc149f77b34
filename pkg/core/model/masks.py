"""
Attention masks and sequence roles.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from core.errors import ContractViolation, DimensionError


class Role(str, Enum):
    TEXT = "TEXT"
    TIME = "TIME"
    FRAME = "FRAME"
    AUDIO = "AUDIO"


@dataclass(frozen=True)
class AttentionMask:
    """
    Boolean L×L matrix; allow[i, j] means position i may attend to position j.

    Every row must allow its own position, so no row is ever empty.
    """

    allow: np.ndarray

    def __post_init__(self):
        allow = np.asarray(self.allow, dtype=bool)
        if allow.ndim != 2 or allow.shape[0] != allow.shape[1]:
            raise DimensionError(f"attention mask must be square, got {allow.shape}")
        if not np.all(np.diag(allow)):
            raise ContractViolation("attention mask must allow every position to attend to itself")
        allow.setflags(write=False)
        object.__setattr__(self, "allow", allow)

    @property
    def length(self) -> int:
        return self.allow.shape[0]

    @classmethod
    def causal(cls, length: int) -> 'AttentionMask':
        return cls(np.tril(np.ones((length, length), dtype=bool)))

    @classmethod
    def full(cls, length: int) -> 'AttentionMask':
        return cls(np.ones((length, length), dtype=bool))

    @classmethod
    def from_matrix(cls, allow) -> 'AttentionMask':
        return cls(np.array(allow, dtype=bool))

    @classmethod
    def for_mode(cls, mode: str, length: int) -> 'AttentionMask':
        """'full' (bidirectional) or 'causal' (lower-triangular)."""
        if mode == "full":
            return cls.full(length)
        if mode == "causal":
            return cls.causal(length)
        raise ContractViolation(f"unknown mask mode '{mode}'")
