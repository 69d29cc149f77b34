"""
Packed sequences: embedding rows tagged with the role each position plays.
"""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

from core.errors import ContractViolation, DimensionError
from core.model.masks import Role
from core.numerics.functional import concat
from core.numerics.tensor import Tensor


@dataclass
class PackedSequence:
    embeddings: Tensor
    roles: List[Role]
    loss_positions: List[int] = field(default_factory=list)

    def __post_init__(self):
        if self.embeddings.ndim != 2:
            raise DimensionError(f"pack embeddings must be L×d, got {self.embeddings.shape}")
        if len(self.roles) != self.embeddings.shape[0]:
            raise DimensionError(f"{len(self.roles)} roles for {self.embeddings.shape[0]} positions")
        for p in self.loss_positions:
            if not 0 <= p < self.length:
                raise ContractViolation(f"loss position {p} outside [0, {self.length})")

    @property
    def length(self) -> int:
        return len(self.roles)

    def positions(self, role: Role) -> List[int]:
        return [i for i, r in enumerate(self.roles) if r == role]

    @classmethod
    def from_segments(cls, segments: Sequence[Tuple[Role, Tensor]], loss_positions: Sequence[int] = ()) -> 'PackedSequence':
        """Concatenate (role, L_k×d embeddings) segments in order."""
        roles: List[Role] = []
        for role, rows in segments:
            roles.extend([role] * rows.shape[0])
        embeddings = concat([rows for _, rows in segments], axis=0)
        return cls(embeddings=embeddings, roles=roles, loss_positions=list(loss_positions))
