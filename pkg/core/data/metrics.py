"""
Sequence metrics.
"""

from typing import Sequence

from core.errors import ContractViolation


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Edit distance with unit insertion, deletion and substitution costs."""
    prev = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        curr = [i] + [0] * len(b)
        for j in range(1, len(b) + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            curr[j] = min(prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + cost)
        prev = curr
    return prev[len(b)]


def token_error_rate(hyp: Sequence[int], ref: Sequence[int]) -> float:
    """
    Levenshtein(hyp, ref) / len(ref).

    Not symmetric: normalization uses the reference length only.

    Raises:
        ContractViolation: if ref is empty
    """
    if len(ref) == 0:
        raise ContractViolation("token error rate needs a non-empty reference")
    return levenshtein(list(hyp), list(ref)) / len(ref)


def token_accuracy(hyp: Sequence[int], ref: Sequence[int]) -> float:
    """1 - token error rate, floored at 0."""
    return max(0.0, 1.0 - token_error_rate(hyp, ref))
