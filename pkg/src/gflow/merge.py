"""Soft voting over overlapping central-region predictions.

Every central point of every patch contributes one ground-probability vote
for its global point. Votes are accumulated as a cumulative-probability map
and a vote-count map; the final label is ground exactly when the average
probability strictly exceeds 0.5. A mean of exactly 0.5 is non-ground.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassLabel
from .errors import UncoveredPointError, ValidationError


class PredictionAccumulator:
    """Per-point cumulative probability and vote count."""

    def __init__(self, n_points: int):
        if n_points < 0:
            raise ValidationError("n_points must be nonnegative")
        self.cum_prob = np.zeros(n_points, dtype=np.float64)
        self.votes = np.zeros(n_points, dtype=np.int64)

    def __len__(self) -> int:
        return self.cum_prob.shape[0]

    def accumulate(self, index: int, prob: float) -> None:
        """Add one vote for one point."""
        if not (0.0 <= prob <= 1.0):
            raise ValidationError(f"probability {prob} outside [0, 1]")
        self.cum_prob[index] += prob
        self.votes[index] += 1

    def accumulate_many(self, indices: np.ndarray, probs: np.ndarray) -> None:
        """Add one vote per (index, prob) pair; repeated indices allowed."""
        indices = np.asarray(indices, dtype=np.int64)
        probs = np.asarray(probs, dtype=np.float64)
        if indices.shape != probs.shape:
            raise ValidationError("indices and probabilities must have equal length")
        if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
            raise ValidationError("probabilities must lie in [0, 1]")
        np.add.at(self.cum_prob, indices, probs)
        np.add.at(self.votes, indices, 1)


@dataclass(frozen=True)
class MergeResult:
    labels: np.ndarray
    uncovered_count: int


def finalize(acc: PredictionAccumulator, allow_uncovered: bool = True) -> MergeResult:
    """Threshold averaged probabilities into Ground / NonGround labels.

    Points with no votes are labeled NonGround and counted when
    ``allow_uncovered`` is set (the conservative choice for DTM quality);
    otherwise they raise.
    """
    covered = acc.votes > 0
    uncovered = int(np.count_nonzero(~covered))
    if uncovered and not allow_uncovered:
        first = int(np.flatnonzero(~covered)[0])
        raise UncoveredPointError(
            f"{uncovered} points never received a vote (first: index {first})"
        )
    labels = np.full(len(acc), ClassLabel.NON_GROUND, dtype=np.uint8)
    mean = np.zeros(len(acc), dtype=np.float64)
    np.divide(acc.cum_prob, acc.votes, out=mean, where=covered)
    labels[covered & (mean > 0.5)] = ClassLabel.GROUND
    return MergeResult(labels=labels, uncovered_count=uncovered)
