"""Per-detection difficulty scores and per-frame aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .core import DomainError, DuplicateFrameId, FrameDetections, ranking_key


def _xlogx(x: float) -> float:
    return 0.0 if x == 0.0 else x * math.log(x)


def _check_unit(x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"confidence {x!r} outside [0, 1]")


def confidence_loss(x: float, q_weight: float = 3.0, b_offset: float = 0.5) -> float:
    """Difficulty of one detection with confidence ``x``.

    High for mid-range confidences, ``b_offset`` for a fully confident
    detection, so a frame's summed loss grows with its object count.
    """
    _check_unit(x)
    ex = math.exp(x)
    return -_xlogx(x) * q_weight + (1.0 - x) * ex / (ex + 1.0) + b_offset


def binary_entropy(x: float) -> float:
    _check_unit(x)
    return -_xlogx(x) - _xlogx(1.0 - x)


class ScorerKind(str, Enum):
    CONFIDENCE_LOSS = "confidence"
    BINARY_ENTROPY = "entropy"


@dataclass(frozen=True)
class DifficultyScorer:
    """Per-detection scorer; calling it on a frame returns the frame difficulty."""

    kind: ScorerKind = ScorerKind.CONFIDENCE_LOSS
    q_weight: float = 3.0
    b_offset: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", ScorerKind(self.kind))
        if not self.q_weight >= 0:
            raise DomainError(f"q_weight must be >= 0, got {self.q_weight}")

    @classmethod
    def confidence(cls, q_weight: float = 3.0, b_offset: float = 0.5) -> "DifficultyScorer":
        return cls(ScorerKind.CONFIDENCE_LOSS, q_weight, b_offset)

    @classmethod
    def entropy(cls) -> "DifficultyScorer":
        return cls(ScorerKind.BINARY_ENTROPY)

    def score(self, x: float) -> float:
        if self.kind is ScorerKind.CONFIDENCE_LOSS:
            return confidence_loss(x, self.q_weight, self.b_offset)
        return binary_entropy(x)

    def __call__(self, frame: FrameDetections) -> float:
        return frame_difficulty(frame, self)


def frame_difficulty(frame: FrameDetections, scorer: DifficultyScorer) -> float:
    """Sum of per-detection scores (summed, not averaged); 0.0 for an empty frame."""
    total = 0.0
    for det in frame.detections:
        total += scorer.score(det.score)
    return total


def rank_frames(difficulties: Iterable[tuple[str, float]]) -> list[tuple[str, float]]:
    """Order by difficulty descending, ties by frame_id ascending."""
    items = list(difficulties)
    ids = [fid for fid, _ in items]
    if len(set(ids)) != len(ids):
        seen: set[str] = set()
        dup = next(fid for fid in ids if fid in seen or seen.add(fid))
        raise DuplicateFrameId(f"frame id {dup!r} appears more than once")
    return sorted(items, key=ranking_key)
