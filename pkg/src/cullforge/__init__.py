"""Cull unlabeled video-frame datasets down to small hard-example training sets."""

from .core import (
    BoundingBox,
    CullConfig,
    CullError,
    DataError,
    Detection,
    FrameDetections,
    Manifest,
    Source,
    iou,
    validate_frame,
)
from .scoring import DifficultyScorer, binary_entropy, confidence_loss, frame_difficulty, rank_frames

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "CullConfig",
    "CullError",
    "DataError",
    "Detection",
    "DifficultyScorer",
    "FrameDetections",
    "Manifest",
    "Source",
    "binary_entropy",
    "confidence_loss",
    "frame_difficulty",
    "iou",
    "rank_frames",
    "validate_frame",
]
