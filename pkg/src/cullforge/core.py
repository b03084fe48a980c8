"""Domain types shared across the culling pipeline, plus box geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import Iterable


class CullError(Exception):
    """Base class for every error raised by cullforge."""


class DataError(CullError):
    """Input data failed parsing or validation."""


class ConfigError(CullError):
    """A configuration value is out of range or inconsistent."""


class InvalidBox(DataError):
    pass


class InvalidScore(DataError):
    pass


class EmptyFrameId(DataError):
    pass


class DuplicateFrameId(DataError):
    pass


class DomainError(DataError, ValueError):
    pass


class InvariantViolation(CullError):
    """An internal consistency check failed; indicates a bug, not bad input."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in full-resolution pixels, (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidBox(f"non-finite box origin ({self.x}, {self.y})")
        if not (self.w > 0 and self.h > 0) or math.isinf(self.w) or math.isinf(self.h):
            raise InvalidBox(f"box needs positive finite size, got w={self.w} h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


def _overlap_1d(a0: float, alen: float, b0: float, blen: float) -> float:
    a1, b1 = a0 + alen, b0 + blen
    # containment uses the stored length, avoiding (x + w) - x cancellation
    if a0 >= b0 and a1 <= b1:
        return alen
    if b0 >= a0 and b1 <= a1:
        return blen
    return min(a1, b1) - max(a0, b0)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    ix = _overlap_1d(a.x, a.w, b.x, b.w)
    iy = _overlap_1d(a.y, a.h, b.y, b.h)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    # rounding can push inter a hair above union for near-identical boxes
    return min(1.0, inter / union)


@dataclass(frozen=True)
class Detection:
    class_id: int
    bbox: BoundingBox
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise InvalidScore(f"score {self.score!r} outside [0, 1]")


class Source(str, Enum):
    STUDENT = "student"
    TEACHER = "teacher"


@dataclass(frozen=True)
class FrameDetections:
    frame_id: str
    source: Source
    scale: float
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        if not self.frame_id:
            raise EmptyFrameId("frame_id must be a nonempty string")
        if not (0.0 < self.scale <= 1.0):
            raise DataError(f"frame {self.frame_id}: scale {self.scale!r} outside (0, 1]")
        if not isinstance(self.detections, tuple):
            object.__setattr__(self, "detections", tuple(self.detections))
        if not isinstance(self.source, Source):
            object.__setattr__(self, "source", Source(self.source))


def validate_frame(frame: FrameDetections, score_floor: float = 0.05) -> FrameDetections:
    """Re-check a frame's invariants and drop detections scoring below ``score_floor``.

    Detection order is preserved. Raises InvalidBox, InvalidScore or EmptyFrameId.
    """
    if not frame.frame_id:
        raise EmptyFrameId("frame_id must be a nonempty string")
    for det in frame.detections:
        b = det.bbox
        if not (b.w > 0 and b.h > 0):
            raise InvalidBox(f"frame {frame.frame_id}: non-positive box size {b}")
        if not (0.0 <= det.score <= 1.0):
            raise InvalidScore(f"frame {frame.frame_id}: score {det.score!r} outside [0, 1]")
    kept = tuple(d for d in frame.detections if d.score >= score_floor)
    if len(kept) == len(frame.detections):
        return frame
    return replace(frame, detections=kept)


@dataclass(frozen=True)
class CullConfig:
    """Every tunable of the culling pipeline.

    ``stage1_keep`` defaults to six times ``target_n``. ``mse_threshold`` is a
    per-frame tolerance; the resolution search multiplies it by the size of
    the culled set.
    """

    q_weight: float = 3.0
    b_offset: float = 0.5
    target_n: int = 256
    stage1_keep: int | None = None
    iou_threshold: float = 0.5
    scale_step: float = 0.9
    min_scale: float = 0.3
    mse_threshold: float = 0.05
    score_floor: float = 0.05

    def __post_init__(self):
        if self.stage1_keep is None:
            object.__setattr__(self, "stage1_keep", 6 * self.target_n)
        if not isinstance(self.target_n, int) or self.target_n < 1:
            raise ConfigError(f"target_n must be a positive integer, got {self.target_n!r}")
        if not isinstance(self.stage1_keep, int) or self.stage1_keep < 1:
            raise ConfigError(f"stage1_keep must be a positive integer, got {self.stage1_keep!r}")
        if self.target_n > self.stage1_keep:
            raise ConfigError(f"target_n ({self.target_n}) exceeds stage1_keep ({self.stage1_keep})")
        if not 0 < self.iou_threshold < 1:
            raise ConfigError(f"iou_threshold must be in (0, 1), got {self.iou_threshold}")
        if not 0 < self.scale_step < 1:
            raise ConfigError(f"scale_step must be in (0, 1), got {self.scale_step}")
        if not 0 < self.min_scale < 1:
            raise ConfigError(f"min_scale must be in (0, 1), got {self.min_scale}")
        if not self.mse_threshold >= 0:
            raise ConfigError(f"mse_threshold must be >= 0, got {self.mse_threshold}")
        if not 0 <= self.score_floor < 1:
            raise ConfigError(f"score_floor must be in [0, 1), got {self.score_floor}")
        if not self.q_weight >= 0:
            raise ConfigError(f"q_weight must be >= 0, got {self.q_weight}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "CullConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def ranking_key(entry: tuple[str, float]) -> tuple[float, str]:
    """Sort key putting higher difficulty first, ties broken by frame_id ascending."""
    frame_id, difficulty = entry
    return (-difficulty, frame_id)


@dataclass(frozen=True)
class Manifest:
    entries: tuple[tuple[str, float], ...]
    chosen_scale: float
    config_snapshot: CullConfig
    source_count: int

    def __post_init__(self):
        entries = tuple((str(fid), float(d)) for fid, d in self.entries)
        object.__setattr__(self, "entries", entries)
        ids = [fid for fid, _ in entries]
        if len(set(ids)) != len(ids):
            raise DuplicateFrameId("manifest contains duplicate frame ids")
        # only difficulty order is checked: 9-digit serialization may merge
        # near-ties whose id order then looks reversed
        if any(a[1] < b[1] for a, b in zip(entries, entries[1:])):
            raise InvariantViolation("manifest entries are not sorted by difficulty")
        if not 0 < self.chosen_scale <= 1:
            raise InvariantViolation(f"chosen_scale {self.chosen_scale} outside (0, 1]")

    @property
    def frame_ids(self) -> list[str]:
        return [fid for fid, _ in self.entries]

    @property
    def under_filled(self) -> bool:
        return len(self.entries) < min(self.config_snapshot.target_n, self.source_count)

    def __len__(self) -> int:
        return len(self.entries)


def frame_ids_of(selection: Manifest | Iterable[str]) -> set[str]:
    if isinstance(selection, Manifest):
        return set(selection.frame_ids)
    return set(selection)
