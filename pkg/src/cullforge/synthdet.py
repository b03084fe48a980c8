"""Deterministic synthetic scenes and simulated student/teacher detectors.

Scenes carry planted per-object hardness, so culling strategies can be
scored against a known hard set without running any CNN.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterable, Protocol, Sequence

import numpy as np

from .core import BoundingBox, DataError, Detection, FrameDetections, Source, ranking_key

FRAME_W, FRAME_H = 1280, 720
CELL_W, CELL_H = 160, 120
GRID_COLS, GRID_ROWS = FRAME_W // CELL_W, FRAME_H // CELL_H

# student scores below this are not reported at all
DETECTABILITY_FLOOR = 0.02
# score drop reached just before an object vanishes at its min_visible_scale
MAX_VISIBILITY_PENALTY = 0.5
# student box displacement, as a fraction of box size, per unit hardness
LOCALIZATION_ERROR = 0.6
# horizontal false-positive offsets in box widths; x + 2w stays inside a grid cell
FALSE_POSITIVE_OFFSETS = (0.7, 1.0)

_STD_NORMAL = NormalDist()


class TooFewFrames(DataError):
    pass


class DetectorAdapter(Protocol):
    def detect(self, frame_id: str, scale: float) -> FrameDetections: ...


@dataclass(frozen=True)
class SceneObject:
    class_id: int
    bbox: BoundingBox
    hardness: float
    min_visible_scale: float

    def __post_init__(self):
        if not 0.0 <= self.hardness <= 1.0:
            raise DataError(f"hardness {self.hardness} outside [0, 1]")
        if not 0.0 < self.min_visible_scale <= 1.0:
            raise DataError(f"min_visible_scale {self.min_visible_scale} outside (0, 1]")


@dataclass(frozen=True)
class SyntheticScene:
    frame_id: str
    objects: tuple[SceneObject, ...] = ()

    @property
    def total_hardness(self) -> float:
        return sum(o.hardness for o in self.objects)


@dataclass(frozen=True)
class SynthParams:
    seed: int = 0
    n_frames: int = 1000
    empty_frame_fraction: float = 0.3
    hard_frame_fraction: float = 0.05
    objects_per_frame: tuple[int, int] = (1, 4)
    confidence_noise: float = 0.02
    class_count: int = 2
    # hardness range of ordinary objects; kept below the hard-object floor
    easy_hardness: tuple[float, float] = (0.0, 0.15)
    hard_hardness: tuple[float, float] = (0.7, 0.9)

    def __post_init__(self):
        if not 0 <= self.empty_frame_fraction <= 1 or not 0 <= self.hard_frame_fraction <= 1:
            raise DataError("frame fractions must lie in [0, 1]")
        if self.empty_frame_fraction + self.hard_frame_fraction > 1:
            raise DataError("empty and hard fractions together exceed 1")
        lo, hi = self.objects_per_frame
        if not 1 <= lo <= hi or hi > GRID_COLS * GRID_ROWS:
            raise DataError(f"objects_per_frame {self.objects_per_frame} invalid")
        if self.n_frames < 0 or self.class_count < 1 or self.confidence_noise < 0:
            raise DataError("n_frames, class_count and confidence_noise must be non-negative")


def frame_id_for(index: int, n_frames: int) -> str:
    width = max(6, len(str(max(n_frames - 1, 0))))
    return f"f{index:0{width}d}"


def generate_dataset(params: SynthParams) -> list[SyntheticScene]:
    """Seeded scenes with exact empty and hard frame counts.

    Hard frames hold one or two objects with hardness above 0.7; every
    other object is easy. Boxes sit on a coarse grid so no two objects
    (or a false positive and a foreign object) ever overlap.
    """
    rng = np.random.default_rng(params.seed)
    n = params.n_frames
    n_empty = round(n * params.empty_frame_fraction)
    n_hard = round(n * params.hard_frame_fraction)
    role = np.zeros(n, dtype=np.int8)  # 0 plain, 1 empty, 2 hard
    order = rng.permutation(n)
    role[order[:n_empty]] = 1
    role[order[n_empty:n_empty + n_hard]] = 2

    lo, hi = params.objects_per_frame
    scenes = []
    for idx in range(n):
        fid = frame_id_for(idx, n)
        if role[idx] == 1:
            scenes.append(SyntheticScene(fid))
            continue
        k = int(rng.integers(lo, hi + 1))
        cells = rng.choice(GRID_COLS * GRID_ROWS, size=k, replace=False)
        n_hard_objs = min(k, int(rng.integers(1, 3))) if role[idx] == 2 else 0
        objects = []
        for j, cell in enumerate(cells):
            w = float(rng.uniform(30, 70))
            h = float(rng.uniform(30, 70))
            x = float((cell % GRID_COLS) * CELL_W + rng.uniform(0, 10))
            y = float((cell // GRID_COLS) * CELL_H + rng.uniform(0, 10))
            band = params.hard_hardness if j < n_hard_objs else params.easy_hardness
            objects.append(SceneObject(
                class_id=int(rng.integers(params.class_count)),
                bbox=BoundingBox(x, y, w, h),
                hardness=float(rng.uniform(*band)),
                min_visible_scale=float(rng.uniform(0.1, 0.6)),
            ))
        scenes.append(SyntheticScene(fid, tuple(objects)))
    return scenes


def _unit_hash(seed: int, frame_id: str, index: int, tag: str) -> float:
    """Uniform draw in (0, 1) that depends only on its arguments."""
    digest = hashlib.blake2b(f"{seed}|{frame_id}|{index}|{tag}".encode(), digest_size=8).digest()
    (v,) = struct.unpack("<Q", digest)
    return (v + 0.5) / 2.0**64


def visibility_penalty(scale: float, min_visible_scale: float) -> float:
    """Score lost to downsampling: 0 at full resolution, rising quadratically
    to MAX_VISIBILITY_PENALTY at ``min_visible_scale``."""
    if scale >= 1.0 or min_visible_scale >= 1.0:
        return 0.0
    frac = (1.0 - scale) / (1.0 - min_visible_scale)
    return MAX_VISIBILITY_PENALTY * min(1.0, max(0.0, frac)) ** 2


def simulate_student(
    scene: SyntheticScene,
    scale: float = 1.0,
    seed: int = 0,
    confidence_noise: float = 0.02,
) -> FrameDetections:
    """Student detections for ``scene`` evaluated at resolution ``scale``.

    Noise, box error and false positives depend only on (seed, frame_id,
    object index), so scores never increase as the scale shrinks.
    """
    dets = []
    fid = scene.frame_id
    for k, obj in enumerate(scene.objects):
        if scale < obj.min_visible_scale:
            continue
        noise = 0.0
        if confidence_noise > 0:
            noise = confidence_noise * _STD_NORMAL.inv_cdf(_unit_hash(seed, fid, k, "noise"))
        score = min(1.0, max(0.0, 1.0 - obj.hardness - visibility_penalty(scale, obj.min_visible_scale) + noise))
        if score < DETECTABILITY_FLOOR:
            continue
        b = obj.bbox
        sx = 1.0 if _unit_hash(seed, fid, k, "dx") < 0.5 else -1.0
        sy = 1.0 if _unit_hash(seed, fid, k, "dy") < 0.5 else -1.0
        shift = LOCALIZATION_ERROR * obj.hardness
        box = BoundingBox(b.x + sx * shift * b.w, b.y + sy * shift * b.h, b.w, b.h)
        dets.append(Detection(obj.class_id, box, score))
        # spurious boxes inside the object's grid cell, each with probability = hardness;
        # both overlap the object by IoU < 0.2 so they never match it
        for slot, offset in enumerate(FALSE_POSITIVE_OFFSETS):
            if _unit_hash(seed, fid, k, f"fp{slot}") < obj.hardness:
                fp_box = BoundingBox(b.x + offset * b.w, b.y, b.w, b.h)
                fp_score = 0.1 + 0.3 * _unit_hash(seed, fid, k, f"fp{slot}_score")
                dets.append(Detection(obj.class_id, fp_box, fp_score))
    return FrameDetections(fid, Source.STUDENT, scale, tuple(dets))


def simulate_teacher(scene: SyntheticScene, seed: int = 0) -> FrameDetections:
    dets = tuple(
        Detection(o.class_id, o.bbox, 0.95 + 0.05 * _unit_hash(seed, scene.frame_id, k, "teacher"))
        for k, o in enumerate(scene.objects)
    )
    return FrameDetections(scene.frame_id, Source.TEACHER, 1.0, dets)


class _SceneIndex:
    def __init__(self, scenes: Iterable[SyntheticScene]):
        self.scenes = {s.frame_id: s for s in scenes}

    def _scene(self, frame_id: str) -> SyntheticScene:
        try:
            return self.scenes[frame_id]
        except KeyError:
            raise DataError(f"unknown frame id {frame_id!r}") from None

    def frame_ids(self) -> list[str]:
        return list(self.scenes)


class SyntheticStudent(_SceneIndex):
    def __init__(self, scenes: Iterable[SyntheticScene], seed: int = 0, confidence_noise: float = 0.02):
        super().__init__(scenes)
        self.seed = seed
        self.confidence_noise = confidence_noise

    def detect(self, frame_id: str, scale: float = 1.0) -> FrameDetections:
        return simulate_student(self._scene(frame_id), scale, self.seed, self.confidence_noise)


class SyntheticTeacher(_SceneIndex):
    def __init__(self, scenes: Iterable[SyntheticScene], seed: int = 0):
        super().__init__(scenes)
        self.seed = seed

    def detect(self, frame_id: str, scale: float = 1.0) -> FrameDetections:
        return simulate_teacher(self._scene(frame_id), self.seed)


def build_adapters(params: SynthParams) -> tuple[list[SyntheticScene], SyntheticStudent, SyntheticTeacher]:
    scenes = generate_dataset(params)
    return (
        scenes,
        SyntheticStudent(scenes, params.seed, params.confidence_noise),
        SyntheticTeacher(scenes, params.seed),
    )


class HardSet(frozenset):
    """Frame ids of the planted-hardest frames; ``degenerate`` when none of them hold any hardness."""

    degenerate: bool = False


def oracle_hard_set(scenes: Sequence[SyntheticScene], n: int) -> HardSet:
    if n > len(scenes):
        raise TooFewFrames(f"asked for {n} frames from a dataset of {len(scenes)}")
    ranked = sorted(((s.frame_id, s.total_hardness) for s in scenes), key=ranking_key)[:n]
    out = HardSet(fid for fid, _ in ranked)
    out.degenerate = all(h == 0.0 for _, h in ranked)
    return out


# Shipped fixtures. Hard frames make up 1% of the stream so the planted hard
# set of a 128-frame selection is a fraction of the hard frames.
def fixture_params(n_frames: int = 86_400, seed: int = 0) -> SynthParams:
    return SynthParams(seed=seed, n_frames=n_frames, hard_frame_fraction=0.01)


ABLATION_FIXTURE = fixture_params(n_frames=12_800, seed=0)
ABLATION_TARGET = 128
