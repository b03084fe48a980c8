"""Two-stage dataset culling and the alternative selection strategies."""

from __future__ import annotations

import heapq
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Iterator, Mapping

from .core import (
    CullConfig,
    CullError,
    DataError,
    DuplicateFrameId,
    FrameDetections,
    InvariantViolation,
    Manifest,
    frame_ids_of,
    validate_frame,
)
from .metrics import frame_precision_difficulty
from .optres import choose_scale, sweep_scales
from .scoring import DifficultyScorer, rank_frames

log = logging.getLogger(__name__)


class MissingTeacherFrame(DataError):
    pass


class EmptyStream(DataError):
    pass


class AdapterError(CullError):
    """A detector adapter failed; carries the frame it failed on."""

    def __init__(self, frame_id: str, cause: Exception):
        super().__init__(f"adapter failed on frame {frame_id!r}: {cause}")
        self.frame_id = frame_id
        self.__cause__ = cause


class CountingAdapter:
    """Wraps an adapter and counts ``detect`` calls (thread-safe)."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    def detect(self, frame_id: str, scale: float = 1.0) -> FrameDetections:
        with self._lock:
            self.calls += 1
        return self.inner.detect(frame_id, scale)


def _detect(adapter, frame_id: str, scale: float, score_floor: float) -> FrameDetections:
    try:
        frame = adapter.detect(frame_id, scale)
    except CullError as exc:
        if isinstance(exc, AdapterError):
            raise
        raise AdapterError(frame_id, exc) from exc
    return validate_frame(frame, score_floor)


def _scored_stream(
    frames: Iterable[FrameDetections],
    scorer: Callable[[FrameDetections], float],
) -> Iterator[tuple[str, float, FrameDetections]]:
    seen: set[str] = set()
    for frame in frames:
        if frame.frame_id in seen:
            raise DuplicateFrameId(f"frame id {frame.frame_id!r} appears more than once")
        seen.add(frame.frame_id)
        yield frame.frame_id, scorer(frame), frame


def _top_k(scored: Iterable[tuple[str, float, FrameDetections]], keep_n: int):
    # heapq.nsmallest keeps at most keep_n items alive while streaming
    return heapq.nsmallest(keep_n, scored, key=lambda t: (-t[1], t[0]))


def cull_stage1(
    student_frames: Iterable[FrameDetections],
    scorer: Callable[[FrameDetections], float],
    keep_n: int,
) -> list[tuple[str, float]]:
    """Keep the ``keep_n`` frames with highest difficulty, in ranking order.

    Single pass; only the current survivors (plus the set of seen ids, for
    duplicate detection) are held in memory.
    """
    if keep_n < 1:
        raise ValueError(f"keep_n must be >= 1, got {keep_n}")
    return [(fid, d) for fid, d, _ in _top_k(_scored_stream(student_frames, scorer), keep_n)]


def _lookup(source) -> Callable[[str], FrameDetections | None]:
    if isinstance(source, Mapping):
        return source.get
    if hasattr(source, "detect"):
        return lambda fid: source.detect(fid, 1.0)
    return source


def cull_stage2(
    candidates: Iterable[str],
    student,
    teacher,
    iou_threshold: float,
    target_n: int,
) -> list[tuple[str, float]]:
    """Re-rank stage-1 survivors by precision difficulty (1 - AP vs teacher) and keep ``target_n``.

    ``student`` and ``teacher`` are mappings, adapters or callables
    returning the frame for an id. Fewer candidates than ``target_n``
    returns them all.
    """
    get_student, get_teacher = _lookup(student), _lookup(teacher)
    scored = []
    for fid in candidates:
        try:
            t = get_teacher(fid)
        except KeyError:
            t = None
        if t is None:
            raise MissingTeacherFrame(f"no teacher detections for stage-1 survivor {fid!r}")
        s = get_student(fid)
        if s is None:
            raise DataError(f"no student detections for frame {fid!r}")
        scored.append((fid, frame_precision_difficulty(s, t, iou_threshold).difficulty))
    return rank_frames(scored)[:target_n]


@dataclass(frozen=True)
class StageTrace:
    input_count: int
    stage1_survivors: tuple[str, ...]
    stage2_survivors: tuple[str, ...]

    def __post_init__(self):
        s1 = set(self.stage1_survivors)
        if not set(self.stage2_survivors) <= s1 or len(s1) > self.input_count:
            raise InvariantViolation("stage survivors are not nested")

    @property
    def per_stage_reduction(self) -> tuple[float, float]:
        n1, n2 = len(self.stage1_survivors), len(self.stage2_survivors)
        return (self.input_count / n1 if n1 else float("inf"), n1 / n2 if n2 else float("inf"))

    @property
    def total_reduction(self) -> float:
        n2 = len(self.stage2_survivors)
        return self.input_count / n2 if n2 else float("inf")


def _student_frames(student, frame_ids: Iterable[str], score_floor: float, workers: int) -> Iterator[FrameDetections]:
    if workers <= 1:
        for fid in frame_ids:
            yield _detect(student, fid, 1.0, score_floor)
        return
    # Executor.map returns results in submission order, so output is schedule-independent;
    # chunking bounds how many frames are in flight at once.
    it = iter(frame_ids)
    chunk = 256 * workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while True:
            batch = [fid for _, fid in zip(range(chunk), it)]
            if not batch:
                return
            yield from pool.map(lambda fid: _detect(student, fid, 1.0, score_floor), batch)


def resolve_scale(
    manifest_ids: list[str],
    student,
    config: CullConfig,
    scorer: DifficultyScorer,
) -> float:
    if not manifest_ids:
        return 1.0
    threshold = config.mse_threshold * len(manifest_ids)
    sweep = sweep_scales(
        manifest_ids, student, scorer, config.scale_step, config.min_scale,
        stop_threshold=threshold, score_floor=config.score_floor,
    )
    return choose_scale(sweep, threshold)


def run_pipeline(
    config: CullConfig,
    student_adapter,
    teacher_adapter,
    frame_ids: Iterable[str],
    *,
    opt_resolution: bool = False,
    workers: int = 1,
) -> tuple[Manifest, StageTrace]:
    """Confidence cull with the student, precision cull with the teacher, then
    optionally pick the smallest faithful resolution.

    The teacher is invoked only on stage-1 survivors.
    """
    scorer = DifficultyScorer.confidence(config.q_weight, config.b_offset)
    count = 0

    def counted(ids):
        nonlocal count
        for fid in ids:
            count += 1
            yield fid

    frames = _student_frames(student_adapter, counted(frame_ids), config.score_floor, workers)
    survivors = _top_k(_scored_stream(frames, scorer), config.stage1_keep)
    if count == 0:
        raise EmptyStream("no frames to cull")
    student_by_id = {fid: frame for fid, _, frame in survivors}
    stage1_ids = [fid for fid, _, _ in survivors]

    def teacher_frame(fid):
        return _detect(teacher_adapter, fid, 1.0, config.score_floor)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            teacher_by_id = dict(zip(stage1_ids, pool.map(teacher_frame, stage1_ids)))
    else:
        teacher_by_id = {fid: teacher_frame(fid) for fid in stage1_ids}

    target = min(config.target_n, len(stage1_ids))
    kept = cull_stage2(stage1_ids, student_by_id, teacher_by_id, config.iou_threshold, target)
    if len(kept) < config.target_n:
        log.warning("manifest under-filled: %d of %d requested frames", len(kept), config.target_n)

    scale = 1.0
    if opt_resolution:
        scale = resolve_scale([fid for fid, _ in kept], student_adapter, config, scorer)
    manifest = Manifest(tuple(kept), scale, config, count)
    trace = StageTrace(count, tuple(stage1_ids), tuple(fid for fid, _ in kept))
    return manifest, trace


class StrategyKind(str, Enum):
    INTERMITTENT = "intermittent"
    ENTROPY = "entropy"
    CONFIDENCE = "confidence"
    PRECISION = "precision"
    CONFIDENCE_PLUS_PRECISION = "confidence+precision"


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind
    stride: int | None = None  # Intermittent only; None derives it from the stream length

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if self.stride is not None and self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


def intermittent_ids(frame_ids: list[str], target_n: int, stride: int | None = None) -> list[str]:
    if stride is None:
        stride = max(1, len(frame_ids) // target_n)
    return frame_ids[::stride][:target_n]


def run_strategy(
    strategy: Strategy,
    config: CullConfig,
    student_adapter,
    teacher_adapter,
    frame_ids: Iterable[str],
    *,
    workers: int = 1,
) -> Manifest:
    """Select ``config.target_n`` frames with one of the five culling strategies."""
    kind = strategy.kind
    if kind is StrategyKind.CONFIDENCE_PLUS_PRECISION:
        return run_pipeline(config, student_adapter, teacher_adapter, frame_ids, workers=workers)[0]

    ids = list(frame_ids)
    if not ids:
        raise EmptyStream("no frames to cull")
    if kind is StrategyKind.INTERMITTENT:
        picked = intermittent_ids(ids, config.target_n, strategy.stride)
        entries = rank_frames((fid, 0.0) for fid in picked)
    elif kind in (StrategyKind.ENTROPY, StrategyKind.CONFIDENCE):
        scorer = (DifficultyScorer.entropy() if kind is StrategyKind.ENTROPY
                  else DifficultyScorer.confidence(config.q_weight, config.b_offset))
        frames = _student_frames(student_adapter, ids, config.score_floor, workers)
        entries = cull_stage1(frames, scorer, config.target_n)
    else:
        entries = cull_stage2(
            ids,
            lambda fid: _detect(student_adapter, fid, 1.0, config.score_floor),
            lambda fid: _detect(teacher_adapter, fid, 1.0, config.score_floor),
            config.iou_threshold,
            config.target_n,
        )
    return Manifest(tuple(entries), 1.0, config, len(ids))


def overlap_report(a: Manifest | Iterable[str], b: Manifest | Iterable[str]) -> float:
    """Fraction of b's selections that a also kept."""
    ids_a, ids_b = frame_ids_of(a), frame_ids_of(b)
    if not ids_b:
        return 1.0 if not ids_a else 0.0
    return len(ids_a & ids_b) / len(ids_b)
