"""Greedy detection matching and all-point interpolated average precision.

AP is accumulated with exact rationals and rounded to float once at the
end, so any two correct implementations return bit-identical values.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .core import DataError, Detection, FrameDetections, Source, iou


class FrameIdMismatch(DataError):
    pass


class EmptyClassSet(DataError):
    pass


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int, float], ...]
    unmatched_predictions: tuple[int, ...]
    unmatched_groundtruths: tuple[int, ...]

    def matched_predictions(self) -> set[int]:
        return {p for p, _, _ in self.pairs}


def score_order(predictions: Sequence[Detection]) -> list[int]:
    """Prediction indices by descending score, ties by input index."""
    return sorted(range(len(predictions)), key=lambda i: (-predictions[i].score, i))


def match_greedy(
    predictions: Sequence[Detection],
    groundtruths: Sequence[Detection],
    iou_threshold: float = 0.5,
) -> MatchResult:
    """Match each prediction, highest score first, to its best free same-class ground truth."""
    taken = [False] * len(groundtruths)
    pairs = []
    unmatched = []
    for pi in score_order(predictions):
        pred = predictions[pi]
        best_gi, best_iou = -1, iou_threshold
        for gi, gt in enumerate(groundtruths):
            if taken[gi] or gt.class_id != pred.class_id:
                continue
            overlap = iou(pred.bbox, gt.bbox)
            # strict > keeps the lowest index on ties; first hit needs >= threshold
            if overlap > best_iou or (best_gi < 0 and overlap >= iou_threshold):
                best_gi, best_iou = gi, overlap
        if best_gi < 0:
            unmatched.append(pi)
        else:
            taken[best_gi] = True
            pairs.append((pi, best_gi, best_iou))
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_predictions=tuple(sorted(unmatched)),
        unmatched_groundtruths=tuple(gi for gi, t in enumerate(taken) if not t),
    )


def ap_from_ranked_flags(flags: Sequence[bool], n_groundtruths: int) -> float:
    """All-point interpolated AP of a ranked TP/FP sequence.

    Each recall step (one per true positive) is weighted by the highest
    precision reached at that recall or beyond.
    """
    if n_groundtruths == 0:
        return 1.0 if len(flags) == 0 else 0.0
    tp = 0
    precision = []
    for rank, hit in enumerate(flags, start=1):
        tp += hit
        precision.append(Fraction(tp, rank))
    total = Fraction(0)
    best = Fraction(0)
    for k in range(len(flags) - 1, -1, -1):
        if precision[k] > best:
            best = precision[k]
        if flags[k]:
            total += best
    return float(total / n_groundtruths)


def average_precision(
    predictions: Sequence[Detection],
    groundtruths: Sequence[Detection],
    iou_threshold: float = 0.5,
) -> float:
    """AP of ``predictions`` against ``groundtruths``.

    Both empty gives 1.0; exactly one side empty gives 0.0.
    """
    if not predictions or not groundtruths:
        return 1.0 if not predictions and not groundtruths else 0.0
    matched = match_greedy(predictions, groundtruths, iou_threshold).matched_predictions()
    flags = [i in matched for i in score_order(predictions)]
    return ap_from_ranked_flags(flags, len(groundtruths))


def mean_ap(per_class_aps: Iterable[tuple[int, float]]) -> float:
    aps = [ap for _, ap in per_class_aps]
    if not aps:
        raise EmptyClassSet("mean AP needs at least one class")
    return sum(aps) / len(aps)


@dataclass(frozen=True)
class PrecisionDifficulty:
    frame_id: str
    average_precision: float
    detection_counts: tuple[int, int]

    @property
    def difficulty(self) -> float:
        return 1.0 - self.average_precision


def frame_precision_difficulty(
    student: FrameDetections,
    teacher: FrameDetections,
    iou_threshold: float = 0.5,
) -> PrecisionDifficulty:
    """Score a frame by how far the student's detections fall short of the teacher's.

    All classes are pooled into one ranked list; matching still never
    crosses classes.
    """
    if student.frame_id != teacher.frame_id:
        raise FrameIdMismatch(f"student frame {student.frame_id!r} != teacher frame {teacher.frame_id!r}")
    if student.source is not Source.STUDENT or teacher.source is not Source.TEACHER:
        raise DataError(f"frame {student.frame_id}: expected (student, teacher) sources")
    ap = average_precision(student.detections, teacher.detections, iou_threshold)
    return PrecisionDifficulty(
        frame_id=student.frame_id,
        average_precision=ap,
        detection_counts=(len(student.detections), len(teacher.detections)),
    )


def class_average_precisions(
    frame_pairs: Iterable[tuple[FrameDetections, FrameDetections]],
    iou_threshold: float = 0.5,
) -> list[tuple[int, float]]:
    """Dataset-level AP per ground-truth class, pooling ranked predictions across frames.

    ``frame_pairs`` yields (prediction frame, ground-truth frame). Classes
    that only appear among predictions are not reported.
    """
    ranked: dict[int, list[tuple[float, int, int, bool]]] = defaultdict(list)
    gt_count: dict[int, int] = defaultdict(int)
    for fi, (pred, gt) in enumerate(frame_pairs):
        matched = match_greedy(pred.detections, gt.detections, iou_threshold).matched_predictions()
        for gi in gt.detections:
            gt_count[gi.class_id] += 1
        for pi, det in enumerate(pred.detections):
            ranked[det.class_id].append((-det.score, fi, pi, pi in matched))
    out = []
    for cls in sorted(gt_count):
        flags = [hit for *_, hit in sorted(ranked[cls])]
        out.append((cls, ap_from_ranked_flags(flags, gt_count[cls])))
    return out


def dataset_map(
    frame_pairs: Iterable[tuple[FrameDetections, FrameDetections]],
    iou_threshold: float = 0.5,
) -> float:
    return mean_ap(class_average_precisions(frame_pairs, iou_threshold))
