"""Pick the smallest input resolution whose confidence losses track full resolution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .core import CullError, DataError, FrameDetections, Manifest, validate_frame


class LengthMismatch(DataError):
    pass


# tolerance when comparing a geometric grid point with min_scale
_GRID_EPS = 1e-12


def scale_grid(scale_step: float, min_scale: float) -> list[float]:
    """1.0, step, step**2, ... down to (and including) ``min_scale``."""
    if not 0 < scale_step < 1:
        raise ValueError(f"scale_step must be in (0, 1), got {scale_step}")
    if not 0 < min_scale < 1:
        raise ValueError(f"min_scale must be in (0, 1), got {min_scale}")
    scales = [1.0]
    k = 1
    while scale_step**k >= min_scale - _GRID_EPS:
        scales.append(scale_step**k)
        k += 1
    return scales


def mse_vs_fullres(full: Sequence[float], scaled: Sequence[float]) -> float:
    """Sum (not mean) of squared loss differences against full resolution."""
    if len(full) != len(scaled):
        raise LengthMismatch(f"loss vectors differ in length: {len(full)} vs {len(scaled)}")
    total = 0.0
    for a, b in zip(full, scaled):
        total += (a - b) ** 2
    return total


@dataclass(frozen=True)
class ScaleSweep:
    scales: tuple[float, ...]
    loss_vectors: tuple[tuple[float, ...], ...]
    mse_per_scale: tuple[float, ...]

    def __post_init__(self):
        if not self.scales or self.scales[0] != 1.0:
            raise ValueError("a sweep starts at full resolution")
        if not (len(self.scales) == len(self.loss_vectors) == len(self.mse_per_scale)):
            raise ValueError("sweep columns differ in length")

    @classmethod
    def from_losses(cls, scales: Sequence[float], loss_vectors: Sequence[Sequence[float]]) -> "ScaleSweep":
        full = loss_vectors[0]
        return cls(
            tuple(scales),
            tuple(tuple(v) for v in loss_vectors),
            tuple(mse_vs_fullres(full, v) for v in loss_vectors),
        )


def sweep_scales(
    culled: Manifest | Iterable[str],
    student_adapter,
    scorer: Callable[[FrameDetections], float],
    scale_step: float = 0.9,
    min_scale: float = 0.3,
    *,
    stop_threshold: float | None = None,
    score_floor: float = 0.0,
) -> ScaleSweep:
    """Per-frame losses of the culled set at each scale of the geometric grid.

    With ``stop_threshold`` set, scales are visited in descending order and
    the sweep ends right after the first scale whose MSE exceeds it.
    """
    frame_ids = culled.frame_ids if isinstance(culled, Manifest) else list(culled)
    scales, vectors, mses = [], [], []
    full: list[float] | None = None
    for scale in scale_grid(scale_step, min_scale):
        losses = []
        for fid in frame_ids:
            try:
                frame = student_adapter.detect(fid, scale)
            except CullError as exc:
                raise DataError(f"adapter failed on frame {fid!r} at scale {scale:.6g}: {exc}") from exc
            losses.append(scorer(validate_frame(frame, score_floor)))
        if full is None:
            full = losses
        mse = mse_vs_fullres(full, losses)
        scales.append(scale)
        vectors.append(tuple(losses))
        mses.append(mse)
        if stop_threshold is not None and mse > stop_threshold:
            break
    return ScaleSweep(tuple(scales), tuple(vectors), tuple(mses))


def choose_scale(sweep: ScaleSweep, mse_threshold: float) -> float:
    """Last scale reached, walking down from 1.0, before MSE first exceeds the threshold.

    For a sweep whose MSE never decreases as the scale shrinks this is the
    smallest scale with MSE <= threshold.
    """
    chosen = 1.0
    for scale, mse in zip(sweep.scales, sweep.mse_per_scale):
        if mse > mse_threshold:
            break
        chosen = scale
    return chosen
