"""Detection records (JSONL), COCO result arrays, manifests and config files."""

from __future__ import annotations

import csv
import json
import math
import os
from collections import defaultdict
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping

from .core import (
    BoundingBox,
    ConfigError,
    CullConfig,
    DataError,
    Detection,
    FrameDetections,
    Manifest,
    Source,
)
from .costmodel import CostParams

MANIFEST_VERSION = 1
CONFIG_ENV = "CULLFORGE_CONFIG"


class ParseError(DataError):
    def __init__(self, line: int | None, reason: str):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")
        self.line = line
        self.reason = reason


class UnknownImageId(DataError):
    pass


def _number(v, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise DataError(f"{what} must be a number, got {v!r}")
    return float(v)


def _detection_from_json(d: Mapping) -> Detection:
    if not isinstance(d, Mapping):
        raise DataError(f"detection must be an object, got {d!r}")
    try:
        cls, bbox, score = d["class"], d["bbox"], d["score"]
    except KeyError as exc:
        raise DataError(f"detection missing field {exc.args[0]!r}") from None
    if isinstance(cls, bool) or not isinstance(cls, int):
        raise DataError(f"class must be an integer, got {cls!r}")
    if not isinstance(bbox, list) or len(bbox) != 4:
        raise DataError(f"bbox must be [x, y, w, h], got {bbox!r}")
    return Detection(cls, BoundingBox(*(_number(v, "bbox value") for v in bbox)), _number(score, "score"))


def frame_from_record(rec: Mapping) -> FrameDetections:
    if not isinstance(rec, Mapping):
        raise DataError("record must be a JSON object")
    try:
        fid, source, scale, dets = rec["frame_id"], rec["source"], rec["scale"], rec["detections"]
    except KeyError as exc:
        raise DataError(f"missing field {exc.args[0]!r}") from None
    if not isinstance(fid, str):
        raise DataError(f"frame_id must be a string, got {fid!r}")
    try:
        source = Source(source)
    except ValueError:
        raise DataError(f"source must be 'student' or 'teacher', got {source!r}") from None
    if not isinstance(dets, list):
        raise DataError("detections must be an array")
    return FrameDetections(fid, source, _number(scale, "scale"), tuple(_detection_from_json(d) for d in dets))


def frame_to_record(frame: FrameDetections) -> dict:
    return {
        "frame_id": frame.frame_id,
        "source": frame.source.value,
        "scale": frame.scale,
        "detections": [
            {"class": d.class_id, "bbox": d.bbox.as_list(), "score": d.score} for d in frame.detections
        ],
    }


def parse_detections_jsonl(stream: Iterable[str | bytes]) -> Iterator[FrameDetections]:
    """Yield one frame per nonblank line; errors carry the 1-based line number."""
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ParseError(lineno, f"invalid UTF-8: {exc}") from None
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, f"invalid JSON: {exc.msg}") from None
        try:
            yield frame_from_record(rec)
        except DataError as exc:
            raise ParseError(lineno, str(exc)) from exc


def read_detections(path: str | os.PathLike) -> Iterator[FrameDetections]:
    with open(path, "rb") as fh:
        yield from parse_detections_jsonl(fh)


def write_detections(frames: Iterable[FrameDetections], fh: IO[str]) -> int:
    n = 0
    for frame in frames:
        fh.write(json.dumps(frame_to_record(frame), separators=(",", ":")) + "\n")
        n += 1
    return n


def _scale_key(scale: float) -> float:
    return round(scale, 9)


class DetectionStore:
    """Detections loaded from JSONL, served through the adapter ``detect`` call.

    A file may hold one record per (frame_id, scale). ``only`` restricts
    loading to a set of frame ids.
    """

    def __init__(self, frames: Iterable[FrameDetections], only: set[str] | None = None):
        self._frames: dict[tuple[str, float], FrameDetections] = {}
        self._order: list[str] = []
        seen: set[str] = set()
        for f in frames:
            if only is not None and f.frame_id not in only:
                continue
            key = (f.frame_id, _scale_key(f.scale))
            if key in self._frames:
                raise DataError(f"duplicate record for frame {f.frame_id!r} at scale {f.scale}")
            self._frames[key] = f
            if f.frame_id not in seen:
                seen.add(f.frame_id)
                self._order.append(f.frame_id)

    @classmethod
    def from_path(cls, path, only: set[str] | None = None) -> "DetectionStore":
        return cls(read_detections(path), only)

    def frame_ids(self) -> list[str]:
        return list(self._order)

    def detect(self, frame_id: str, scale: float = 1.0) -> FrameDetections:
        try:
            return self._frames[(frame_id, _scale_key(scale))]
        except KeyError:
            raise DataError(f"no detections for frame {frame_id!r} at scale {scale:.6g}") from None

    def __contains__(self, frame_id: str) -> bool:
        return (frame_id, 1.0) in self._frames


def parse_coco_results(doc, frame_ids: Mapping | None = None) -> list[FrameDetections]:
    """Group a COCO-style result array (image_id, category_id, bbox, score) into frames.

    ``frame_ids`` maps image ids to frame ids; without it the image id is
    stringified. Frames come out in order of first appearance.
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ParseError(None, f"invalid JSON: {exc.msg}") from None
    if not isinstance(doc, list):
        raise ParseError(None, "COCO results must be a JSON array")
    grouped: dict[str, list[Detection]] = defaultdict(list)
    for i, r in enumerate(doc):
        try:
            image_id = r["image_id"]
            det = Detection(int(r["category_id"]), BoundingBox(*map(float, r["bbox"])), float(r["score"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(None, f"result {i}: malformed ({exc})") from None
        if frame_ids is None:
            fid = str(image_id)
        elif image_id in frame_ids:
            fid = frame_ids[image_id]
        else:
            raise UnknownImageId(f"result {i}: image_id {image_id!r} has no frame mapping")
        grouped[fid].append(det)
    return [FrameDetections(fid, Source.STUDENT, 1.0, tuple(dets)) for fid, dets in grouped.items()]


def _round9(x: float) -> float:
    return float(f"{x:.9g}") if math.isfinite(x) else x


def manifest_to_dict(m: Manifest) -> dict:
    return {
        "version": MANIFEST_VERSION,
        "config": m.config_snapshot.to_dict(),
        "chosen_scale": m.chosen_scale,
        "source_count": m.source_count,
        "entries": [{"frame_id": fid, "difficulty": _round9(d)} for fid, d in m.entries],
    }


def manifest_from_dict(d: Mapping) -> Manifest:
    try:
        if d["version"] != MANIFEST_VERSION:
            raise DataError(f"unsupported manifest version {d['version']!r}")
        return Manifest(
            entries=tuple((e["frame_id"], e["difficulty"]) for e in d["entries"]),
            chosen_scale=d["chosen_scale"],
            config_snapshot=CullConfig.from_dict(d["config"]),
            source_count=d["source_count"],
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed manifest: {exc}") from None


def dumps_manifest(m: Manifest) -> str:
    return json.dumps(manifest_to_dict(m), indent=2) + "\n"


def write_manifest(m: Manifest, path: str | os.PathLike) -> None:
    Path(path).write_text(dumps_manifest(m), encoding="utf-8")


def read_manifest(path: str | os.PathLike) -> Manifest:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, f"invalid manifest JSON: {exc.msg}") from None
    return manifest_from_dict(d)


def load_config_file(path: str | os.PathLike | None = None) -> tuple[dict, CostParams | None]:
    """Read a JSON config: CullConfig field names plus an optional ``cost_profile`` object.

    Falls back to $CULLFORGE_CONFIG when ``path`` is None. Returns the raw
    CullConfig fields so command-line flags can be layered on top.
    """
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return {}, None
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    cost = d.pop("cost_profile", None)
    return d, (CostParams.from_dict(cost) if cost is not None else None)


def write_csv(rows: Iterable[tuple], header: tuple[str, ...], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.9g}" if isinstance(v, float) else v for v in row])
