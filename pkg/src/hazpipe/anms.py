"""Class-aware (adaptive) non-maximal suppression.

Three implementations share one contract:

* :func:`anms` sorts each class partition once and runs the greedy loop with
  a suppressed-flag array. This is what the pipeline uses.
* :func:`nms_oracle` is the literal select-max / remove-overlaps loop,
  quadratic and deliberately naive. Tests use it as the reference.
* :func:`nms_fast` does one argsort in numpy and runs the greedy scan as a
  numba-compiled kernel over flat arrays.

Priority order is descending score, then ascending ``class_id``, then
ascending input position. Overlap suppression triggers at ``iou >= t``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numba
import numpy as np

from . import classes
from .errors import ParseError
from .geometry import BBox, iou


@dataclass(frozen=True, eq=False)
class Detection:
    """One scored, class-labelled box.

    Equality is identity so that NMS subset checks compare the objects that
    went in, not lookalikes.
    """

    box: BBox
    score: float
    class_id: int

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if not classes.is_valid_id(self.class_id):
            raise ValueError(f"class_id {self.class_id} not in registry")

    @property
    def class_name(self) -> str:
        return classes.class_name(self.class_id)

    def same_as(self, other: Detection) -> bool:
        return (
            self.box == other.box
            and self.score == other.score
            and self.class_id == other.class_id
        )


@dataclass(frozen=True)
class NmsConfig:
    threshold: float = 0.5
    class_aware: bool = True

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"NMS threshold {self.threshold} outside [0, 1]")


def _priority(dets: Sequence[Detection], i: int) -> tuple:
    d = dets[i]
    return (-d.score, d.class_id, i)


def _partitions(dets: Sequence[Detection], class_aware: bool) -> list[list[int]]:
    if not class_aware:
        return [list(range(len(dets)))]
    groups: dict[int, list[int]] = {}
    for i, d in enumerate(dets):
        groups.setdefault(d.class_id, []).append(i)
    return [groups[c] for c in sorted(groups)]


def _merge(dets: Sequence[Detection], keep: Iterable[int]) -> list[Detection]:
    return [dets[i] for i in sorted(keep, key=lambda i: _priority(dets, i))]


def anms(detections: Sequence[Detection], config: NmsConfig = NmsConfig()) -> list[Detection]:
    dets = list(detections)
    keep: list[int] = []
    for part in _partitions(dets, config.class_aware):
        order = sorted(part, key=lambda i: _priority(dets, i))
        suppressed = [False] * len(order)
        for a in range(len(order)):
            if suppressed[a]:
                continue
            m = dets[order[a]]
            keep.append(order[a])
            for b in range(a + 1, len(order)):
                if not suppressed[b] and iou(m.box, dets[order[b]].box) >= config.threshold:
                    suppressed[b] = True
    return _merge(dets, keep)


def nms_oracle(detections: Sequence[Detection], config: NmsConfig = NmsConfig()) -> list[Detection]:
    dets = list(detections)
    keep: list[int] = []
    for part in _partitions(dets, config.class_aware):
        remaining = list(part)
        while remaining:
            m = remaining[0]
            for i in remaining[1:]:
                if _priority(dets, i) < _priority(dets, m):
                    m = i
            keep.append(m)
            remaining.remove(m)
            remaining = [
                i for i in remaining
                if not iou(dets[m].box, dets[i].box) >= config.threshold
            ]
    return _merge(dets, keep)


@numba.njit(cache=True)
def _greedy_scan(x1, y1, x2, y2, cls, threshold, class_aware):
    """Greedy suppression over boxes already in priority order."""
    n = x1.size
    areas = (x2 - x1) * (y2 - y1)
    suppressed = np.zeros(n, dtype=np.bool_)
    keep = np.zeros(n, dtype=np.bool_)
    for a in range(n):
        if suppressed[a]:
            continue
        keep[a] = True
        for b in range(a + 1, n):
            if suppressed[b] or (class_aware and cls[b] != cls[a]):
                continue
            iw = max(0.0, min(x2[a], x2[b]) - max(x1[a], x1[b]))
            ih = max(0.0, min(y2[a], y2[b]) - max(y1[a], y1[b]))
            inter = iw * ih
            union = areas[a] + areas[b] - inter
            if union > 0.0 and inter / union >= threshold:
                suppressed[b] = True
    return keep


def nms_fast(detections: Sequence[Detection], config: NmsConfig = NmsConfig()) -> list[Detection]:
    dets = list(detections)
    n = len(dets)
    if n == 0:
        return []
    boxes = np.array([d.box.to_list() for d in dets], dtype=np.float64)
    scores = np.array([d.score for d in dets], dtype=np.float64)
    cls = np.array([d.class_id for d in dets], dtype=np.int64)
    # lexsort: last key is primary
    order = np.lexsort((np.arange(n), cls, -scores))
    b = boxes[order]
    keep = _greedy_scan(np.ascontiguousarray(b[:, 0]), np.ascontiguousarray(b[:, 1]),
                        np.ascontiguousarray(b[:, 2]), np.ascontiguousarray(b[:, 3]),
                        cls[order], float(config.threshold), bool(config.class_aware))
    return [dets[int(i)] for i in order[keep]]


# -- detections JSONL ----------------------------------------------------------

def detection_to_record(det: Detection, frame: int, **extra) -> dict:
    rec = {
        "frame": int(frame),
        "class_id": det.class_id,
        "class_name": det.class_name,
        "score": det.score,
        "bbox": det.box.to_list(),
    }
    rec.update(extra)
    return rec


def detection_from_record(rec: dict) -> tuple[int, Detection]:
    """Parse one JSONL record into ``(frame, Detection)``.

    ``class_name`` wins over ``class_id`` when both are given and disagree is
    rejected; either alone is enough.
    """
    if not isinstance(rec, dict):
        raise ValueError("record is not a JSON object")
    frame = rec.get("frame", rec.get("frame_index"))
    if not isinstance(frame, int) or isinstance(frame, bool):
        raise ValueError("missing or non-integer 'frame'")
    cid = rec.get("class_id")
    name = rec.get("class_name")
    if name is not None:
        named = classes.class_id(name)
        if cid is not None and cid != named:
            raise ValueError(f"class_id {cid} disagrees with class_name {name!r}")
        cid = named
    if not isinstance(cid, int) or isinstance(cid, bool):
        raise ValueError("missing class_id/class_name")
    bbox = rec.get("bbox")
    if not isinstance(bbox, list):
        raise ValueError("missing 'bbox' list")
    score = rec.get("score")
    if not isinstance(score, (int, float)) or isinstance(score, bool):
        raise ValueError("missing numeric 'score'")
    return frame, Detection(BBox.from_list(bbox), float(score), cid)


def iter_jsonl_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None


def read_detections(path: str | Path) -> list[tuple[int, Detection, dict]]:
    """Read a detections JSONL file as ``(frame, detection, raw_record)``."""
    out = []
    for lineno, rec in iter_jsonl_records(path):
        try:
            frame, det = detection_from_record(rec)
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(str(exc), lineno) from None
        out.append((frame, det, rec))
    return out


def write_detections(path: str | Path, items: Iterable[tuple[int, Detection]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame, det in items:
            fh.write(json.dumps(detection_to_record(det, frame)) + "\n")


def nms_by_frame(
    items: Iterable[tuple[int, Detection]], config: NmsConfig = NmsConfig()
) -> list[tuple[int, Detection]]:
    """Apply :func:`anms` independently to the detections of every frame."""
    frames: dict[int, list[Detection]] = {}
    for frame, det in items:
        frames.setdefault(frame, []).append(det)
    out = []
    for frame in sorted(frames):
        out.extend((frame, d) for d in anms(frames[frame], config))
    return out
