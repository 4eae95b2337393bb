"""Capture detections from a live run as crops plus VOC annotations.

Layout under the sink root::

    manifest.jsonl
    crops/<frame>_<seq>.png
    xml/<frame>_<seq>.xml
    poly/<frame>_<seq>.json      (only when a polygon was supplied)

Manifest paths are relative to the root. Timestamps come from the frame
clock (``frame_index / fps``), so replaying a run reproduces the manifest
byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .anms import Detection
from .dataset import VocAnnotation, VocObject, voc_write
from .detector import Frame
from .errors import IoFailure, SinkClosed
from .geometry import BBox, Polygon

MANIFEST = "manifest.jsonl"


@dataclass(frozen=True)
class DetectionEvent:
    event_id: str
    timestamp_ms: float
    frame_index: int
    detection: Detection
    crop: BBox
    polygon: Optional[Polygon] = None


class EventSink:
    """Single-writer event store for one run.

    Callers must log in ``(frame_index, seq)`` order; events from parallel
    workers should be queued and released in that order.
    """

    def __init__(self, root: str | Path, run_id: str = "run", fps: float = 30.0,
                 min_score: float = 0.0):
        if fps <= 0:
            raise ValueError("fps must be positive")
        self.root = Path(root)
        self.run_id = run_id
        self.fps = fps
        self.min_score = min_score
        self.events: list[DetectionEvent] = []
        self._seq: dict[int, int] = {}
        self._last_ts = float("-inf")
        try:
            for sub in ("crops", "xml", "poly"):
                (self.root / sub).mkdir(parents=True, exist_ok=True)
            self._manifest = open(self.root / MANIFEST, "w", encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot open event sink at {self.root}: {exc}") from exc

    @property
    def closed(self) -> bool:
        return self._manifest.closed

    def close(self) -> None:
        if not self._manifest.closed:
            self._manifest.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def accepts(self, detection: Detection) -> bool:
        return detection.score >= self.min_score

    def log_event(self, frame: Frame, detection: Detection,
                  polygon: Polygon | None = None) -> str:
        """Write crop, annotation, optional polygon and a manifest line.

        Returns the event id ``<run>/<frame>/<seq>``.
        """
        if self.closed:
            raise SinkClosed("event sink is closed")
        frame = frame.load()
        h, w = frame.pixels.shape[:2]
        crop = detection.box.clip(w, h)
        x0, y0 = math.floor(crop.x_min), math.floor(crop.y_min)
        x1, y1 = min(math.ceil(crop.x_max), w), min(math.ceil(crop.y_max), h)
        if x1 <= x0 or y1 <= y0:
            raise ValueError("detection box lies outside the frame")

        ts = frame.index / self.fps * 1000.0
        if ts < self._last_ts:
            raise ValueError("events must be logged in frame order")
        self._last_ts = ts
        seq = self._seq.get(frame.index, 0)
        self._seq[frame.index] = seq + 1
        event_id = f"{self.run_id}/{frame.index}/{seq}"
        stem = f"{frame.index:06d}_{seq:02d}"

        crop_rel = f"crops/{stem}.png"
        xml_rel = f"xml/{stem}.xml"
        poly_rel = f"poly/{stem}.json" if polygon is not None else None
        cw, ch = x1 - x0, y1 - y0
        local = BBox(
            min(max(detection.box.x_min - x0, 0.0), cw),
            min(max(detection.box.y_min - y0, 0.0), ch),
            min(max(detection.box.x_max - x0, 0.0), cw),
            min(max(detection.box.y_max - y0, 0.0), ch),
        )
        ann = VocAnnotation(
            filename=f"{stem}.png",
            width=cw,
            height=ch,
            depth=3,
            objects=(VocObject(detection.class_name, local),),
            folder="crops",
        )
        try:
            from PIL import Image

            Image.fromarray(frame.pixels[y0:y1, x0:x1]).save(self.root / crop_rel)
            (self.root / xml_rel).write_text(voc_write(ann), encoding="utf-8")
            if polygon is not None:
                payload = {"frame": frame.index, "offset": [x0, y0], **polygon.to_json()}
                (self.root / poly_rel).write_text(json.dumps(payload) + "\n", encoding="utf-8")
            line = {
                "event_id": event_id,
                "timestamp_ms": ts,
                "frame": frame.index,
                "class_name": detection.class_name,
                "score": detection.score,
                "bbox": detection.box.to_list(),
                "crop_path": crop_rel,
                "xml_path": xml_rel,
            }
            if poly_rel is not None:
                line["poly_path"] = poly_rel
            self._manifest.write(json.dumps(line) + "\n")
            self._manifest.flush()
        except OSError as exc:
            raise IoFailure(f"failed writing event {event_id}: {exc}") from exc

        self.events.append(DetectionEvent(event_id, ts, frame.index, detection, crop, polygon))
        return event_id


def read_manifest(root: str | Path) -> list[dict]:
    with open(Path(root) / MANIFEST, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
