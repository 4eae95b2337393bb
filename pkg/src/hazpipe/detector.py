"""Detector interface plus two implementations.

:class:`ScriptedDetector` answers from a frame-indexed detections table and
stands in for a trained network. :class:`ExternalDetector` talks to any
process speaking line-delimited JSON on stdin/stdout::

    -> {"frame_index": 12, "image_path": "frames/000012.png"}
    <- {"frame_index": 12, "detections": [{"class_id": 0, "score": 0.9,
                                           "bbox": [x0, y0, x1, y1]}, ...]}

Detections inside a response use the detections JSONL record schema; the
``frame`` key may be omitted there.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .anms import Detection, detection_from_record, read_detections
from .errors import DetectorUnavailable, MalformedResponse


@dataclass
class Frame:
    """One camera frame.

    ``pixels`` is an ``(height, width, 3)`` uint8 RGB array. It may be left
    out when only ``source_path`` is known; :meth:`load` reads it on demand.
    """

    index: int
    width: int = 0
    height: int = 0
    pixels: Optional[np.ndarray] = field(default=None, repr=False)
    source_path: Optional[str] = None

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("frame index must be >= 0")
        if self.pixels is not None:
            px = np.asarray(self.pixels)
            if px.dtype != np.uint8 or px.ndim != 3 or px.shape[2] != 3:
                raise ValueError("pixels must be an (H, W, 3) uint8 array")
            self.pixels = px
            self.height, self.width = px.shape[:2]

    @classmethod
    def from_array(cls, index: int, pixels: np.ndarray, source_path: str | None = None) -> Frame:
        return cls(index=index, pixels=pixels, source_path=source_path)

    def load(self) -> Frame:
        """Return a frame with pixels filled in from ``source_path``."""
        if self.pixels is not None:
            return self
        if self.source_path is None:
            raise ValueError(f"frame {self.index} has neither pixels nor a source path")
        from PIL import Image

        with Image.open(self.source_path) as img:
            px = np.asarray(img.convert("RGB"), dtype=np.uint8)
        return Frame(index=self.index, pixels=px, source_path=self.source_path)


@dataclass
class DetectorOutput:
    frame_index: int
    detections: list[Detection]
    latency: float  # milliseconds


class Detector(ABC):
    """Something that turns a frame into raw (pre-NMS) detections."""

    @abstractmethod
    def _detect(self, frame: Frame) -> list[Detection]:
        ...

    def detect(self, frame: Frame) -> DetectorOutput:
        t0 = time.perf_counter()
        dets = self._detect(frame)
        latency = (time.perf_counter() - t0) * 1000.0
        return DetectorOutput(frame.index, dets, max(0.0, latency))

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ScriptedDetector(Detector):
    def __init__(self, table: dict[int, list[Detection]] | None = None):
        self.table: dict[int, list[Detection]] = dict(table or {})

    def _detect(self, frame: Frame) -> list[Detection]:
        return list(self.table.get(frame.index, ()))

    def __len__(self) -> int:
        return len(self.table)


def scripted_detector_load(path: str | Path) -> ScriptedDetector:
    """Build a :class:`ScriptedDetector` from a detections JSONL file.

    Raises :class:`~hazpipe.errors.ParseError` naming the bad line.
    """
    table: dict[int, list[Detection]] = {}
    for frame, det, _ in read_detections(path):
        table.setdefault(frame, []).append(det)
    return ScriptedDetector(table)


def parse_response(line: str, frame_index: int) -> list[Detection]:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"response is not JSON: {exc.msg}") from None
    if not isinstance(msg, dict) or "detections" not in msg:
        raise MalformedResponse("response lacks a 'detections' list")
    if msg.get("frame_index") != frame_index:
        raise MalformedResponse(
            f"response for frame {msg.get('frame_index')!r}, expected {frame_index}"
        )
    raw = msg["detections"]
    if not isinstance(raw, list):
        raise MalformedResponse("'detections' is not a list")
    dets = []
    for rec in raw:
        if not isinstance(rec, dict):
            raise MalformedResponse("detection entry is not an object")
        rec = {"frame": frame_index, **rec}
        try:
            _, det = detection_from_record(rec)
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedResponse(str(exc)) from None
        dets.append(det)
    return dets


class ExternalDetector(Detector):
    """Detector served by a child process over the stdio JSON protocol."""

    def __init__(self, command: str | list[str], timeout: float | None = None):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.argv = argv
        self.timeout = timeout
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise DetectorUnavailable(f"cannot start {argv!r}: {exc}") from exc

    def _detect(self, frame: Frame) -> list[Detection]:
        if self.proc.poll() is not None:
            raise DetectorUnavailable(f"detector process exited with {self.proc.returncode}")
        req = {"frame_index": frame.index, "image_path": frame.source_path or ""}
        try:
            self.proc.stdin.write(json.dumps(req) + "\n")
            self.proc.stdin.flush()
            line = self.proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise DetectorUnavailable(f"detector pipe failed: {exc}") from exc
        if not line:
            raise DetectorUnavailable("detector closed its output")
        return parse_response(line, frame.index)

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self.proc.kill()
                self.proc.wait()
        else:
            if self.proc.stdin and not self.proc.stdin.closed:
                try:
                    self.proc.stdin.close()
                except OSError:
                    pass
        if self.proc.stdout and not self.proc.stdout.closed:
            self.proc.stdout.close()


def make_detector(selector: str) -> Detector:
    """Build a detector from ``scripted:<path>`` or ``exec:<command>``."""
    kind, _, arg = selector.partition(":")
    if not arg:
        raise ValueError(f"bad detector selector {selector!r}")
    if kind == "scripted":
        return scripted_detector_load(arg)
    if kind == "exec":
        return ExternalDetector(arg)
    raise ValueError(f"unknown detector kind {kind!r} (want scripted: or exec:)")
