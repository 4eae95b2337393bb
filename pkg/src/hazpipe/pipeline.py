"""End-to-end run: frames -> feeder -> detector -> ANMS -> segmentation -> event log."""

from __future__ import annotations

import dataclasses
import json
import logging
import re
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .anms import NmsConfig, anms, detection_to_record
from .detector import Detector, Frame, make_detector
from .errors import DegenerateBox, DegenerateInput, HazpipeError, StageError
from .eventlog import EventSink
from .feeder import FeedTrace, feeder_init, on_detection_result, on_frame
from .segmentation import GrabCutParams, segment_sign

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".tif", ".tiff"}


@dataclass
class PipelineConfig:
    out_dir: Path
    camera_fps: float = 30.0
    nms_threshold: float = 0.5
    class_aware: bool = True
    # not a published value; a common detector default
    score_threshold: float = 0.25
    grabcut: GrabCutParams = field(default_factory=GrabCutParams)
    detector: str = ""
    seed: int = 0
    segment: bool = True
    log_events: bool = True
    event_min_score: float = 0.0
    run_id: str = "run"

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if not self.camera_fps >= 1:
            raise ValueError("camera_fps must be >= 1")
        if not 0.0 <= self.nms_threshold <= 1.0:
            raise ValueError("nms_threshold must be in [0, 1]")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError("score_threshold must be in [0, 1]")


@dataclass
class RunSummary:
    total_frames: int
    processed_frames: int
    detect_calls: int
    detections: int
    segmentations: int
    segmentation_fallbacks: int
    segmentation_skipped: int
    events: int
    timing_s: dict[str, float]
    trace: FeedTrace = field(repr=False, default=None)

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("trace")
        return out


def _natural_key(path: Path):
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", path.name)]


def list_frames(source: str | Path) -> list[Frame]:
    """Frames from a directory of images (natural sort) or an image-list file.

    List-file entries are resolved relative to the list file. Pixels are
    loaded lazily, only for frames that get processed.
    """
    src = Path(source)
    if src.is_dir():
        paths = sorted((p for p in src.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
                       key=_natural_key)
    elif src.is_file():
        paths = []
        for line in src.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                p = Path(line)
                paths.append(p if p.is_absolute() else src.parent / p)
    else:
        raise FileNotFoundError(f"frame source {src} does not exist")
    return [Frame(index=i, source_path=str(p)) for i, p in enumerate(paths)]


def _detection_seed(base: int, frame: int, seq: int) -> int:
    return int(np.random.SeedSequence([base, frame, seq]).generate_state(1)[0])


class _Timer:
    def __init__(self):
        self.totals: dict[str, float] = defaultdict(float)

    def stage(self, name: str):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, exc_type, exc, tb):
                timer.totals[name] += time.perf_counter() - self.t0
                if exc is not None and not isinstance(exc, StageError) and isinstance(
                        exc, (HazpipeError, OSError, ValueError)):
                    raise StageError(name, exc) from exc
                return False

        return _Ctx()


def run(config: PipelineConfig, frames: Sequence[Frame] | Iterable[Frame],
        detector: Detector | None = None) -> RunSummary:
    """Run the whole pipeline and write every output under ``config.out_dir``.

    Outputs: ``detections.jsonl``, ``feed_trace.csv``, ``masks/*.png``,
    ``polygons/*.json``, ``events/`` (manifest, crops, xml) and
    ``summary.json``. Everything except the timings in ``summary.json`` is a
    pure function of config and inputs.
    """
    out = config.out_dir
    timer = _Timer()
    with timer.stage("setup"):
        out.mkdir(parents=True, exist_ok=True)
        if config.segment:
            (out / "masks").mkdir(exist_ok=True)
            (out / "polygons").mkdir(exist_ok=True)
        own_detector = detector is None
        if own_detector:
            detector = make_detector(config.detector)
    nms_cfg = NmsConfig(config.nms_threshold, config.class_aware)
    sink = EventSink(out / "events", config.run_id, config.camera_fps,
                     config.event_min_score) if config.log_events else None

    state = feeder_init(config.camera_fps)
    trace = FeedTrace()
    counts = defaultdict(int)
    det_fh = open(out / "detections.jsonl", "w", encoding="utf-8")
    try:
        for frame in frames:
            counts["frames"] += 1
            p_before = state.p
            with timer.stage("feeder"):
                decision = on_frame(state)
            found = None
            if decision.process:
                with timer.stage("detector"):
                    result = detector.detect(frame)
                counts["detect_calls"] += 1
                if result.frame_index != frame.index:
                    raise StageError("detector", ValueError(
                        f"output for frame {result.frame_index}, expected {frame.index}"))
                with timer.stage("anms"):
                    raw = [d for d in result.detections if d.score >= config.score_threshold]
                    kept = anms(raw, nms_cfg)
                found = bool(kept)
                with timer.stage("feeder"):
                    on_detection_result(state, found)
                if kept:
                    _handle_detections(config, frame, kept, det_fh, sink, timer, counts)
            trace.record(decision, state, found, p_before)
    finally:
        det_fh.close()
        if sink is not None:
            sink.close()
        if own_detector:
            detector.close()

    with timer.stage("output"):
        trace.write_csv(out / "feed_trace.csv")
    summary = RunSummary(
        total_frames=counts["frames"],
        processed_frames=trace.processed_count,
        detect_calls=counts["detect_calls"],
        detections=counts["detections"],
        segmentations=counts["segmentations"],
        segmentation_fallbacks=counts["fallbacks"],
        segmentation_skipped=counts["seg_skipped"],
        events=counts["events"],
        timing_s=dict(timer.totals),
        trace=trace,
    )
    (out / "summary.json").write_text(json.dumps(summary.to_json(), indent=2) + "\n",
                                      encoding="utf-8")
    return summary


def _handle_detections(config, frame, kept, det_fh, sink, timer, counts):
    need_pixels = config.segment or sink is not None
    if need_pixels and (frame.pixels is not None or frame.source_path):
        with timer.stage("frame-read"):
            frame = frame.load()
    have_pixels = frame.pixels is not None
    for seq, det in enumerate(kept):
        counts["detections"] += 1
        stem = f"{frame.index:06d}_{seq:02d}"
        rec = detection_to_record(det, frame.index)
        polygon = None
        if config.segment and have_pixels:
            params = dataclasses.replace(
                config.grabcut, seed=_detection_seed(config.seed, frame.index, seq))
            try:
                with timer.stage("segmentation"):
                    res = segment_sign(frame, det, params)
            except StageError as exc:
                # boxes too small to segment are skipped, not fatal
                if not isinstance(exc.cause, (DegenerateBox, DegenerateInput)):
                    raise
                log.warning("frame %d det %d: segmentation skipped (%s)",
                            frame.index, seq, exc.cause)
                res = None
            if res is None:
                counts["seg_skipped"] += 1
            else:
                counts["segmentations"] += 1
                counts["fallbacks"] += int(res.fallback)
                polygon = res.polygon
                with timer.stage("output"):
                    res.mask.to_png(out_path(config, "masks", stem, ".png"))
                    poly = {**polygon.to_json(), "fallback": res.fallback,
                            "energy_trace": res.energy_trace}
                    out_path(config, "polygons", stem, ".json").write_text(
                        json.dumps(poly) + "\n", encoding="utf-8")
                rec["mask_path"] = f"masks/{stem}.png"
                rec["poly_path"] = f"polygons/{stem}.json"
        det_fh.write(json.dumps(rec) + "\n")
        if sink is not None and have_pixels and sink.accepts(det):
            with timer.stage("eventlog"):
                sink.log_event(frame, det, polygon)
            counts["events"] += 1


def out_path(config: PipelineConfig, sub: str, stem: str, suffix: str) -> Path:
    return config.out_dir / sub / f"{stem}{suffix}"
