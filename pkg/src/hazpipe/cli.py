"""``hazpipe`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import anms as anms_mod
from .errors import HazpipeError, StageError


def _add_run(sub):
    p = sub.add_parser("run", help="run the full pipeline over an image sequence")
    p.add_argument("--frames", required=True, help="directory of numbered images or a list file")
    p.add_argument("--fps", type=float, default=30.0, help="declared camera frame rate")
    p.add_argument("--detector", required=True, help="scripted:<jsonl> or exec:<command>")
    p.add_argument("--nms-t", type=float, default=0.5)
    p.add_argument("--class-aware", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--score-threshold", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--components", type=int, default=5)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--gamma", type=float, default=50.0)
    p.add_argument("--morph-radius", type=int, default=1)
    p.add_argument("--segment", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--events", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--event-min-score", type=float, default=0.0)
    p.set_defaults(func=cmd_run)


def cmd_run(args) -> int:
    from .pipeline import PipelineConfig, list_frames, run
    from .segmentation import GrabCutParams

    config = PipelineConfig(
        out_dir=Path(args.out),
        camera_fps=args.fps,
        nms_threshold=args.nms_t,
        class_aware=args.class_aware,
        score_threshold=args.score_threshold,
        grabcut=GrabCutParams(
            components=args.components,
            iterations=args.iterations,
            gamma=args.gamma,
            morph_radius=args.morph_radius,
        ),
        detector=args.detector,
        seed=args.seed,
        segment=args.segment,
        log_events=args.events,
        event_min_score=args.event_min_score,
    )
    try:
        frames = list_frames(args.frames)
    except OSError as exc:
        raise StageError("frames", exc) from exc
    summary = run(config, frames)
    print(
        f"processed {summary.processed_frames}/{summary.total_frames} frames, "
        f"{summary.detections} detections, {summary.events} events"
    )
    for stage, secs in sorted(summary.timing_s.items()):
        print(f"  {stage:<13} {secs * 1000:9.1f} ms")
    return 0


def _add_nms(sub):
    p = sub.add_parser("nms", help="apply ANMS per frame to a detections JSONL file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--class-aware", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_nms)


def cmd_nms(args) -> int:
    items = [(f, d) for f, d, _ in anms_mod.read_detections(args.inp)]
    kept = anms_mod.nms_by_frame(items, anms_mod.NmsConfig(args.t, args.class_aware))
    anms_mod.write_detections(args.out, kept)
    print(f"kept {len(kept)} of {len(items)} detections")
    return 0


def _add_simulate(sub):
    p = sub.add_parser("simulate-feed", help="replay a 0/1 presence trace through the feeder")
    p.add_argument("--trace", required=True, help="file with one 0 or 1 per line")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--out", help="FeedTrace CSV path")
    p.set_defaults(func=cmd_simulate)


def cmd_simulate(args) -> int:
    from .feeder import read_trace, simulate_feed

    trace = simulate_feed(read_trace(args.trace), args.fps)
    if args.out:
        trace.write_csv(args.out)
    print(json.dumps({
        "frames": len(trace),
        "processed_count": trace.processed_count,
        "processed_fraction": trace.processed_fraction,
    }))
    return 0


def _add_segment(sub):
    p = sub.add_parser("segment", help="GrabCut-segment the detections of one image")
    p.add_argument("--image", required=True)
    p.add_argument("--detections", required=True, help="detections JSONL")
    p.add_argument("--out-mask", required=True)
    p.add_argument("--out-poly", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frame", type=int, help="only use records with this frame index")
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--morph-radius", type=int, default=1)
    p.set_defaults(func=cmd_segment)


def cmd_segment(args) -> int:
    from .detector import Frame
    from .geometry import BinaryMask
    from .segmentation import GrabCutParams, segment_sign

    frame = Frame(index=0, source_path=args.image).load()
    dets = [d for f, d, _ in anms_mod.read_detections(args.detections)
            if args.frame is None or f == args.frame]
    union = np.zeros((frame.height, frame.width), dtype=np.uint8)
    polys = []
    for i, det in enumerate(dets):
        params = GrabCutParams(seed=args.seed + i, iterations=args.iterations,
                               morph_radius=args.morph_radius)
        try:
            res = segment_sign(frame, det, params)
        except HazpipeError as exc:
            raise StageError("segmentation", exc) from exc
        union |= res.mask.data
        polys.append({
            **res.polygon.to_json(),
            "class_name": det.class_name,
            "score": det.score,
            "fallback": res.fallback,
        })
    BinaryMask(union).to_png(args.out_mask)
    payload = polys[0] if len(polys) == 1 else polys
    Path(args.out_poly).write_text(json.dumps(payload) + "\n", encoding="utf-8")
    print(f"segmented {len(dets)} detection(s)")
    return 0


def _add_evaluate(sub):
    p = sub.add_parser("evaluate", help="score detections against VOC ground truth")
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth", required=True, help="VOC root directory")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--score-threshold", type=float, default=0.0)
    p.add_argument("--split", help="restrict to ImageSets/Main/<split>.txt")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="optional per-class table CSV")
    p.set_defaults(func=cmd_evaluate)


def resolve_image_id(rec: dict, frame: int, stems: set[str], numeric: dict[int, str]) -> str:
    """Map a detection record to a VOC stem: explicit ``image_id`` wins, then
    the frame number as a stem, then a zero-padded numeric stem."""
    if "image_id" in rec:
        return str(rec["image_id"])
    if str(frame) in stems:
        return str(frame)
    return numeric.get(frame, str(frame))


def cmd_evaluate(args) -> int:
    from .dataset import load_voc_dir
    from .metrics import EvalConfig, EvalDetection, GroundTruthItem, evaluate

    anns = load_voc_dir(args.ground_truth)
    if args.split:
        listing = Path(args.ground_truth) / "ImageSets" / "Main" / f"{args.split}.txt"
        keep = {s.strip() for s in listing.read_text(encoding="utf-8").splitlines() if s.strip()}
        anns = {k: v for k, v in anns.items() if k in keep}
    stems = set(anns)
    numeric = {int(s): s for s in stems if s.isdigit()}
    gts = [
        GroundTruthItem(stem, obj.class_id, obj.box, obj.difficult)
        for stem, ann in sorted(anns.items()) for obj in ann.objects
    ]
    dets = []
    for frame, det, rec in anms_mod.read_detections(args.detections):
        image_id = resolve_image_id(rec, frame, stems, numeric)
        if args.split and image_id not in stems:
            continue
        dets.append(EvalDetection(image_id, det))
    report = evaluate(dets, gts, EvalConfig(args.iou, args.score_threshold), image_ids=stems)
    report.write_json(args.out)
    if args.csv:
        report.write_table_csv(args.csv)
    print(f"mAP@{args.iou:g} = {report.map_at_50:.4f}  mean IoU = {report.mean_iou:.4f}")
    return 0


def _add_voc_split(sub):
    p = sub.add_parser("voc-split", help="write a stratified train/test split for a VOC dir")
    p.add_argument("--voc", required=True)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_voc_split)


def cmd_voc_split(args) -> int:
    from .dataset import load_voc_dir, primary_label, split_dataset, write_split

    anns = load_voc_dir(args.voc)
    stems = sorted(anns)
    train, test = split_dataset(stems, args.train_fraction, args.seed,
                                label=lambda s: primary_label(anns[s]))
    write_split(args.voc, sorted(train), sorted(test))
    print(f"train {len(train)}  test {len(test)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hazpipe", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for add in (_add_run, _add_nms, _add_simulate, _add_segment, _add_evaluate, _add_voc_split):
        add(sub)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"hazpipe {args.command}: {exc}", file=sys.stderr)
        return 1
    except (HazpipeError, OSError, ValueError) as exc:
        print(f"hazpipe {args.command}: [{args.command}] {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
