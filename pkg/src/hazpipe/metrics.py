"""Detection evaluation: matching, AP, precision/recall/F1, accuracy, IoU and
the confusion matrix.

Conventions:

* Matching is greedy in descending score order (ties by input order). Each
  detection claims the unmatched ground truth of the same image with the
  highest IoU, provided that IoU reaches the threshold.
* AP uses the all-points interpolated precision envelope.
* Any 0/0 rate is reported as 0.
* Accuracy is one-vs-rest over the class-agnostic match decisions (the same
  pairs that fill the confusion matrix): ``(TP + TN) / total``. It is an
  interpretation, flagged as such in the report.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np

from . import classes
from .anms import Detection
from .errors import InconsistentIds
from .geometry import BBox, iou

BACKGROUND = classes.NUM_CLASSES  # index of the extra confusion row/column


@dataclass
class GroundTruthItem:
    image_id: Hashable
    class_id: int
    box: BBox
    difficult: bool = False
    matched: bool = field(default=False, compare=False)


@dataclass(frozen=True)
class EvalDetection:
    """A detection tagged with the image it was made on."""

    image_id: Hashable
    detection: Detection

    @property
    def score(self) -> float:
        return self.detection.score

    @property
    def class_id(self) -> int:
        return self.detection.class_id

    @property
    def box(self) -> BBox:
        return self.detection.box


@dataclass(frozen=True)
class Match:
    det: EvalDetection
    gt: GroundTruthItem | None
    iou: float


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    # detections below this score are ignored for PR/F1/accuracy/confusion;
    # AP always sweeps every detection
    score_threshold: float = 0.0


@dataclass
class ClassMetrics:
    ap: float
    precision: float
    recall: float
    accuracy: float
    f1: float
    mean_iou: float
    tp: int
    fp: int
    fn: int
    tn: int
    n_gt: int


@dataclass
class EvalReport:
    per_class: dict[int, ClassMetrics]
    map_at_50: float
    confusion: np.ndarray  # (14, 14), rows actual, cols predicted
    iou_threshold: float
    mean_iou: float
    totals: dict[str, float]
    notes: list[str] = field(default_factory=list)

    def class_confusion(self) -> np.ndarray:
        """The 13 x 13 class-only block of the confusion matrix."""
        return self.confusion[:BACKGROUND, :BACKGROUND].copy()

    def to_json(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "map_at_50": self.map_at_50,
            "mean_iou": self.mean_iou,
            "totals": self.totals,
            "per_class": {
                classes.class_name(c): {"class_id": c, **vars(m)}
                for c, m in sorted(self.per_class.items())
            },
            "confusion": {
                "labels": list(classes.CLASS_NAMES) + ["background"],
                "rows": "actual",
                "columns": "predicted",
                "matrix": self.confusion.tolist(),
            },
            "notes": self.notes,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    def write_table_csv(self, path: str | Path) -> None:
        """Per-class percentages (AP, PR, RR, ACC, F1, IoU) plus an average row."""
        cols = ("ap", "precision", "recall", "accuracy", "f1", "mean_iou")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["class", "AP", "PR", "RR", "ACC", "F1", "IoU"])
            rows = [m for _, m in sorted(self.per_class.items())]
            for c, m in sorted(self.per_class.items()):
                w.writerow([classes.class_name(c)] + [f"{100 * getattr(m, k):.2f}" for k in cols])
            if rows:
                w.writerow(["average"] + [
                    f"{100 * float(np.mean([getattr(m, k) for m in rows])):.2f}" for k in cols
                ])


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    f1 = _ratio(2 * p * r, p + r)
    return p, r, f1


def _score_order(dets: Sequence[EvalDetection]) -> list[int]:
    return sorted(range(len(dets)), key=lambda i: -dets[i].score)


def match_detections(
    dets: Sequence[EvalDetection],
    gts: Sequence[GroundTruthItem],
    iou_threshold: float = 0.5,
    class_aware: bool = True,
) -> list[Match]:
    """Greedy one-to-one matching; returns one :class:`Match` per detection,
    in descending score order. ``gt`` is ``None`` for unmatched detections.

    ``matched`` flags on ``gts`` are reset and then left set for the ground
    truths that were claimed.
    """
    by_image: dict[Hashable, list[GroundTruthItem]] = {}
    for g in gts:
        g.matched = False
        by_image.setdefault(g.image_id, []).append(g)
    out = []
    for i in _score_order(dets):
        d = dets[i]
        best, best_iou = None, -1.0
        for g in by_image.get(d.image_id, ()):
            if g.matched or (class_aware and g.class_id != d.class_id):
                continue
            ov = iou(d.box, g.box)
            if ov >= iou_threshold and ov > best_iou:
                best, best_iou = g, ov
        if best is not None:
            best.matched = True
            out.append(Match(d, best, best_iou))
        else:
            out.append(Match(d, None, 0.0))
    return out


def pr_curve(matches: Sequence[Match], n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative (recall, precision) after each detection in score order."""
    tp = np.cumsum([m.gt is not None for m in matches], dtype=np.float64)
    fp = np.cumsum([m.gt is None for m in matches], dtype=np.float64)
    recall = tp / n_gt if n_gt else np.zeros_like(tp)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
    return recall, precision


def envelope_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    if recall.size == 0:
        return 0.0
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def average_precision(
    class_dets: Sequence[EvalDetection],
    class_gts: Sequence[GroundTruthItem],
    iou_threshold: float = 0.5,
) -> float:
    """All-points interpolated AP of one class; 0 when there is no ground truth."""
    if not class_gts:
        return 0.0
    matches = match_detections(class_dets, class_gts, iou_threshold)
    recall, precision = pr_curve(matches, len(class_gts))
    return envelope_ap(recall, precision)


def confusion_matrix(matches: Iterable[Match], gts: Iterable[GroundTruthItem]) -> np.ndarray:
    """Rows actual, columns predicted; the last row/column is background.

    ``matches`` must come from a class-agnostic matching over ``gts``.
    """
    cm = np.zeros((BACKGROUND + 1, BACKGROUND + 1), dtype=np.int64)
    claimed = set()
    for m in matches:
        if m.gt is None:
            cm[BACKGROUND, m.det.class_id] += 1
        else:
            cm[m.gt.class_id, m.det.class_id] += 1
            claimed.add(id(m.gt))
    for g in gts:
        if id(g) not in claimed:
            cm[g.class_id, BACKGROUND] += 1
    return cm


def _check_ids(dets, gts, image_ids):
    if image_ids is None:
        known = {g.image_id for g in gts}
    else:
        known = set(image_ids)
        stray = {g.image_id for g in gts} - known
        if stray:
            raise InconsistentIds(f"ground truth for unknown images: {sorted(map(str, stray))[:5]}")
    stray = {d.image_id for d in dets} - known
    if stray:
        raise InconsistentIds(f"detections for unknown images: {sorted(map(str, stray))[:5]}")


def evaluate(
    dets: Sequence[EvalDetection],
    gts: Sequence[GroundTruthItem],
    config: EvalConfig = EvalConfig(),
    image_ids: Iterable[Hashable] | None = None,
) -> EvalReport:
    """Full per-class report.

    ``image_ids`` lists every evaluated image, including ones without objects;
    when omitted, the images carrying ground truth are taken as the set.
    """
    _check_ids(dets, gts, image_ids)
    thr = config.iou_threshold
    kept = [d for d in dets if d.score >= config.score_threshold]

    agnostic = match_detections(kept, gts, thr, class_aware=False)
    cm = confusion_matrix(agnostic, gts)
    total_decisions = int(cm.sum())

    present = sorted({g.class_id for g in gts} | {d.class_id for d in dets})
    per_class: dict[int, ClassMetrics] = {}
    all_tp_ious: list[float] = []
    tot_tp = tot_fp = tot_fn = 0
    for c in present:
        c_gts = [g for g in gts if g.class_id == c]
        c_dets = [d for d in dets if d.class_id == c]
        ap = average_precision(c_dets, c_gts, thr)

        c_kept = [d for d in kept if d.class_id == c]
        matches = match_detections(c_kept, c_gts, thr)
        tp = sum(m.gt is not None for m in matches)
        fp = len(matches) - tp
        fn = len(c_gts) - tp
        p, r, f1 = precision_recall_f1(tp, fp, fn)
        ious = [m.iou for m in matches if m.gt is not None]
        all_tp_ious.extend(ious)

        ovr_tp = int(cm[c, c])
        ovr_fp = int(cm[:, c].sum()) - ovr_tp
        ovr_fn = int(cm[c, :].sum()) - ovr_tp
        ovr_tn = total_decisions - ovr_tp - ovr_fp - ovr_fn
        acc = _ratio(ovr_tp + ovr_tn, total_decisions)

        per_class[c] = ClassMetrics(
            ap=ap, precision=p, recall=r, accuracy=acc, f1=f1,
            mean_iou=float(np.mean(ious)) if ious else 0.0,
            tp=tp, fp=fp, fn=fn, tn=ovr_tn, n_gt=len(c_gts),
        )
        tot_tp, tot_fp, tot_fn = tot_tp + tp, tot_fp + fp, tot_fn + fn

    with_gt = [m.ap for m in per_class.values() if m.n_gt > 0]
    mean_ap = float(np.mean(with_gt)) if with_gt else 0.0
    p, r, f1 = precision_recall_f1(tot_tp, tot_fp, tot_fn)
    totals = {
        "tp": tot_tp, "fp": tot_fp, "fn": tot_fn,
        "precision": p, "recall": r, "f1": f1,
        "n_detections": len(dets), "n_ground_truth": len(gts),
    }
    return EvalReport(
        per_class=per_class,
        map_at_50=mean_ap,
        confusion=cm,
        iou_threshold=thr,
        mean_iou=float(np.mean(all_tp_ious)) if all_tp_ious else 0.0,
        totals=totals,
        notes=[
            "accuracy is one-vs-rest over class-agnostic match decisions (interpretive)",
            "mAP averages AP over classes that have ground truth",
        ],
    )
