"""Detection box to sign mask and polygon."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..anms import Detection
from ..errors import DegenerateInput, EmptyMask, UniformRegion
from ..geometry import (
    BBox,
    BinaryMask,
    Point,
    Polygon,
    box_pixel_slices,
    convex_hull,
    mask_to_points,
    pad_box_inward,
)
from .grabcut import GrabCutParams, _as_rgb, grabcut
from .morphology import morph_open


@dataclass
class SegmentationResult:
    mask: BinaryMask
    polygon: Polygon
    energy_trace: list[float] = field(default_factory=list)
    padded_box: BBox | None = None
    fallback: bool = False
    reason: str = ""


def _rect_polygon(box: BBox) -> Polygon:
    return Polygon((
        Point(box.x_min, box.y_min),
        Point(box.x_max, box.y_min),
        Point(box.x_max, box.y_max),
        Point(box.x_min, box.y_max),
    ))


def _fallback(box: BBox, w: int, h: int, reason: str) -> SegmentationResult:
    data = np.zeros((h, w), dtype=np.uint8)
    rows, cols = box_pixel_slices(box, w, h)
    data[rows, cols] = 1
    mask = BinaryMask(data)
    try:
        poly = convex_hull(mask_to_points(mask))
    except (EmptyMask, DegenerateInput):
        poly = _rect_polygon(box)
    return SegmentationResult(mask, poly, [], box, fallback=True, reason=reason)


def segment_sign(image, detection: Detection | BBox,
                 params: GrabCutParams = GrabCutParams()) -> SegmentationResult:
    """Pad the box inward, run GrabCut, open the mask, wrap it in its hull.

    A box with no colour structure, or a cut that leaves no foreground,
    degrades to the padded rectangle with ``fallback=True``.
    """
    rgb = _as_rgb(image)
    h, w = rgb.shape[:2]
    box = detection.box if isinstance(detection, Detection) else detection
    clipped = box.clip(w, h)
    if clipped.area <= 0:
        raise DegenerateInput("detection box does not intersect the image")
    padded = pad_box_inward(clipped, params.pad_fraction)
    try:
        state = grabcut(rgb, padded, params)
    except UniformRegion:
        return _fallback(padded, w, h, "uniform-region")
    mask = morph_open(state.mask(), params.morph_radius)
    try:
        polygon = convex_hull(mask_to_points(mask))
    except (EmptyMask, DegenerateInput) as exc:
        res = _fallback(padded, w, h, "empty-mask" if isinstance(exc, EmptyMask) else "degenerate-hull")
        res.energy_trace = list(state.energy_trace)
        return res
    return SegmentationResult(mask, polygon, list(state.energy_trace), padded)
