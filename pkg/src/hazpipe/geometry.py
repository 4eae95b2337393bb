"""Boxes, points, polygons and binary masks shared by every stage.

Coordinates are continuous pixel units with the origin at the top-left
corner. Rasterisation into cells only happens in :mod:`hazpipe.segmentation`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateInput, EmptyMask, InvalidFraction

MAX_PAD_FRACTION = 0.45


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box coordinates {vals}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted box {vals}")

    @classmethod
    def from_list(cls, coords: Sequence[float]) -> BBox:
        if len(coords) != 4:
            raise ValueError(f"expected 4 box coordinates, got {len(coords)}")
        return cls(*(float(c) for c in coords))

    def to_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    def clip(self, width: float, height: float) -> BBox:
        """Clamp the box to the ``[0, width] x [0, height]`` canvas."""
        x0 = min(max(self.x_min, 0.0), width)
        y0 = min(max(self.y_min, 0.0), height)
        x1 = min(max(self.x_max, 0.0), width)
        y1 = min(max(self.y_max, 0.0), height)
        return BBox(x0, y0, x1, y1)

    def intersects(self, other: BBox) -> bool:
        return (
            min(self.x_max, other.x_max) > max(self.x_min, other.x_min)
            and min(self.y_max, other.y_max) > max(self.y_min, other.y_min)
        )


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True)
class Polygon:
    """Counter-clockwise vertex ring (y axis pointing down is ignored here:
    orientation is measured in the plain x/y plane)."""

    vertices: tuple[Point, ...]

    def __post_init__(self):
        verts = tuple(v if isinstance(v, Point) else Point(float(v[0]), float(v[1]))
                      for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(self.vertices) < 3:
            raise DegenerateInput("a polygon needs at least 3 vertices")
        n = len(self.vertices)
        for i in range(n):
            if self.vertices[i] == self.vertices[(i + 1) % n]:
                raise DegenerateInput("consecutive polygon vertices coincide")

    def to_json(self) -> dict:
        return {"vertices": [[v.x, v.y] for v in self.vertices]}

    @classmethod
    def from_json(cls, obj: dict) -> Polygon:
        return cls(tuple(Point(float(x), float(y)) for x, y in obj["vertices"]))

    def signed_area(self) -> float:
        vs = self.vertices
        total = 0.0
        for i in range(len(vs)):
            a, b = vs[i], vs[(i + 1) % len(vs)]
            total += a.x * b.y - b.x * a.y
        return total / 2

    def contains(self, p: Point, tol: float = 1e-9) -> bool:
        """Inside-or-on test; valid for convex CCW polygons only."""
        vs = self.vertices
        for i in range(len(vs)):
            if _cross(vs[i], vs[(i + 1) % len(vs)], p) < -tol:
                return False
        return True


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Row-major 0/1 grid; ``data[y, x]`` is the cell at column x, row y."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError("mask data must be 2-D")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def zeros(cls, width: int, height: int) -> BinaryMask:
        return cls(np.zeros((height, width), dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def count(self) -> int:
        return int(self.data.sum())

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.data.shape == other.data.shape and bool((self.data == other.data).all())

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))

    def to_png(self, path: str | Path) -> None:
        from PIL import Image

        Image.fromarray(self.data * 255, mode="L").save(path)

    @classmethod
    def from_png(cls, path: str | Path) -> BinaryMask:
        from PIL import Image

        arr = np.asarray(Image.open(path).convert("L"))
        return cls((arr >= 128).astype(np.uint8))


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when the union is empty."""
    iw = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    ih = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)


def convex_hull(points: Iterable[Point]) -> Polygon:
    """Andrew's monotone chain.

    Collinear boundary points are dropped, so the result is strictly convex.
    The ring starts at the lexicographically smallest point and runs CCW.
    """
    pts = sorted(set(points), key=lambda p: (p.x, p.y))
    if len(pts) < 3:
        raise DegenerateInput(f"need at least 3 distinct points, got {len(pts)}")

    def half(seq):
        chain: list[Point] = []
        for p in seq:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(reversed(pts))
    ring = lower[:-1] + upper[:-1]
    if len(ring) < 3:
        raise DegenerateInput("all points are collinear")
    return Polygon(tuple(ring))


def pad_box_inward(box: BBox, fraction: float) -> BBox:
    """Shrink ``box`` by ``fraction`` of its width/height on every side."""
    if not 0.0 <= fraction <= MAX_PAD_FRACTION:
        raise InvalidFraction(f"padding fraction {fraction} outside [0, {MAX_PAD_FRACTION}]")
    if box.area <= 0:
        raise DegenerateInput("cannot pad a zero-area box")
    dx = box.width * fraction
    dy = box.height * fraction
    return BBox(box.x_min + dx, box.y_min + dy, box.x_max - dx, box.y_max - dy)


def mask_to_points(mask: BinaryMask) -> list[Point]:
    ys, xs = np.nonzero(mask.data)
    if len(xs) == 0:
        raise EmptyMask("mask has no foreground cells")
    return [Point(float(x) + 0.5, float(y) + 0.5) for y, x in zip(ys, xs)]


def box_pixel_slices(box: BBox, width: int, height: int) -> tuple[slice, slice]:
    """Row/column slices of the cells whose centres fall inside ``box``.

    Centres sitting exactly on the box edge count as inside.
    """
    x0 = max(0, math.ceil(box.x_min - 0.5))
    x1 = min(width, math.floor(box.x_max - 0.5) + 1)
    y0 = max(0, math.ceil(box.y_min - 0.5))
    y1 = min(height, math.floor(box.y_max - 0.5) + 1)
    return slice(y0, max(y0, y1)), slice(x0, max(x0, x1))
