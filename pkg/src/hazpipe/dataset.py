"""PASCAL-VOC annotations, the class registry, splitting and augmentation.

VOC directory layout::

    Annotations/<stem>.xml
    JPEGImages/<stem>.<ext>
    ImageSets/Main/train.txt, test.txt   (one stem per line)
"""

from __future__ import annotations

import logging
import math
import random
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Iterable, Sequence, TypeVar

import numpy as np

from .classes import CLASS_NAMES, NUM_CLASSES, canonical_name, class_id, class_name  # noqa: F401
from .errors import EmptySet, OutOfBoundsBox, UnknownClass, XmlError
from .geometry import BBox

log = logging.getLogger(__name__)

T = TypeVar("T")


class ClassRegistry:
    """Ordered, fixed list of the 13 sign classes."""

    names = CLASS_NAMES

    def __len__(self) -> int:
        return NUM_CLASSES

    def __iter__(self):
        return iter(self.names)

    def id_of(self, name: str) -> int:
        return class_id(name)

    def name_of(self, idx: int) -> str:
        return class_name(idx)


REGISTRY = ClassRegistry()


@dataclass(frozen=True)
class VocObject:
    name: str
    box: BBox
    difficult: bool = False

    @property
    def class_id(self) -> int:
        return class_id(self.name)


@dataclass(frozen=True)
class VocAnnotation:
    filename: str
    width: int
    height: int
    depth: int = 3
    objects: tuple[VocObject, ...] = field(default_factory=tuple)
    folder: str = ""

    def validate(self) -> None:
        for obj in self.objects:
            class_id(obj.name)
            b = obj.box
            if b.x_min < 0 or b.y_min < 0 or b.x_max > self.width or b.y_max > self.height:
                raise OutOfBoundsBox(
                    f"{obj.name} box {b.to_list()} outside {self.width}x{self.height}"
                )


def _num_text(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def _child_text(node: ET.Element, tag: str, default: str | None = None) -> str:
    child = node.find(tag)
    if child is None or child.text is None:
        if default is not None:
            return default
        raise XmlError(f"missing <{tag}> in <{node.tag}>")
    return child.text.strip()


def _number(node: ET.Element, tag: str, default: str | None = None) -> float:
    txt = _child_text(node, tag, default)
    try:
        return float(txt)
    except ValueError:
        raise XmlError(f"<{tag}> is not a number: {txt!r}") from None


def voc_parse(xml_text: str | bytes) -> VocAnnotation:
    """Parse one VOC annotation. Class names are canonicalised."""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise XmlError(str(exc)) from None
    if root.tag != "annotation":
        raise XmlError(f"root element is <{root.tag}>, expected <annotation>")
    size = root.find("size")
    if size is None:
        raise XmlError("missing <size>")
    width = int(_number(size, "width"))
    height = int(_number(size, "height"))
    depth = int(_number(size, "depth", "3"))
    objects = []
    for obj in root.findall("object"):
        raw = _child_text(obj, "name")
        name = canonical_name(raw)
        if name not in CLASS_NAMES:
            raise UnknownClass(raw)
        bnd = obj.find("bndbox")
        if bnd is None:
            raise XmlError("object without <bndbox>")
        try:
            box = BBox(*(_number(bnd, t) for t in ("xmin", "ymin", "xmax", "ymax")))
        except ValueError as exc:
            if isinstance(exc, XmlError):
                raise
            raise XmlError(f"bad bndbox: {exc}") from None
        difficult = _child_text(obj, "difficult", "0") not in ("0", "false", "")
        objects.append(VocObject(name, box, difficult))
    ann = VocAnnotation(
        filename=_child_text(root, "filename", ""),
        width=width,
        height=height,
        depth=depth,
        objects=tuple(objects),
        folder=_child_text(root, "folder", ""),
    )
    ann.validate()
    return ann


def voc_write(ann: VocAnnotation) -> str:
    """Canonical VOC XML with a fixed element order."""
    root = ET.Element("annotation")
    ET.SubElement(root, "folder").text = ann.folder
    ET.SubElement(root, "filename").text = ann.filename
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(ann.width)
    ET.SubElement(size, "height").text = str(ann.height)
    ET.SubElement(size, "depth").text = str(ann.depth)
    ET.SubElement(root, "segmented").text = "0"
    for obj in ann.objects:
        node = ET.SubElement(root, "object")
        ET.SubElement(node, "name").text = obj.name
        ET.SubElement(node, "pose").text = "Unspecified"
        ET.SubElement(node, "truncated").text = "0"
        ET.SubElement(node, "difficult").text = "1" if obj.difficult else "0"
        bnd = ET.SubElement(node, "bndbox")
        for tag, val in zip(("xmin", "ymin", "xmax", "ymax"), obj.box.to_list()):
            ET.SubElement(bnd, tag).text = _num_text(val)
    ET.indent(root, space="  ")
    return ET.tostring(root, encoding="unicode") + "\n"


def load_voc_dir(root: str | Path) -> dict[str, VocAnnotation]:
    """Parse every ``Annotations/*.xml`` under ``root``, keyed by file stem."""
    ann_dir = Path(root) / "Annotations"
    if not ann_dir.is_dir():
        raise FileNotFoundError(f"{ann_dir} is not a directory")
    out = {}
    for path in sorted(ann_dir.glob("*.xml")):
        try:
            out[path.stem] = voc_parse(path.read_bytes())
        except XmlError as exc:
            raise XmlError(f"{path}: {exc}") from None
    return out


def primary_label(ann: VocAnnotation) -> str:
    return ann.objects[0].name if ann.objects else ""


def split_dataset(
    items: Sequence[T],
    train_fraction: float = 0.8,
    seed: int = 0,
    label: Callable[[T], Hashable] | None = None,
) -> tuple[list[T], list[T]]:
    """Seeded, per-class stratified train/test split.

    Each class contributes ``ceil(fraction * n_class)`` items to train.
    ``label`` picks the stratum; annotations default to their first object's
    class, anything else to a single stratum.
    """
    if not items:
        raise EmptySet("nothing to split")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction {train_fraction} outside (0, 1)")
    if label is None:
        label = lambda it: primary_label(it) if isinstance(it, VocAnnotation) else None  # noqa: E731
    groups: dict[Hashable, list[int]] = {}
    for i, it in enumerate(items):
        groups.setdefault(label(it), []).append(i)
    rng = random.Random(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for key in sorted(groups, key=lambda k: (k is not None, str(k))):
        idx = groups[key][:]
        rng.shuffle(idx)
        # tolerance guards products like 0.7 * 10 = 7.000000000000001
        n_train = min(len(idx), math.ceil(train_fraction * len(idx) - 1e-9))
        train_idx.extend(idx[:n_train])
        test_idx.extend(idx[n_train:])
    if not test_idx:
        log.warning("test split is empty (%d item(s) total)", len(items))
    return [items[i] for i in train_idx], [items[i] for i in test_idx]


def write_split(root: str | Path, train: Iterable[str], test: Iterable[str]) -> None:
    main = Path(root) / "ImageSets" / "Main"
    main.mkdir(parents=True, exist_ok=True)
    for name, stems in (("train", train), ("test", test)):
        (main / f"{name}.txt").write_text("".join(f"{s}\n" for s in stems), encoding="utf-8")


# -- augmentation --------------------------------------------------------------

AUGMENT_OPS = ("hflip", "rotate", "brightness")
MAX_ROTATION_DEG = 15.0
MAX_BRIGHTNESS = 0.20


def _hflip(image: np.ndarray, ann: VocAnnotation) -> tuple[np.ndarray, VocAnnotation]:
    w = ann.width
    objs = tuple(
        VocObject(o.name, BBox(w - o.box.x_max, o.box.y_min, w - o.box.x_min, o.box.y_max), o.difficult)
        for o in ann.objects
    )
    return image[:, ::-1].copy(), _replace_objects(ann, objs)


def _replace_objects(ann: VocAnnotation, objs: tuple[VocObject, ...]) -> VocAnnotation:
    return VocAnnotation(ann.filename, ann.width, ann.height, ann.depth, objs, ann.folder)


def _rotate(image: np.ndarray, ann: VocAnnotation, degrees: float) -> tuple[np.ndarray, VocAnnotation]:
    """Rotate about the image centre (counter-clockwise as displayed), same canvas.

    Pixels come from nearest-neighbour inverse mapping; uncovered corners are
    black. Each box becomes the clipped axis-aligned bounds of its rotated
    corners.
    """
    if degrees == 0:
        return image.copy(), ann
    h, w = image.shape[:2]
    cx, cy = w / 2, h / 2
    th = math.radians(degrees)
    cos, sin = math.cos(th), math.sin(th)

    def fwd(x, y):
        # y points down, so a visually CCW turn uses -theta in image coordinates
        dx, dy = x - cx, y - cy
        return cx + cos * dx + sin * dy, cy - sin * dx + cos * dy

    ys, xs = np.mgrid[0:h, 0:w]
    px, py = xs + 0.5 - cx, ys + 0.5 - cy
    src_x = cx + cos * px - sin * py
    src_y = cy + sin * px + cos * py
    sx = np.floor(src_x).astype(np.int64)
    sy = np.floor(src_y).astype(np.int64)
    valid = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    out = np.zeros_like(image)
    out[valid] = image[sy[valid], sx[valid]]

    objs = []
    for o in ann.objects:
        b = o.box
        corners = [fwd(x, y) for x, y in ((b.x_min, b.y_min), (b.x_max, b.y_min),
                                          (b.x_max, b.y_max), (b.x_min, b.y_max))]
        xs_c = [c[0] for c in corners]
        ys_c = [c[1] for c in corners]
        nb = BBox(min(xs_c), min(ys_c), max(xs_c), max(ys_c)).clip(w, h)
        objs.append(VocObject(o.name, nb, o.difficult))
    return out, _replace_objects(ann, tuple(objs))


def _brightness(image: np.ndarray, factor: float) -> np.ndarray:
    return np.clip(np.rint(image.astype(np.float64) * factor), 0, 255).astype(np.uint8)


def augment(
    image: np.ndarray,
    annotation: VocAnnotation,
    ops: Sequence[str | tuple[str, float]],
    seed: int = 0,
) -> tuple[np.ndarray, VocAnnotation]:
    """Apply ``ops`` in order.

    An op is a name from :data:`AUGMENT_OPS` (its parameter is drawn from
    ``seed``: rotation within +-15 degrees, brightness within +-20 %) or a
    ``(name, value)`` pair with an explicit angle in degrees / brightness
    delta (0.1 means +10 %). ``hflip`` takes no parameter.
    """
    img = np.asarray(image)
    if img.shape[:2] != (annotation.height, annotation.width):
        raise ValueError("image size does not match the annotation")
    rng = random.Random(seed)
    ann = annotation
    for op in ops:
        name, value = (op, None) if isinstance(op, str) else op
        if name == "hflip":
            img, ann = _hflip(img, ann)
        elif name == "rotate":
            deg = rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG) if value is None else float(value)
            if abs(deg) > MAX_ROTATION_DEG:
                raise ValueError(f"rotation {deg} outside +-{MAX_ROTATION_DEG}")
            img, ann = _rotate(img, ann, deg)
        elif name == "brightness":
            delta = rng.uniform(-MAX_BRIGHTNESS, MAX_BRIGHTNESS) if value is None else float(value)
            if abs(delta) > MAX_BRIGHTNESS:
                raise ValueError(f"brightness change {delta} outside +-{MAX_BRIGHTNESS}")
            img = _brightness(img, 1.0 + delta)
        else:
            raise ValueError(f"unknown augmentation {name!r}; choose from {AUGMENT_OPS}")
    return img, ann
