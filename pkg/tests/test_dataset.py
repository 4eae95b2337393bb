import logging
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hazpipe.classes import CLASS_NAMES
from hazpipe.dataset import (
    VocAnnotation,
    VocObject,
    augment,
    load_voc_dir,
    split_dataset,
    voc_parse,
    voc_write,
    write_split,
)
from hazpipe.errors import EmptySet, OutOfBoundsBox, UnknownClass, XmlError
from hazpipe.geometry import BBox

MINIMAL = """<annotation>
  <filename>a.jpg</filename>
  <size><width>100</width><height>80</height><depth>3</depth></size>
  <object><name>{name}</name>
    <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>30</xmax><ymax>40</ymax></bndbox>
  </object>
</annotation>"""


def test_parse_minimal():
    ann = voc_parse(MINIMAL.format(name="poison"))
    assert (ann.width, ann.height, ann.filename) == (100, 80, "a.jpg")
    (obj,) = ann.objects
    assert obj.class_id == 0 and obj.box == BBox(10, 20, 30, 40) and not obj.difficult


def test_alias_and_case_are_canonicalised():
    ann = voc_parse(MINIMAL.format(name="Flammable Gas"))
    assert ann.objects[0].name == "flammable"


def test_unknown_class():
    with pytest.raises(UnknownClass):
        voc_parse(MINIMAL.format(name="banana"))


@pytest.mark.parametrize("text", ["<annotation>", "<foo/>", "<annotation><filename>x</filename></annotation>"])
def test_malformed(text):
    with pytest.raises(XmlError):
        voc_parse(text)


def test_out_of_bounds():
    bad = MINIMAL.format(name="poison").replace("<xmax>30</xmax>", "<xmax>130</xmax>")
    with pytest.raises(OutOfBoundsBox):
        voc_parse(bad)


def test_write_empty_and_two_objects():
    empty = VocAnnotation("e.png", 10, 10)
    assert "<object>" not in voc_write(empty)
    assert voc_parse(voc_write(empty)) == empty
    two = VocAnnotation("t.png", 50, 50, objects=(
        VocObject("oxygen", BBox(1, 1, 5, 5)), VocObject("poison", BBox(2, 2, 9, 9))))
    text = voc_write(two)
    assert text.count("<object>") == 2 and text.index("oxygen") < text.index("poison")


@st.composite
def annotations(draw):
    w = draw(st.integers(1, 4000))
    h = draw(st.integers(1, 4000))
    coord = lambda hi: st.one_of(  # noqa: E731
        st.integers(0, hi), st.floats(0, hi, allow_nan=False, allow_subnormal=False))
    objs = []
    for _ in range(draw(st.integers(0, 5))):
        xs = sorted(float(v) for v in (draw(coord(w)), draw(coord(w))))
        ys = sorted(float(v) for v in (draw(coord(h)), draw(coord(h))))
        objs.append(VocObject(draw(st.sampled_from(CLASS_NAMES)),
                              BBox(xs[0], ys[0], xs[1], ys[1]), draw(st.booleans())))
    name = draw(st.text("abcdefghijklmnopqrstuvwxyz0123456789_-.", min_size=1, max_size=20))
    return VocAnnotation(name, w, h, draw(st.sampled_from([1, 3])), tuple(objs),
                         draw(st.sampled_from(["", "JPEGImages", "crops"])))


@settings(max_examples=150, deadline=None)
@given(annotations())
def test_round_trip(ann):
    assert voc_parse(voc_write(ann)) == ann


class TestSplit:
    def test_ten_items(self):
        train, test = split_dataset(list(range(10)), 0.8, seed=3)
        assert (len(train), len(test)) == (8, 2)

    def test_single_item(self, caplog):
        with caplog.at_level(logging.WARNING):
            train, test = split_dataset(["only"], 0.8)
        assert train == ["only"] and test == []
        assert "empty" in caplog.text

    def test_empty(self):
        with pytest.raises(EmptySet):
            split_dataset([], 0.8)

    @pytest.mark.parametrize("frac", [0.0, 1.0, -0.2])
    def test_bad_fraction(self, frac):
        with pytest.raises(ValueError):
            split_dataset([1, 2], frac)

    def test_stratified_exact(self):
        items = [(c, i) for c in range(13) for i in range(100)]
        train, test = split_dataset(items, 0.8, seed=11, label=lambda it: it[0])
        assert Counter(c for c, _ in train) == {c: 80 for c in range(13)}
        assert Counter(c for c, _ in test) == {c: 20 for c in range(13)}
        assert split_dataset(items, 0.8, seed=11, label=lambda it: it[0]) == (train, test)
        assert split_dataset(items, 0.8, seed=12, label=lambda it: it[0]) != (train, test)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=1, max_size=60),
           st.floats(0.05, 0.95), st.integers(0, 1000))
    def test_partition_and_ratio(self, labels, frac, seed):
        items = list(enumerate(labels))
        train, test = split_dataset(items, frac, seed, label=lambda it: it[1])
        assert sorted(train + test) == items
        assert not set(train) & set(test)
        for c, n in Counter(labels).items():
            k = sum(1 for it in train if it[1] == c)
            assert abs(k - frac * n) <= 1

    def test_annotations_default_to_first_object(self, tmp_path):
        anns = [VocAnnotation(f"{i}.png", 10, 10, objects=(
            VocObject(CLASS_NAMES[i % 2], BBox(0, 0, 5, 5)),)) for i in range(10)]
        train, _ = split_dataset(anns, 0.8, seed=0)
        assert Counter(a.objects[0].name for a in train) == {"poison": 4, "oxygen": 4}

    def test_directory_io(self, tmp_path):
        (tmp_path / "Annotations").mkdir()
        for i in range(5):
            ann = VocAnnotation(f"{i}.jpg", 20, 20, objects=(VocObject("poison", BBox(1, 1, 9, 9)),))
            (tmp_path / "Annotations" / f"{i:03d}.xml").write_text(voc_write(ann))
        anns = load_voc_dir(tmp_path)
        assert sorted(anns) == ["000", "001", "002", "003", "004"]
        write_split(tmp_path, ["000", "001"], ["002"])
        assert (tmp_path / "ImageSets/Main/train.txt").read_text() == "000\n001\n"


def _scene(w=100, h=60):
    img = np.zeros((h, w, 3), dtype=np.uint8)
    img[20:40, 10:30] = 200
    ann = VocAnnotation("s.png", w, h, objects=(VocObject("poison", BBox(10, 20, 30, 40)),))
    return img, ann


class TestAugment:
    def test_hflip(self):
        img, ann = _scene()
        out, a2 = augment(img, ann, ["hflip"])
        assert a2.objects[0].box == BBox(70, 20, 90, 40)
        assert np.array_equal(out, img[:, ::-1])
        assert out[30, 75, 0] == 200

    @pytest.mark.parametrize("ops", [[], [("rotate", 0.0)], [("brightness", 0.0)]])
    def test_identity(self, ops):
        img, ann = _scene()
        out, a2 = augment(img, ann, ops)
        assert np.array_equal(out, img) and a2 == ann

    def test_brightness(self):
        img, ann = _scene()
        out, _ = augment(img, ann, [("brightness", 0.2)])
        assert out[30, 20, 0] == 240 and out[0, 0, 0] == 0
        out, _ = augment(img, ann, [("brightness", -0.2)])
        assert out[30, 20, 0] == 160

    def test_rejects_out_of_range(self):
        img, ann = _scene()
        with pytest.raises(ValueError):
            augment(img, ann, [("rotate", 30)])
        with pytest.raises(ValueError):
            augment(img, ann, ["shear"])

    def test_rotation_box_covers_rotated_content(self):
        img, ann = _scene()
        out, a2 = augment(img, ann, [("rotate", 12.0)])
        box = a2.objects[0].box
        ys, xs = np.nonzero(out[..., 0] == 200)
        assert box.x_min <= xs.min() and xs.max() + 1 <= box.x_max + 1e-9
        assert box.y_min <= ys.min() and ys.max() + 1 <= box.y_max + 1e-9
        assert box.area > ann.objects[0].box.area

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.lists(st.sampled_from(["hflip", "rotate", "brightness"]), max_size=4))
    def test_boxes_stay_in_bounds(self, seed, ops):
        rng = np.random.default_rng(seed)
        w, h = int(rng.integers(20, 80)), int(rng.integers(20, 80))
        objs = []
        for _ in range(3):
            x0, y0 = rng.uniform(0, w - 1), rng.uniform(0, h - 1)
            objs.append(VocObject("oxygen", BBox(x0, y0, rng.uniform(x0, w), rng.uniform(y0, h))))
        ann = VocAnnotation("r.png", w, h, objects=tuple(objs))
        img = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
        out, a2 = augment(img, ann, ops, seed=seed)
        assert out.shape == img.shape
        a2.validate()
        a3 = augment(img, ann, ops, seed=seed)[1]
        assert a3 == a2
