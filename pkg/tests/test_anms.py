import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hazpipe.anms import (
    Detection,
    NmsConfig,
    anms,
    nms_by_frame,
    nms_fast,
    nms_oracle,
    read_detections,
    write_detections,
)
from hazpipe.errors import ParseError
from hazpipe.geometry import BBox, iou
from scenes import random_detections

IMPLS = [anms, nms_oracle, nms_fast]


def ids(dets):
    return [id(d) for d in dets]


def overlapping_pair(cls_a, cls_b):
    # iou((0,0,10,10), (0,0,10,12.5)) = 100 / 125 = 0.8
    a = Detection(BBox(0, 0, 10, 10), 0.9, cls_a)
    b = Detection(BBox(0, 0, 10, 12.5), 0.7, cls_b)
    assert iou(a.box, b.box) == pytest.approx(0.8)
    return a, b


@pytest.mark.parametrize("impl", IMPLS)
class TestExamples:
    def test_single(self, impl):
        d = Detection(BBox(0, 0, 5, 5), 0.9, 0)
        assert ids(impl([d], NmsConfig(0.5))) == [id(d)]

    def test_same_class_suppressed(self, impl):
        a, b = overlapping_pair(2, 2)
        assert ids(impl([b, a], NmsConfig(0.5, True))) == [id(a)]

    def test_different_classes_kept(self, impl):
        a, b = overlapping_pair(3, 7)
        assert ids(impl([a, b], NmsConfig(0.5, True))) == [id(a), id(b)]

    def test_class_blind_mode_suppresses_across_classes(self, impl):
        a, b = overlapping_pair(3, 7)
        assert ids(impl([a, b], NmsConfig(0.5, False))) == [id(a)]

    def test_empty(self, impl):
        assert impl([], NmsConfig()) == []

    def test_threshold_is_inclusive(self, impl):
        a, b = overlapping_pair(1, 1)
        assert ids(impl([a, b], NmsConfig(0.8))) == [id(a)]

    def test_all_disjoint_sorted_by_score(self, impl):
        dets = [Detection(BBox(20 * i, 0, 20 * i + 10, 10), s, i % 13)
                for i, s in enumerate([0.3, 0.9, 0.5, 0.7])]
        out = impl(dets, NmsConfig(0.1))
        assert [d.score for d in out] == [0.9, 0.7, 0.5, 0.3]

    def test_tie_break_class_then_index(self, impl):
        d0 = Detection(BBox(0, 0, 1, 1), 0.5, 4)
        d1 = Detection(BBox(5, 5, 6, 6), 0.5, 2)
        d2 = Detection(BBox(9, 9, 10, 10), 0.5, 2)
        assert ids(impl([d0, d1, d2], NmsConfig(0.5))) == [id(d1), id(d2), id(d0)]


@pytest.mark.parametrize("seed", range(40))
def test_implementations_agree(seed):
    rng = np.random.default_rng(seed)
    dets = random_detections(rng, int(rng.integers(0, 21)))
    for t in (0.3, 0.5, 0.7):
        for aware in (True, False):
            cfg = NmsConfig(t, aware)
            ref = ids(nms_oracle(dets, cfg))
            assert ids(anms(dets, cfg)) == ref
            assert ids(nms_fast(dets, cfg)) == ref


det_lists = st.integers(0, 2**32 - 1).flatmap(
    lambda s: st.just(random_detections(np.random.default_rng(s), int(s % 25))))


@settings(max_examples=150, deadline=None)
@given(det_lists, st.sampled_from([0.0, 0.3, 0.5, 0.7, 1.0]))
def test_properties(dets, t):
    aware = anms(dets, NmsConfig(t, True))
    blind = anms(dets, NmsConfig(t, False))
    in_ids = set(ids(dets))
    assert set(ids(aware)) <= in_ids
    # surviving same-class pairs never overlap at t
    for i, a in enumerate(aware):
        for b in aware[i + 1:]:
            if a.class_id == b.class_id:
                assert iou(a.box, b.box) < t
    # each suppressed box is covered by a better survivor of its class
    kept = set(ids(aware))
    for d in dets:
        if id(d) not in kept:
            assert any(k.class_id == d.class_id and iou(k.box, d.box) >= t
                       and (-k.score, k.class_id) <= (-d.score, d.class_id) for k in aware)
    assert len(aware) >= len(blind)
    # scaling scores keeps the same survivors
    scaled = [Detection(d.box, d.score * 0.5, d.class_id) for d in dets]
    back = {id(s): d for s, d in zip(scaled, dets)}
    assert [id(back[id(s)]) for s in anms(scaled, NmsConfig(t, True))] == ids(aware)


def test_detection_validation():
    with pytest.raises(ValueError):
        Detection(BBox(0, 0, 1, 1), 1.5, 0)
    with pytest.raises(ValueError):
        Detection(BBox(0, 0, 1, 1), 0.5, 13)


def test_jsonl_round_trip(tmp_path):
    dets = random_detections(np.random.default_rng(3), 6)
    items = [(i // 2, d) for i, d in enumerate(dets)]
    path = tmp_path / "d.jsonl"
    write_detections(path, items)
    back = read_detections(path)
    assert [f for f, _, _ in back] == [f for f, _ in items]
    assert all(a.same_as(b) for (_, a, _), (_, b) in zip(back, items))
    line = path.read_text().splitlines()[0]
    assert set(__import__("json").loads(line)) == {"frame", "class_id", "class_name", "score", "bbox"}


def test_jsonl_parse_error_names_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"frame": 0, "class_id": 0, "score": 0.5, "bbox": [0,0,1,1]}\n{oops\n')
    with pytest.raises(ParseError) as err:
        read_detections(path)
    assert err.value.line == 2
    assert "line 2" in str(err.value)


def test_nms_by_frame_keeps_frames_separate():
    a, b = overlapping_pair(0, 0)
    out = nms_by_frame([(0, a), (1, b)], NmsConfig(0.5))
    assert [(f, id(d)) for f, d in out] == [(0, id(a)), (1, id(b))]
