import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cullforge.core import (
    BoundingBox,
    ConfigError,
    CullConfig,
    Detection,
    EmptyFrameId,
    FrameDetections,
    InvalidBox,
    InvalidScore,
    Manifest,
    Source,
    iou,
    validate_frame,
)
from oracles import raster_iou


def box(x, y, w, h):
    return BoundingBox(x, y, w, h)


def test_iou_identical():
    assert iou(box(0, 0, 2, 2), box(0, 0, 2, 2)) == 1.0


def test_iou_disjoint():
    assert iou(box(0, 0, 1, 1), box(5, 5, 1, 1)) == 0.0


def test_iou_half_shift_matches_raster():
    expected = raster_iou((0, 0, 2, 2), (1, 0, 2, 2), cells_per_px=100)
    assert expected == pytest.approx(1 / 3, abs=1e-12)
    assert iou(box(0, 0, 2, 2), box(1, 0, 2, 2)) == pytest.approx(expected, abs=1e-12)


def test_iou_touching_edges_is_zero():
    assert iou(box(0, 0, 2, 2), box(2, 0, 2, 2)) == 0.0


real_boxes = st.builds(
    BoundingBox,
    st.floats(-1e3, 1e3), st.floats(-1e3, 1e3),
    st.floats(1e-3, 1e3), st.floats(1e-3, 1e3),
)
int_boxes = st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(1, 25), st.integers(1, 25))


@given(real_boxes, real_boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)


@given(real_boxes)
def test_iou_self_is_one(a):
    assert iou(a, a) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=300)
@given(int_boxes, int_boxes)
def test_iou_agrees_with_pixel_counting(a, b):
    assert iou(BoundingBox(*a), BoundingBox(*b)) == pytest.approx(raster_iou(a, b), abs=1e-3)


@pytest.mark.parametrize("w,h", [(0, 1), (1, 0), (-1, 2), (float("nan"), 1)])
def test_box_rejects_bad_size(w, h):
    with pytest.raises(InvalidBox):
        BoundingBox(0, 0, w, h)


def test_box_rejects_nonfinite_origin():
    with pytest.raises(InvalidBox):
        BoundingBox(float("inf"), 0, 1, 1)


@pytest.mark.parametrize("score", [-0.01, 1.01, float("nan")])
def test_detection_rejects_bad_score(score):
    with pytest.raises(InvalidScore):
        Detection(0, box(0, 0, 1, 1), score)


def frame(scores, fid="f0"):
    return FrameDetections(fid, Source.STUDENT, 1.0, tuple(Detection(0, box(0, 0, 1, 1), s) for s in scores))


def test_validate_frame_drops_below_floor():
    out = validate_frame(frame([0.9, 0.01]), score_floor=0.05)
    assert [d.score for d in out.detections] == [0.9]


def test_validate_frame_preserves_order():
    out = validate_frame(frame([0.3, 0.01, 0.9, 0.6]), score_floor=0.05)
    assert [d.score for d in out.detections] == [0.3, 0.9, 0.6]


def test_validate_frame_empty_unchanged():
    f = frame([])
    assert validate_frame(f) is f


def test_zero_width_box_is_invalid_box():
    with pytest.raises(InvalidBox):
        validate_frame(FrameDetections("f0", Source.STUDENT, 1.0, (Detection(0, box(0, 0, 0, 1), 0.5),)))


def test_empty_frame_id():
    with pytest.raises(EmptyFrameId):
        frame([], fid="")


def test_frame_scale_range():
    with pytest.raises(Exception):
        FrameDetections("f0", Source.STUDENT, 0.0)
    with pytest.raises(Exception):
        FrameDetections("f0", Source.STUDENT, 1.5)


def test_config_defaults():
    c = CullConfig()
    assert (c.q_weight, c.b_offset) == (3.0, 0.5)
    assert c.stage1_keep == 6 * c.target_n
    assert CullConfig(target_n=10).stage1_keep == 60


@pytest.mark.parametrize("kw", [
    dict(target_n=0),
    dict(target_n=10, stage1_keep=5),
    dict(iou_threshold=1.0),
    dict(scale_step=1.0),
    dict(min_scale=0.0),
    dict(mse_threshold=-1),
    dict(score_floor=1.0),
])
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        CullConfig(**kw)


def test_config_dict_round_trip():
    c = CullConfig(target_n=64, stage1_keep=500, q_weight=2.5)
    assert CullConfig.from_dict(c.to_dict()) == c
    with pytest.raises(ConfigError):
        CullConfig.from_dict({"bogus": 1})


def test_manifest_invariants():
    cfg = CullConfig(target_n=2)
    m = Manifest((("b", 2.0), ("a", 1.0)), 1.0, cfg, 10)
    assert m.frame_ids == ["b", "a"]
    assert not m.under_filled
    assert Manifest((("a", 1.0),), 1.0, cfg, 10).under_filled
    with pytest.raises(Exception):
        Manifest((("a", 1.0), ("a", 0.5)), 1.0, cfg, 10)
    with pytest.raises(Exception):
        Manifest((("a", 1.0), ("b", 2.0)), 1.0, cfg, 10)
