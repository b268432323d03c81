import numpy as np
import pytest

from glottisgate.core import (
    BBox,
    ConfusionCounts,
    bbox_to_label_record,
    confusion_counts,
    crop_resize,
    format_label_record,
    frame_id_from_path,
    letterbox,
    list_images,
    mask_to_bbox,
    paste_back,
    read_frame,
    read_mask,
    restrict_mask,
    write_frame,
    write_mask,
)
from glottisgate.errors import InvalidInputError, MissingInputError


# letterbox --------------------------------------------------------------------

@pytest.mark.parametrize(
    "w,h,scale,content,pads",
    [
        (512, 256, 0.5, (256, 128), (0, 64)),
        (256, 256, 1.0, (256, 256), (0, 0)),
        (400, 300, 0.64, (256, 192), (0, 32)),
        (300, 400, 0.64, (192, 256), (32, 0)),
    ],
)
def test_letterbox_geometry(w, h, scale, content, pads):
    img = np.full((h, w), 7, dtype=np.uint8)
    canvas, tf = letterbox(img, 256)
    assert canvas.shape == (256, 256)
    assert tf.scale == pytest.approx(scale)
    assert tf.content_size == content
    assert (tf.pad_left, tf.pad_top) == pads
    cw, ch = content
    inner = canvas[tf.pad_top:tf.pad_top + ch, tf.pad_left:tf.pad_left + cw]
    assert (inner == 7).all()
    assert canvas.sum() == 7 * cw * ch


def test_letterbox_identity_is_exact():
    img = np.random.default_rng(0).integers(0, 256, (256, 256), dtype=np.uint8)
    canvas, tf = letterbox(img, 256)
    assert np.array_equal(canvas, img)
    assert (tf.scale, tf.pad_left, tf.pad_top) == (1.0, 0, 0)


def test_letterbox_odd_padding_goes_right_and_bottom():
    canvas, tf = letterbox(np.ones((5, 10), dtype=np.uint8), 10)
    # 5 rows of content in 10: 2 on top, 3 at the bottom
    assert tf.pad_top == 2
    assert canvas[:2].sum() == 0 and canvas[7:].sum() == 0 and canvas[2:7].all()


def test_letterbox_mask_stays_binary():
    mask = np.zeros((100, 50), dtype=bool)
    mask[10:40, 5:20] = True
    canvas, tf = letterbox(mask, 64)
    assert canvas.dtype == bool
    assert canvas.shape == (64, 64)


def test_letterbox_rejects_empty():
    with pytest.raises(InvalidInputError):
        letterbox(np.zeros((0, 5), dtype=np.uint8), 32)
    with pytest.raises(InvalidInputError):
        letterbox(np.zeros((5, 5), dtype=np.uint8), 0)


def test_letterbox_round_trip_within_half_pixel():
    rng = np.random.default_rng(1)
    for _ in range(50):
        w, h = rng.integers(1, 700, 2)
        _, tf = letterbox(np.zeros((h, w), dtype=np.uint8), 256)
        for _ in range(10):
            x, y = rng.uniform(0, w), rng.uniform(0, h)
            bx, by = tf.inverse(*tf.forward(x, y))
            assert abs(bx - x) <= 0.5 and abs(by - y) <= 0.5


# boxes and labels ---------------------------------------------------------------

def test_mask_to_bbox_examples():
    m = np.zeros((64, 64), dtype=bool)
    m[20:41, 10:31] = True
    assert mask_to_bbox(m).as_tuple() == (10, 20, 31, 41)
    assert mask_to_bbox(np.zeros((4, 4), dtype=bool)) is None
    one = np.zeros((16, 16), dtype=bool)
    one[7, 5] = True
    box = mask_to_bbox(one)
    assert box.as_tuple() == (5, 7, 6, 8) and box.confidence == 1.0


@pytest.mark.parametrize(
    "box,expected",
    [
        (BBox(0, 0, 256, 256), (0, 0.5, 0.5, 1.0, 1.0)),
        (BBox(64, 64, 192, 192), (0, 0.5, 0.5, 0.5, 0.5)),
        (BBox(10, 20, 31, 41), (0, 0.080078125, 0.119140625, 0.08203125, 0.08203125)),
    ],
)
def test_label_record(box, expected):
    assert bbox_to_label_record(box, 256, 256) == expected


def test_label_record_rejects_outside_box():
    with pytest.raises(InvalidInputError):
        bbox_to_label_record(BBox(200, 0, 300, 10), 256, 256)


def test_format_label_record():
    assert format_label_record((0, 0.5, 0.25, 0.125, 1.0)) == "0 0.500000 0.250000 0.125000 1.000000"


def test_bbox_translate_and_shift_inside():
    b = BBox(10, 10, 20, 30, 0.7)
    assert b.translate(5, -3).as_tuple() == (15, 7, 25, 27)
    assert b.translate(0, 0) is b
    assert BBox(-5, 250, 5, 260).shift_inside(256, 256).as_tuple() == (0, 246, 10, 256)
    assert b.shift_inside(256, 256) is b


# crop / paste -------------------------------------------------------------------

def test_crop_resize_examples():
    frame = np.random.default_rng(2).integers(0, 256, (256, 256), dtype=np.uint8)
    patch, rect = crop_resize(frame, BBox(100, 100, 140, 140), 8, 256)
    assert rect.as_tuple() == (92, 92, 148, 148) and patch.shape == (256, 256)
    _, rect = crop_resize(frame, BBox(0, 0, 10, 10), 8, 256)
    assert rect.as_tuple() == (0, 0, 18, 18)
    patch, rect = crop_resize(frame, BBox(0, 0, 256, 256), 0, 256)
    assert np.array_equal(patch, frame)


def test_paste_back_examples():
    rect = BBox(92, 92, 148, 148)
    out = paste_back(np.ones((256, 256), dtype=bool), rect, 256, 256)
    expected = np.zeros((256, 256), dtype=bool)
    expected[92:148, 92:148] = True
    assert np.array_equal(out, expected)
    assert not paste_back(np.zeros((256, 256), dtype=bool), rect, 256, 256).any()


def test_paste_back_errors():
    with pytest.raises(InvalidInputError):
        paste_back(np.ones((10, 12), dtype=bool), BBox(0, 0, 5, 5), 20, 20)
    with pytest.raises(InvalidInputError):
        paste_back(np.ones((10, 10), dtype=bool), BBox(15, 15, 25, 25), 20, 20)


def _ellipse(rng, h, w):
    ys, xs = np.ogrid[:h, :w]
    r = rng.uniform(5.7, 25)
    cy, cx = rng.uniform(r + 1, h - r - 1), rng.uniform(r + 1, w - r - 1)
    return (xs - cx) ** 2 / (r * rng.uniform(0.6, 1.4)) ** 2 + (ys - cy) ** 2 / r**2 <= 1


@pytest.mark.parametrize("regime", ["padded_box", "full_frame"])
def test_crop_paste_round_trip_preserves_area(regime):
    # both regimes map the crop onto a canvas at least as large, which is how
    # the pipelines use it; shrinking a bigger frame loses boundary pixels
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(200):
        mask = _ellipse(rng, 256, 256)
        area = int(mask.sum())
        if area < 100:
            continue
        box = mask_to_bbox(mask) if regime == "padded_box" else BBox(0, 0, 256, 256)
        patch, rect = crop_resize(mask.astype(np.uint8) * 255, box, 8 if regime == "padded_box" else 0, 256)
        back = paste_back(patch >= 128, rect, 256, 256)
        assert abs(int(back.sum()) - area) <= 0.02 * area
        checked += 1
    assert checked > 100


def test_crop_paste_exact_without_resizing():
    frame = np.zeros((64, 64), dtype=np.uint8)
    frame[10:30, 20:40] = 255
    box = BBox(10, 5, 42, 37)
    patch, rect = crop_resize(frame, box, 0, 32)
    back = paste_back(patch >= 128, rect, 64, 64)
    assert np.array_equal(back, restrict_mask(frame >= 128, rect))


# restriction and counting ---------------------------------------------------------

def test_restrict_mask_examples():
    m = np.zeros((32, 32), dtype=bool)
    m[0:11, 0:11] = True
    assert np.array_equal(restrict_mask(m, BBox(0, 0, 32, 32)), m)
    out = restrict_mask(m, BBox(5, 5, 20, 20))
    expected = np.zeros_like(m)
    expected[5:11, 5:11] = True
    assert np.array_equal(out, expected)
    assert not restrict_mask(m, BBox(20, 20, 30, 30)).any()


def test_restrict_mask_returns_a_copy():
    m = np.ones((4, 4), dtype=bool)
    out = restrict_mask(m, BBox(0, 0, 4, 4))
    out[0, 0] = False
    assert m[0, 0]


def test_confusion_counts_examples():
    a = np.zeros((256, 256), dtype=bool)
    a[:10, :10] = True
    assert confusion_counts(a, a) == ConfusionCounts(100, 0, 0, 65436)
    p = np.zeros((4, 4), dtype=bool)
    g = np.zeros((4, 4), dtype=bool)
    p[0:2, 0:2] = True
    g[0:2, 1:3] = True
    assert confusion_counts(p, g) == (2, 2, 2, 10)
    z = np.zeros((3, 5), dtype=bool)
    assert confusion_counts(z, z) == (0, 0, 0, 15)
    with pytest.raises(InvalidInputError):
        confusion_counts(z, np.zeros((5, 3), dtype=bool))


# files ------------------------------------------------------------------------------

def test_png_round_trip(tmp_path):
    frame = np.random.default_rng(4).integers(0, 256, (12, 17), dtype=np.uint8)
    write_frame(tmp_path / "a" / "000003.png", frame)
    assert np.array_equal(read_frame(tmp_path / "a" / "000003.png"), frame)
    mask = frame > 100
    write_mask(tmp_path / "m.png", mask)
    assert np.array_equal(read_mask(tmp_path / "m.png"), mask)
    raw = read_frame(tmp_path / "m.png")
    assert set(np.unique(raw)) <= {0, 255}


def test_pgm_and_threshold(tmp_path):
    img = np.array([[0, 127, 128, 255]], dtype=np.uint8)
    write_frame(tmp_path / "x.pgm", img)
    assert read_mask(tmp_path / "x.pgm").tolist() == [[False, False, True, True]]


def test_list_images_sorted_by_id(tmp_path):
    for i in (10, 2, 1):
        write_frame(tmp_path / f"{i}.png", np.zeros((2, 2), dtype=np.uint8))
    (tmp_path / "notes.txt").write_text("x")
    assert [i for i, _ in list_images(tmp_path)] == [1, 2, 10]
    assert frame_id_from_path(tmp_path / "frame_0042.png") == 42


def test_missing_files(tmp_path):
    with pytest.raises(MissingInputError):
        read_frame(tmp_path / "nope.png")
    with pytest.raises(MissingInputError):
        list_images(tmp_path / "nope")
