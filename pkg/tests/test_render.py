import colorsys

import cv2
import numpy as np
import pytest

from plantmots.errors import DimensionMismatch
from plantmots.mots_io import Annotation, FrameSeries
from plantmots.render import id_color, render_frame, render_sequence


def _square(h, w, y, x, s, oid, frame=0):
    m = np.zeros((h, w), bool)
    m[y : y + s, x : x + s] = True
    return Annotation.from_mask(frame, oid, m)


def _hue(bgr):
    b, g, r = (c / 255 for c in bgr)
    return colorsys.rgb_to_hsv(r, g, b)[0]


def test_three_instances_three_hues():
    anns = [_square(80, 120, 30, 5 + 35 * i, 30, oid) for i, oid in enumerate((0, 1, 2))]
    img = render_frame(anns)
    hues = []
    for a in anns:
        crop, x0, y0 = a.crop()
        centre = img[y0 + 15, x0 + 15]
        assert centre.any()
        hues.append(round(_hue(centre), 2))
    assert len(set(hues)) == 3
    assert len({id_color(i) for i in range(3)}) == 3


def test_black_background_outside_instances():
    img = render_frame([_square(50, 50, 20, 20, 5, 3)])
    assert img.shape == (50, 50, 3) and not img[45:, :].any()


def test_draws_over_supplied_image():
    bg = np.full((40, 60, 3), 200, np.uint8)
    img = render_frame([_square(40, 60, 10, 10, 15, 1)], bg)
    assert (img[0, 0] == 200).all() and not (img[17, 17] == 200).all()
    assert (bg == 200).all()
    with pytest.raises(DimensionMismatch):
        render_frame([_square(40, 61, 10, 10, 15, 1)], bg)


def test_sequence_deterministic(tmp_path):
    anns = [_square(60, 60, 10 + 3 * t, 10, 20, 4, t) for t in range(3)]
    series = FrameSeries.from_annotations(anns)
    a = render_sequence(series, tmp_path / "a")
    b = render_sequence(series, tmp_path / "b")
    assert [p.name for p in a] == ["000000.png", "000001.png", "000002.png"]
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()


def test_empty_series_writes_nothing(tmp_path):
    assert render_sequence(FrameSeries(), tmp_path / "out") == []
    assert list((tmp_path / "out").iterdir()) == []


def test_background_images_by_frame_number(tmp_path):
    imgs = tmp_path / "imgs"
    imgs.mkdir()
    cv2.imwrite(str(imgs / "frame_0007.png"), np.full((30, 30, 3), 90, np.uint8))
    series = FrameSeries([(7, [_square(30, 30, 5, 5, 8, 0, 7)])])
    (path,) = render_sequence(series, tmp_path / "out", imgs)
    out = cv2.imread(str(path))
    assert (out[29, 29] == 90).all()
    (imgs / "frame_0007.png").write_bytes(b"not an image")
    with pytest.raises(OSError):
        render_sequence(series, tmp_path / "out2", imgs)
