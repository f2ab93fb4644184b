import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from obbtrack.geometry import (
    OrientedBox,
    angle_residual,
    canonicalize_angle,
    canonicalize_box,
    corners,
    decode_angle,
    intersect_convex,
    iof,
    polygon_area,
    refine_angle,
    riou,
    riou_matrix,
)
from oracles import raster_riou, raster_riou_scanline

PI = math.pi
OCTAGON = 2 * (math.sqrt(2) - 1)

angles = st.floats(-20.0, 20.0, allow_nan=False)
sizes = st.floats(0.5, 50.0)
coords = st.floats(-50.0, 50.0)
boxes = st.builds(canonicalize_box, coords, coords, sizes, sizes, angles)


@pytest.mark.parametrize("theta,expected", [(PI, 0.0), (3 * PI / 4, -PI / 4), (0.0, 0.0), (-PI / 4, -PI / 4)])
def test_canonicalize_angle_examples(theta, expected):
    assert canonicalize_angle(theta) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_canonicalize_angle_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        canonicalize_angle(bad)


@given(angles)
def test_canonicalize_angle_range_period_idempotent(theta):
    c = canonicalize_angle(theta)
    assert -PI / 4 <= c < 3 * PI / 4
    assert canonicalize_angle(c) == c
    k = (theta - c) / PI
    assert abs(k - round(k)) < 1e-9


def test_canonicalize_box_examples():
    b = canonicalize_box(0, 0, 2, 4, 0)
    assert b.as_tuple() == pytest.approx((0, 0, 4, 2, PI / 2))
    assert canonicalize_box(0, 0, 4, 2, PI).as_tuple() == pytest.approx((0, 0, 4, 2, 0), abs=1e-12)
    assert canonicalize_box(1, 1, 3, 3, PI / 3).as_tuple() == pytest.approx((1, 1, 3, 3, PI / 3))
    with pytest.raises(ValueError):
        canonicalize_box(0, 0, 0, 1, 0)
    with pytest.raises(ValueError):
        canonicalize_box(0, 0, 2, -1, 0)


def _corner_set(pts):
    return sorted((round(x, 9), round(y, 9)) for x, y in pts)


@given(coords, coords, sizes, sizes, angles)
def test_canonicalize_box_preserves_corners(cx, cy, w, h, theta):
    raw = OrientedBox(cx, cy, w, h, theta)
    canon = canonicalize_box(cx, cy, w, h, theta)
    assert canon.w >= canon.h
    a, b = corners(raw), corners(canon)
    # match each corner to its nearest counterpart
    for p in a:
        assert np.min(np.abs(b - p).max(axis=1)) < 1e-9


def test_corners_examples():
    assert _corner_set(corners(OrientedBox(0, 0, 2, 2, 0))) == _corner_set([(-1, -1), (1, -1), (1, 1), (-1, 1)])
    assert _corner_set(corners(OrientedBox(10, 10, 4, 2, 0))) == _corner_set([(8, 9), (12, 9), (12, 11), (8, 11)])
    r = math.sqrt(2)
    assert _corner_set(corners(OrientedBox(0, 0, 2, 2, PI / 4))) == _corner_set([(0, -r), (r, 0), (0, r), (-r, 0)])


@given(boxes)
def test_corners_ccw_with_centroid_and_area(box):
    pts = corners(box)
    assert pts.mean(axis=0) == pytest.approx([box.cx, box.cy], abs=1e-9)
    assert polygon_area(pts) == pytest.approx(box.w * box.h, rel=1e-9)
    # signed shoelace is positive for counter-clockwise order
    x, y = pts[:, 0], pts[:, 1]
    assert np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)) > 0


def test_intersect_convex_examples():
    sq = corners(OrientedBox(0.5, 0.5, 1, 1, 0))
    assert polygon_area(intersect_convex(sq, sq)) == pytest.approx(1.0)
    far = corners(OrientedBox(5, 5, 1, 1, 0))
    assert len(intersect_convex(sq, far)) == 0
    rot = corners(OrientedBox(0.5, 0.5, 1, 1, PI / 4))
    octagon = intersect_convex(sq, rot)
    assert len(octagon) == 8
    assert polygon_area(octagon) == pytest.approx(OCTAGON, abs=1e-12)


def test_octagon_area_against_raster():
    a, b = OrientedBox(0, 0, 1, 1, 0), OrientedBox(0, 0, 1, 1, PI / 4)
    expected = OCTAGON / (2 - OCTAGON)
    assert raster_riou(a, b) == pytest.approx(expected, abs=2e-3)


def test_riou_examples():
    b = OrientedBox(3, 4, 10, 5, 0.3)
    assert riou(b, b) == 1.0
    assert riou(b, OrientedBox(100, 100, 10, 5, 0.3)) == 0.0
    r = riou(OrientedBox(0, 0, 1, 1, 0), OrientedBox(0, 0, 1, 1, PI / 4))
    assert r == pytest.approx(OCTAGON / (2 - OCTAGON), abs=1e-12)
    assert r == pytest.approx(0.7071, abs=1e-4)


def _axis_iou(a: OrientedBox, b: OrientedBox) -> float:
    ix = max(0.0, min(a.cx + a.w / 2, b.cx + b.w / 2) - max(a.cx - a.w / 2, b.cx - b.w / 2))
    iy = max(0.0, min(a.cy + a.h / 2, b.cy + b.h / 2) - max(a.cy - a.h / 2, b.cy - b.h / 2))
    inter = ix * iy
    return inter / (a.w * a.h + b.w * b.h - inter)


@given(coords, coords, sizes, sizes, coords, coords, sizes, sizes)
def test_riou_axis_aligned_closed_form(x1, y1, w1, h1, x2, y2, w2, h2):
    a = OrientedBox(x1 / 5, y1 / 5, max(w1, h1), min(w1, h1), 0.0)
    b = OrientedBox(x2 / 5, y2 / 5, max(w2, h2), min(w2, h2), 0.0)
    assert riou(a, b) == pytest.approx(_axis_iou(a, b), abs=1e-12)


@given(boxes, boxes)
def test_riou_symmetric_bounded(a, b):
    r = riou(a, b)
    assert 0.0 <= r <= 1.0
    assert r == pytest.approx(riou(b, a), abs=1e-12)


@given(boxes)
def test_riou_self_is_one(b):
    assert riou(b, b) == 1.0


def test_riou_matches_raster_on_sample():
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = canonicalize_box(*rng.uniform(0, 10, 2), *rng.uniform(2, 8, 2), rng.uniform(-PI, PI))
        b = canonicalize_box(*(np.array([a.cx, a.cy]) + rng.normal(0, 2, 2)), *rng.uniform(2, 8, 2),
                             rng.uniform(-PI, PI))
        assert abs(riou(a, b) - raster_riou(a, b, n=1024)) < 5e-3


def test_scanline_raster_counts_same_cells():
    rng = np.random.default_rng(8)
    for _ in range(30):
        a = canonicalize_box(*rng.uniform(0, 10, 2), *rng.uniform(1, 8, 2), rng.uniform(-PI, PI))
        b = canonicalize_box(*rng.uniform(0, 10, 2), *rng.uniform(1, 8, 2), rng.uniform(-PI, PI))
        assert raster_riou_scanline(a, b, n=512) == pytest.approx(raster_riou(a, b, n=512), abs=1e-12)
    square = OrientedBox(0, 0, 2, 2, 0)
    assert raster_riou_scanline(square, square.translated(1, 0), n=512) == pytest.approx(1 / 3, abs=5e-3)


def test_iof_examples():
    region = (0, 0, 100, 100)
    assert iof(OrientedBox(50, 50, 10, 4, 0.4), region) == pytest.approx(1.0)
    assert iof(OrientedBox(100, 50, 10, 4, 0), region) == pytest.approx(0.5)
    assert iof(OrientedBox(50, 50, 10, 4, PI / 2).translated(0, -50), region) == pytest.approx(0.5)
    assert iof(OrientedBox(200, 50, 10, 4, 0), region) == 0.0


def test_riou_matrix():
    rng = np.random.default_rng(0)
    b = OrientedBox(1, 2, 5, 3, 0.1)
    assert riou_matrix([b], [b]).tolist() == [[1.0]]
    assert riou_matrix([], [b]).shape == (0, 1)
    rows = [canonicalize_box(*rng.uniform(0, 5, 2), *rng.uniform(2, 6, 2), rng.uniform(0, 3)) for _ in range(2)]
    cols = [canonicalize_box(*rng.uniform(0, 5, 2), *rng.uniform(2, 6, 2), rng.uniform(0, 3)) for _ in range(2)]
    m = riou_matrix(rows, cols)
    for i in range(2):
        for j in range(2):
            assert m[i, j] == riou(rows[i], cols[j])


def test_decode_angle():
    assert decode_angle(0.25) == pytest.approx(0.0)
    assert decode_angle(0.5) == pytest.approx(PI / 4)
    assert decode_angle(1.0) == pytest.approx(-PI / 4)
    for bad in (-0.01, 1.01, math.nan):
        with pytest.raises(ValueError):
            decode_angle(bad)


def test_refine_angle():
    assert refine_angle(0.5, 0.0) == pytest.approx(PI / 4)
    assert refine_angle(0.25, 0.0) == pytest.approx(0.0)
    # sigmoid(logit(0.5) + ln 9) = 0.9 -> 0.65 pi, already inside [-pi/4, 3pi/4) so no wrap applies
    assert refine_angle(0.5, math.log(9)) == pytest.approx(0.65 * PI, abs=1e-12)
    assert refine_angle(0.5, 2.1972) == pytest.approx(0.65 * PI, abs=1e-4)
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            refine_angle(bad, 0.1)


@given(st.floats(1e-6, 1 - 1e-6))
def test_refine_zero_delta_is_decode(p):
    assert refine_angle(p, 0.0) == pytest.approx(decode_angle(p), abs=1e-12)


def test_angle_residual_examples():
    assert angle_residual(0.3, 0.1) == pytest.approx(0.2)
    assert angle_residual(-PI / 4 + 0.1, 3 * PI / 4 - 0.1) == pytest.approx(0.2)
    assert angle_residual(1.0, 1.0) == 0.0


@given(angles, angles)
def test_angle_residual_inverse(m, p):
    measured, predicted = canonicalize_angle(m), canonicalize_angle(p)
    r = angle_residual(measured, predicted)
    assert -PI / 2 <= r < PI / 2
    back = canonicalize_angle(predicted + r)
    # the two ends of the interval are the same orientation
    diff = abs(back - measured)
    assert min(diff, PI - diff) < 1e-12
