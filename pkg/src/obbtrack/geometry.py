"""Oriented bounding box geometry.

Boxes are ``(cx, cy, w, h, angle)`` with ``w >= h`` and the angle, measured
from the +x axis to the long side, kept in ``[-pi/4, 3pi/4)`` (le135).
Overlap is computed exactly by clipping one rectangle against the four
half-planes of the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ANGLE_MIN",
    "ANGLE_MAX",
    "AREA_EPS",
    "OrientedBox",
    "canonicalize_angle",
    "canonicalize_box",
    "corners",
    "polygon_area",
    "intersect_convex",
    "riou",
    "iof",
    "riou_matrix",
    "decode_angle",
    "refine_angle",
    "angle_residual",
    "sigmoid",
    "logit",
]

ANGLE_MIN = -math.pi / 4
ANGLE_MAX = 3 * math.pi / 4
# intersections below this area (px^2) count as empty
AREA_EPS = 1e-12


@dataclass(frozen=True)
class OrientedBox:
    cx: float
    cy: float
    w: float
    h: float
    angle: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h, self.angle)

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    @property
    def diagonal(self) -> float:
        return math.hypot(self.w, self.h)

    def translated(self, dx: float, dy: float) -> "OrientedBox":
        return OrientedBox(self.cx + dx, self.cy + dy, self.w, self.h, self.angle)


def canonicalize_angle(theta: float) -> float:
    """Map ``theta`` onto its representative modulo pi in ``[-pi/4, 3pi/4)``.

    Values already in range are returned untouched, which keeps the
    operation exactly idempotent.
    """
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    if ANGLE_MIN <= theta < ANGLE_MAX:
        return theta
    out = (theta - ANGLE_MIN) % math.pi + ANGLE_MIN
    # float modulo can land exactly on the open end
    if out >= ANGLE_MAX:
        out -= math.pi
    if out < ANGLE_MIN:
        out = ANGLE_MIN
    return out


def canonicalize_box(cx: float, cy: float, w: float, h: float, theta: float) -> OrientedBox:
    """Return the canonical (long side first, le135 angle) form of a rectangle."""
    if not (w > 0 and h > 0):
        raise ValueError(f"box sides must be positive, got w={w!r}, h={h!r}")
    if h > w:
        w, h = h, w
        theta = theta + math.pi / 2
    return OrientedBox(float(cx), float(cy), float(w), float(h), canonicalize_angle(theta))


def _as_box(box) -> OrientedBox:
    if isinstance(box, OrientedBox):
        return box
    return OrientedBox(*map(float, box))


def corners(box: OrientedBox) -> np.ndarray:
    """Four vertices, counterclockwise (y up), as a ``(4, 2)`` array."""
    box = _as_box(box)
    c, s = math.cos(box.angle), math.sin(box.angle)
    hw, hh = box.w / 2.0, box.h / 2.0
    local = ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh))
    return np.array([(box.cx + x * c - y * s, box.cy + x * s + y * c) for x, y in local])


def polygon_area(vertices) -> float:
    """Signed shoelace area; positive for counterclockwise order."""
    pts = np.asarray(vertices, dtype=float)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip(subject: list, a: tuple, b: tuple) -> list:
    # keep the part of `subject` left of the directed edge a->b
    ax, ay = a
    ex, ey = b[0] - ax, b[1] - ay
    out = []
    n = len(subject)
    for i in range(n):
        p = subject[i]
        q = subject[(i + 1) % n]
        dp = ex * (p[1] - ay) - ey * (p[0] - ax)
        dq = ex * (q[1] - ay) - ey * (q[0] - ax)
        if dp >= 0:
            out.append(p)
        if (dp >= 0) != (dq >= 0):
            t = dp / (dp - dq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def intersect_convex(a, b) -> np.ndarray:
    """Intersection of two counterclockwise convex polygons.

    Returns a ``(k, 2)`` array of vertices, ``k == 0`` when the
    intersection is empty or has negligible area.
    """
    subject = [tuple(map(float, p)) for p in np.asarray(a, dtype=float)]
    clip = [tuple(map(float, p)) for p in np.asarray(b, dtype=float)]
    m = len(clip)
    for i in range(m):
        if not subject:
            break
        subject = _clip(subject, clip[i], clip[(i + 1) % m])
    if len(subject) < 3 or polygon_area(subject) < AREA_EPS:
        return np.zeros((0, 2))
    return np.array(subject)


def _far_apart(a: OrientedBox, b: OrientedBox) -> bool:
    r = 0.5 * (a.diagonal + b.diagonal)
    return (a.cx - b.cx) ** 2 + (a.cy - b.cy) ** 2 > r * r


def intersection_area(a: OrientedBox, b: OrientedBox) -> float:
    a, b = _as_box(a), _as_box(b)
    if _far_apart(a, b):
        return 0.0
    poly = intersect_convex(corners(a), corners(b))
    return polygon_area(poly) if len(poly) else 0.0


def riou(a: OrientedBox, b: OrientedBox) -> float:
    """Rotated intersection-over-union of two boxes."""
    a, b = _as_box(a), _as_box(b)
    if a == b:
        return 1.0
    inter = intersection_area(a, b)
    if inter <= 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, max(0.0, inter / union))


def iof(box: OrientedBox, region: Sequence[float]) -> float:
    """Fraction of ``box`` lying inside the axis-aligned ``(x0, y0, x1, y1)`` region."""
    box = _as_box(box)
    x0, y0, x1, y1 = map(float, region)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("region must have positive area")
    rect = np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    poly = intersect_convex(corners(box), rect)
    if not len(poly):
        return 0.0
    return min(1.0, polygon_area(poly) / box.area)


def riou_matrix(rows: Iterable[OrientedBox], cols: Iterable[OrientedBox]) -> np.ndarray:
    rows, cols = [_as_box(r) for r in rows], [_as_box(c) for c in cols]
    out = np.zeros((len(rows), len(cols)))
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            out[i, j] = riou(r, c)
    return out


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def logit(p: float) -> float:
    return math.log(p) - math.log1p(-p)


def decode_angle(normalized: float) -> float:
    """Angle from a normalized head output in ``[0, 1]``."""
    if not (0.0 <= normalized <= 1.0):
        raise ValueError(f"normalized angle must lie in [0, 1], got {normalized!r}")
    return canonicalize_angle((normalized - 0.25) * math.pi)


def refine_angle(prev_normalized: float, delta: float) -> float:
    """Apply a logit-space correction ``delta`` to a previous normalized angle."""
    if not (0.0 < prev_normalized < 1.0):
        raise ValueError("previous normalized angle must lie strictly inside (0, 1)")
    if not math.isfinite(delta):
        raise ValueError("delta must be finite")
    if delta == 0:
        return decode_angle(prev_normalized)
    return canonicalize_angle((sigmoid(logit(prev_normalized) + delta) - 0.25) * math.pi)


def angle_residual(measured: float, predicted: float) -> float:
    """``measured - predicted`` wrapped modulo pi into ``[-pi/2, pi/2)``."""
    r = float(measured) - float(predicted)
    if -math.pi / 2 <= r < math.pi / 2:
        return r
    out = (r + math.pi / 2) % math.pi - math.pi / 2
    if out >= math.pi / 2:
        out -= math.pi
    return out
