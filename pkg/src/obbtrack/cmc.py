"""Camera motion estimation between consecutive grayscale frames.

Shi-Tomasi corners are tracked with pyramidal Lucas-Kanade and a 4-DOF
similarity is fitted with RANSAC. Frames are plain 2-D float arrays
indexed ``[row, col]``; points are ``(x, y) = (col, row)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import OrientedBox, canonicalize_angle, riou

__all__ = [
    "SimilarityTransform",
    "DisplacementStats",
    "EstimationError",
    "detect_corners",
    "track_lk",
    "fit_similarity",
    "estimate_platform_motion",
    "exclusion_mask",
    "decompose_displacement",
]


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityTransform:
    """``p -> scale * R(rotation) @ p + translation``."""

    scale: float = 1.0
    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    degraded: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls()

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    @property
    def linear(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return self.scale * np.array([[c, -s], [s, c]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.linear.T + self.translation

    def apply_box(self, box: OrientedBox) -> OrientedBox:
        cx, cy = self.apply([box.cx, box.cy])
        return OrientedBox(
            float(cx), float(cy), box.w * self.scale, box.h * self.scale,
            canonicalize_angle(box.angle + self.rotation),
        )

    def inverse(self) -> "SimilarityTransform":
        inv = SimilarityTransform(1.0 / self.scale, -self.rotation)
        tx, ty = -inv.apply(self.translation)
        return SimilarityTransform(inv.scale, inv.rotation, float(tx), float(ty))

    def then(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """Composition applying ``self`` first, then ``other``."""
        tx, ty = other.apply(self.translation)
        return SimilarityTransform(self.scale * other.scale, self.rotation + other.rotation, float(tx), float(ty))

    @classmethod
    def about(cls, center, scale: float = 1.0, rotation: float = 0.0, shift=(0.0, 0.0)) -> "SimilarityTransform":
        """Scale/rotate about ``center``, then translate by ``shift``."""
        base = cls(scale, rotation)
        c = np.asarray(center, dtype=float)
        tx, ty = c - base.apply(c) + np.asarray(shift, dtype=float)
        return cls(scale, rotation, float(tx), float(ty))


@dataclass(frozen=True)
class DisplacementStats:
    drone: float
    object: float
    total: float
    iou_object: float
    iou_total: float


def _structure_tensor(frame: np.ndarray, block: int):
    ix = ndimage.sobel(frame, axis=1, mode="nearest") / 8.0
    iy = ndimage.sobel(frame, axis=0, mode="nearest") / 8.0
    a = ndimage.uniform_filter(ix * ix, block, mode="nearest")
    b = ndimage.uniform_filter(ix * iy, block, mode="nearest")
    c = ndimage.uniform_filter(iy * iy, block, mode="nearest")
    return a, b, c


def detect_corners(frame, max_count: int = 200, quality: float = 0.01, min_distance: float = 10.0,
                   block_size: int = 3, mask=None) -> np.ndarray:
    """Shi-Tomasi corners, strongest first, as an ``(n, 2)`` array of ``(x, y)``.

    ``mask`` (same shape as ``frame``) limits the search to pixels where it
    is true; the quality threshold is relative to the strongest allowed pixel.
    """
    frame = np.asarray(frame, dtype=float)
    if frame.ndim != 2 or min(frame.shape) < 16:
        raise ValueError("frame must be a 2-D array of at least 16x16")
    a, b, c = _structure_tensor(frame, block_size)
    response = 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != frame.shape:
            raise ValueError(f"mask shape {mask.shape} differs from frame shape {frame.shape}")
        response = np.where(mask, response, 0.0)
    border = block_size // 2 + 2
    response[:border] = 0
    response[-border:] = 0
    response[:, :border] = 0
    response[:, -border:] = 0
    peak = response.max()
    scale = max(float(np.abs(frame).max()), 1e-300)
    if peak <= 1e-12 * scale * scale:
        return np.zeros((0, 2))
    keep = (response >= quality * peak) & (response == ndimage.maximum_filter(response, size=3))
    rows, cols = np.nonzero(keep)
    order = np.lexsort((cols, rows, -response[rows, cols]))
    chosen: list[tuple[float, float]] = []
    min_d2 = min_distance * min_distance
    for k in order:
        x, y = float(cols[k]), float(rows[k])
        if all((x - px) ** 2 + (y - py) ** 2 >= min_d2 for px, py in chosen):
            chosen.append((x, y))
            if len(chosen) >= max_count:
                break
    return np.array(chosen).reshape(-1, 2)


_PYR_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _pyramid(frame: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [frame]
    for _ in range(levels - 1):
        blurred = ndimage.convolve1d(pyr[-1], _PYR_KERNEL, axis=0, mode="reflect")
        blurred = ndimage.convolve1d(blurred, _PYR_KERNEL, axis=1, mode="reflect")
        pyr.append(blurred[::2, ::2])
    return pyr


def _sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return ndimage.map_coordinates(img, [y.ravel(), x.ravel()], order=1, mode="nearest").reshape(x.shape)


def track_lk(prev, nxt, points, levels: int = 3, window: int = 21, max_iter: int = 30,
             epsilon: float = 0.01, min_eig: float = 1e-4) -> list:
    """Pyramidal Lucas-Kanade; returns ``[(point, displaced point or None), ...]``.

    ``min_eig`` is compared against the smaller eigenvalue of the window's
    gradient matrix divided by the window area, after scaling intensities
    so the previous frame spans ``[0, 1]``.
    """
    prev = np.asarray(prev, dtype=float)
    nxt = np.asarray(nxt, dtype=float)
    if prev.shape != nxt.shape:
        raise ValueError(f"frame shapes differ: {prev.shape} vs {nxt.shape}")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return []
    lo, span = prev.min(), np.ptp(prev)
    span = span if span > 0 else 1.0
    prev_n, next_n = (prev - lo) / span, (nxt - lo) / span
    pyr_prev, pyr_next = _pyramid(prev_n, levels), _pyramid(next_n, levels)

    half = window // 2
    offs = np.arange(-half, half + 1, dtype=float)
    ox, oy = np.meshgrid(offs, offs)
    ox, oy = ox.ravel()[None, :], oy.ravel()[None, :]
    n_win = ox.size

    guess = np.zeros_like(pts)
    ok = np.ones(len(pts), dtype=bool)
    for level in range(levels - 1, -1, -1):
        I, J = pyr_prev[level], pyr_next[level]
        h, w = I.shape
        gx = ndimage.sobel(I, axis=1, mode="nearest") / 8.0
        gy = ndimage.sobel(I, axis=0, mode="nearest") / 8.0
        p = pts / (2 ** level)
        wx, wy = p[:, :1] + ox, p[:, 1:] + oy
        Ix, Iy, Iw = _sample(gx, wx, wy), _sample(gy, wx, wy), _sample(I, wx, wy)
        gxx, gxy, gyy = (Ix * Ix).sum(1), (Ix * Iy).sum(1), (Iy * Iy).sum(1)
        det = gxx * gyy - gxy * gxy
        lam = 0.5 * (gxx + gyy) - np.sqrt(0.25 * (gxx - gyy) ** 2 + gxy * gxy)
        if level == 0:
            ok &= lam / n_win >= min_eig
        flat = lam / n_win < 1e-12
        ok &= ~flat
        nu = np.zeros_like(p)
        active = ok.copy()
        for _ in range(max_iter):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            q = p[idx] + guess[idx] + nu[idx]
            Jw = _sample(J, q[:, :1] + ox, q[:, 1:] + oy)
            diff = Iw[idx] - Jw
            bx, by = (diff * Ix[idx]).sum(1), (diff * Iy[idx]).sum(1)
            d = det[idx]
            eta = np.stack([(gyy[idx] * bx - gxy[idx] * by) / d, (gxx[idx] * by - gxy[idx] * bx) / d], axis=1)
            nu[idx] += eta
            bad = ~np.isfinite(nu[idx]).all(1)
            q = p[idx] + guess[idx] + nu[idx]
            bad |= (q[:, 0] < 0) | (q[:, 0] > w - 1) | (q[:, 1] < 0) | (q[:, 1] > h - 1)
            ok[idx[bad]] = False
            done = np.hypot(eta[:, 0], eta[:, 1]) < epsilon
            active[idx[bad | done]] = False
        guess = guess + nu
        if level > 0:
            guess = 2 * guess

    out = []
    height, width = prev.shape
    for k, p in enumerate(pts):
        q = p + guess[k]
        # both windows must lie fully inside the frame
        inside = all(half <= r[0] <= width - 1 - half and half <= r[1] <= height - 1 - half for r in (p, q))
        out.append((p.copy(), q if ok[k] and inside and np.all(np.isfinite(q)) else None))
    return out


def _similarity_from_two(p: np.ndarray, q: np.ndarray):
    zp = p[:, 0] + 1j * p[:, 1]
    zq = q[:, 0] + 1j * q[:, 1]
    dp = zp[0] - zp[1]
    if abs(dp) < 1e-9:
        return None
    a = (zq[0] - zq[1]) / dp
    if abs(a) < 1e-12:
        return None
    return a, zq[0] - a * zp[0]


def _least_squares_similarity(p: np.ndarray, q: np.ndarray):
    zp = p[:, 0] + 1j * p[:, 1]
    zq = q[:, 0] + 1j * q[:, 1]
    mp, mq = zp.mean(), zq.mean()
    cp, cq = zp - mp, zq - mq
    denom = float(np.sum(np.abs(cp) ** 2))
    if denom < 1e-18:
        raise EstimationError("source points are coincident")
    a = np.sum(np.conj(cp) * cq) / denom
    if abs(a) < 1e-12:
        raise EstimationError("degenerate similarity (zero scale)")
    return a, mq - a * mp


def _to_transform(a: complex, b: complex) -> SimilarityTransform:
    return SimilarityTransform(float(abs(a)), float(math.atan2(a.imag, a.real)), float(b.real), float(b.imag))


def fit_similarity(pairs, threshold: float = 3.0, iterations: int = 200, seed: int = 0) -> SimilarityTransform:
    """Robust similarity fit to ``pairs`` of ``((x, y), (x', y'))``.

    RANSAC over minimal two-point samples, then least squares on the inliers
    of the best hypothesis.
    """
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2, 2)
    if len(arr) < 2:
        raise EstimationError("at least two point pairs are required")
    p, q = arr[:, 0], arr[:, 1]
    if len(arr) == 2:
        return _to_transform(*_least_squares_similarity(p, q))

    rng = np.random.default_rng(seed)
    zp = p[:, 0] + 1j * p[:, 1]
    zq = q[:, 0] + 1j * q[:, 1]
    best_mask, best_key = None, None
    for _ in range(iterations):
        i, j = rng.choice(len(arr), size=2, replace=False)
        model = _similarity_from_two(p[[i, j]], q[[i, j]])
        if model is None:
            continue
        a, b = model
        err = np.abs(a * zp + b - zq)
        mask = err < threshold
        key = (int(mask.sum()), -float(err[mask].sum()))
        if best_key is None or key > best_key:
            best_mask, best_key = mask, key
    if best_mask is None or best_mask.sum() < 2:
        raise EstimationError("no consistent similarity hypothesis")
    a, b = _least_squares_similarity(p[best_mask], q[best_mask])
    # one refinement pass on the refitted model's inliers
    mask = np.abs(a * zp + b - zq) < threshold
    if mask.sum() >= 2 and not np.array_equal(mask, best_mask):
        a, b = _least_squares_similarity(p[mask], q[mask])
    return _to_transform(a, b)


def exclusion_mask(shape, boxes, margin: float = 4.0) -> np.ndarray:
    """Boolean ``shape`` mask that is false inside each box grown by ``margin`` px per side."""
    h, w = shape
    mask = np.ones((h, w), dtype=bool)
    for box in boxes:
        r = math.hypot(box.w, box.h) / 2 + margin
        x0, x1 = max(int(math.floor(box.cx - r)), 0), min(int(math.ceil(box.cx + r)) + 1, w)
        y0, y1 = max(int(math.floor(box.cy - r)), 0), min(int(math.ceil(box.cy + r)) + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        ys, xs = np.mgrid[y0:y1, x0:x1].astype(float)
        c, s = math.cos(box.angle), math.sin(box.angle)
        dx, dy = xs - box.cx, ys - box.cy
        inside = (np.abs(dx * c + dy * s) <= box.w / 2 + margin) & (np.abs(-dx * s + dy * c) <= box.h / 2 + margin)
        mask[y0:y1, x0:x1] &= ~inside
    return mask


def estimate_platform_motion(prev, nxt, min_pairs: int = 10, max_corners: int = 300,
                             quality: float = 0.01, min_distance: float = 8.0, seed: int = 0,
                             mask=None) -> SimilarityTransform:
    """Similarity mapping ``prev`` coordinates into ``nxt``.

    Falls back to the identity with ``degraded=True`` when fewer than
    ``min_pairs`` corners survive tracking. ``mask`` excludes regions of
    ``prev`` (false pixels) from corner detection, typically the boxes of
    moving objects.
    """
    prev = np.asarray(prev, dtype=float)
    nxt = np.asarray(nxt, dtype=float)
    pts = detect_corners(prev, max_corners, quality, min_distance, mask=mask)
    tracked = [(p, q) for p, q in track_lk(prev, nxt, pts) if q is not None]
    if len(tracked) < min_pairs:
        return SimilarityTransform(degraded=True)
    try:
        return fit_similarity(np.array([[p, q] for p, q in tracked]), seed=seed)
    except EstimationError:
        return SimilarityTransform(degraded=True)


def decompose_displacement(prev_box: OrientedBox, next_box: OrientedBox,
                           platform: SimilarityTransform) -> DisplacementStats:
    c = np.array([prev_box.cx, prev_box.cy])
    c_next = np.array([next_box.cx, next_box.cy])
    carried = platform.apply(c)
    return DisplacementStats(
        drone=float(np.linalg.norm(carried - c)),
        object=float(np.linalg.norm(c_next - carried)),
        total=float(np.linalg.norm(c_next - c)),
        iou_object=riou(platform.apply_box(prev_box), next_box),
        iou_total=riou(prev_box, next_box),
    )
