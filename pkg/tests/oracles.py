"""Slow, obviously-correct reference implementations used only by tests."""

from __future__ import annotations

import itertools
import math

import numpy as np

from obbtrack.geometry import OrientedBox, canonicalize_box


def _inside(box: OrientedBox, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    c, s = math.cos(box.angle), math.sin(box.angle)
    dx, dy = xs - box.cx, ys - box.cy
    return (np.abs(dx * c + dy * s) <= box.w / 2) & (np.abs(-dx * s + dy * c) <= box.h / 2)


def raster_riou(a: OrientedBox, b: OrientedBox, n: int = 2048) -> float:
    """IoU by counting cell centres of an n x n grid over the joint bounding square."""
    ra = math.hypot(a.w, a.h) / 2
    rb = math.hypot(b.w, b.h) / 2
    x0, x1 = min(a.cx - ra, b.cx - rb), max(a.cx + ra, b.cx + rb)
    y0, y1 = min(a.cy - ra, b.cy - rb), max(a.cy + ra, b.cy + rb)
    side = max(x1 - x0, y1 - y0)
    step = side / n
    inter = union = 0
    # row blocks keep memory bounded
    xs = x0 + (np.arange(n) + 0.5) * step
    for start in range(0, n, 256):
        ys = y0 + (np.arange(start, min(n, start + 256)) + 0.5) * step
        gx, gy = np.meshgrid(xs, ys)
        ia, ib = _inside(a, gx, gy), _inside(b, gx, gy)
        inter += np.count_nonzero(ia & ib)
        union += np.count_nonzero(ia | ib)
    return inter / union if union else 0.0


def _row_intervals(box: OrientedBox, ys: np.ndarray):
    """Per scanline ``y``, the x-interval covered by ``box`` (empty when lo > hi)."""
    c, s = math.cos(box.angle), math.sin(box.angle)
    dy = ys - box.cy
    lo = np.full(ys.shape, -np.inf)
    hi = np.full(ys.shape, np.inf)
    # |dx*c + dy*s| <= w/2 and |-dx*s + dy*c| <= h/2, each a slab in dx
    for coef, offset, half in ((c, dy * s, box.w / 2), (-s, dy * c, box.h / 2)):
        if abs(coef) < 1e-15:
            outside = np.abs(offset) > half
            lo = np.where(outside, np.inf, lo)
            continue
        a = (-half - offset) / coef
        b = (half - offset) / coef
        lo = np.maximum(lo, np.minimum(a, b) + box.cx)
        hi = np.minimum(hi, np.maximum(a, b) + box.cx)
    return lo, hi


def raster_riou_scanline(a: OrientedBox, b: OrientedBox, n: int = 2048) -> float:
    """Same cell-centre count as :func:`raster_riou`, one interval per row."""
    ra = math.hypot(a.w, a.h) / 2
    rb = math.hypot(b.w, b.h) / 2
    x0, x1 = min(a.cx - ra, b.cx - rb), max(a.cx + ra, b.cx + rb)
    y0, y1 = min(a.cy - ra, b.cy - rb), max(a.cy + ra, b.cy + rb)
    step = max(x1 - x0, y1 - y0) / n
    ys = y0 + (np.arange(n) + 0.5) * step

    def count(lo, hi):
        # cells i with x0 + (i + 0.5) * step in [lo, hi], 0 <= i < n
        first = np.clip(np.ceil((lo - x0) / step - 0.5), 0, n)
        last = np.clip(np.floor((hi - x0) / step - 0.5), -1, n - 1)
        return np.maximum(last - first + 1, 0)

    la, ha = _row_intervals(a, ys)
    lb, hb = _row_intervals(b, ys)
    inter = count(np.maximum(la, lb), np.minimum(ha, hb)).sum()
    union = count(la, ha).sum() + count(lb, hb).sum() - inter
    return float(inter / union) if union else 0.0


def brute_force_lap(values: np.ndarray, forbidden: np.ndarray) -> tuple[int, float]:
    """(max cardinality, min total cost at that cardinality) over every partial matching.

    Costs are summed in row order, so a solver total summed the same way
    compares exactly.
    """
    n, m = values.shape
    best = [0, 0.0]

    def walk(r: int, used: int, card: int, cost: float) -> None:
        if r == n:
            if card > best[0] or (card == best[0] and cost < best[1]):
                best[0], best[1] = card, cost
            return
        walk(r + 1, used, card, cost)
        for c in range(m):
            if not used >> c & 1 and not forbidden[r, c]:
                walk(r + 1, used | 1 << c, card + 1, cost + float(values[r, c]))

    walk(0, 0, 0, 0.0)
    return best[0], best[1]


def brute_force_lap_square(values: np.ndarray) -> float:
    n, m = values.shape
    if n <= m:
        return min(sum(values[r, c] for r, c in enumerate(p)) for p in itertools.permutations(range(m), n))
    return brute_force_lap_square(values.T)


def _partial_matchings(rows: list, cols: list, allowed):
    """Every one-to-one partial matching between ``rows`` and ``cols`` over allowed pairs."""
    if not rows:
        yield []
        return
    r, rest = rows[0], rows[1:]
    yield from _partial_matchings(rest, cols, allowed)
    for c in cols:
        if allowed(r, c):
            for tail in _partial_matchings(rest, [x for x in cols if x != c], allowed):
                yield [(r, c)] + tail


def clear_oracle(frames, sim_fn, alpha: float = 0.5) -> dict:
    """CLEAR counts from the definition.

    ``frames`` is a list of ``(gt, pred)`` with each side a list of
    ``(track_id, box)``. Per frame: previous correspondences that still
    overlap by ``alpha`` are kept, the remaining objects take the matching
    with the largest summed similarity among all candidate matchings.
    A switch is a gt id paired with a different prediction id than the
    last one it was paired with.
    """
    tp = fp = fn = idsw = 0
    prev: dict = {}
    last: dict = {}
    for gt, pred in frames:
        sim = {(g, p): sim_fn(gb, pb) for g, gb in gt for p, pb in pred}
        pred_ids = {p for p, _ in pred}
        kept = [(g, prev[g]) for g, _ in gt if g in prev and prev[g] in pred_ids and sim[(g, prev[g])] >= alpha]
        used_g = {g for g, _ in kept}
        used_p = {p for _, p in kept}
        rows = [g for g, _ in gt if g not in used_g]
        cols = [p for p, _ in pred if p not in used_p]
        best, best_score = [], -1.0
        for m in _partial_matchings(rows, cols, lambda g, p: sim[(g, p)] >= alpha):
            score = sum(sim[pair] for pair in m)
            if score > best_score + 1e-12:
                best, best_score = m, score
        pairs = kept + best
        current = {}
        for g, p in pairs:
            if g in last and last[g] != p:
                idsw += 1
            last[g] = p
            current[g] = p
        prev = current
        tp += len(pairs)
        fn += len(gt) - len(pairs)
        fp += len(pred) - len(pairs)
    n_gt = tp + fn
    return {"TP": tp, "FP": fp, "FN": fn, "IDSW": idsw, "MOTA": 1 - (fp + fn + idsw) / n_gt if n_gt else math.nan}


def idf1_oracle(frames, sim_fn, alpha: float = 0.5) -> dict:
    """IDF1 by enumerating every one-to-one matching of whole identities."""
    g_ids = sorted({g for gt, _ in frames for g, _ in gt})
    p_ids = sorted({p for _, pred in frames for p, _ in pred})
    co = {}
    for gt, pred in frames:
        for g, gb in gt:
            for p, pb in pred:
                if sim_fn(gb, pb) >= alpha:
                    co[(g, p)] = co.get((g, p), 0) + 1
    idtp = max(sum(co.get(pair, 0) for pair in m) for m in _partial_matchings(g_ids, p_ids, lambda g, p: True))
    n_gt = sum(len(gt) for gt, _ in frames)
    n_pred = sum(len(pred) for _, pred in frames)
    idfn, idfp = n_gt - idtp, n_pred - idtp
    denom = 2 * idtp + idfp + idfn
    return {"IDTP": idtp, "IDFP": idfp, "IDFN": idfn, "IDF1": 2 * idtp / denom if denom else math.nan}


def random_scenario(rng: np.random.Generator, n_frames: int = 5, max_objects: int = 4):
    """Small single-class scenario: gt tracks plus noisy, sometimes swapped or missing predictions."""
    n_gt = int(rng.integers(1, max_objects + 1))
    start = rng.uniform(0, 60, size=(n_gt, 2))
    vel = rng.uniform(-4, 4, size=(n_gt, 2))
    sizes = rng.uniform(8, 16, size=(n_gt, 2))
    angles = rng.uniform(-math.pi / 4, 3 * math.pi / 4, size=n_gt)
    n_pred_ids = int(rng.integers(1, max_objects + 1))
    frames = []
    for t in range(n_frames):
        gt, pred = [], []
        for i in range(n_gt):
            if rng.random() < 0.15:
                continue
            cx, cy = start[i] + t * vel[i]
            w, h = max(sizes[i]), min(sizes[i])
            gt.append((i + 1, OrientedBox(float(cx), float(cy), float(w), float(h), float(angles[i]))))
        for g, b in gt:
            if rng.random() < 0.2:
                continue
            pid = int(rng.integers(1, n_pred_ids + 1))
            if any(p == pid for p, _ in pred):
                continue
            jitter = rng.normal(0, 2.5, size=2)
            pred.append((pid, canonicalize_box(b.cx + jitter[0], b.cy + jitter[1], b.w * rng.uniform(0.8, 1.2),
                                               b.h * rng.uniform(0.8, 1.0), b.angle)))
        if rng.random() < 0.3:
            pid = n_pred_ids + 1 + t
            x, y = rng.uniform(0, 70, size=2)
            pred.append((pid, OrientedBox(float(x), float(y), 10.0, 6.0, 0.0)))
        frames.append((gt, pred))
    return frames
