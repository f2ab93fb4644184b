"""CLEAR-MOT, IDF1 and HOTA over oriented boxes, evaluated per class.

All similarities are rotated IoU. Per-class results are combined either as
a plain mean over classes with ground truth ("class averaged") or weighted
by ground-truth instance counts ("detection averaged").
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .association import max_weight_matching
from .frames import CLASS_NAMES, FrameSet
from .geometry import riou_matrix

__all__ = [
    "ALPHAS",
    "ClearResult",
    "IdentityResult",
    "HotaResult",
    "ClassMetrics",
    "MetricsReport",
    "clear_metrics",
    "idf1",
    "hota",
    "aggregate",
    "evaluate",
    "METRICS_HEADER",
]

# localisation thresholds 0.05, 0.10, ..., 0.95
ALPHAS = np.arange(1, 20) / 20.0
METRICS_HEADER = ["class", "HOTA", "MOTA", "IDF1", "DetA", "AssA", "FP", "FN", "IDSW"]
SUMMARY_KEYS = ("HOTA", "MOTA", "IDF1", "DetA", "AssA")


@dataclass
class ClearResult:
    MOTA: float
    TP: int
    FP: int
    FN: int
    IDSW: int
    num_gt: int


@dataclass
class IdentityResult:
    IDF1: float
    IDTP: int
    IDFP: int
    IDFN: int


@dataclass
class HotaResult:
    HOTA: float
    DetA: float
    AssA: float
    hota_alpha: np.ndarray
    deta_alpha: np.ndarray
    assa_alpha: np.ndarray
    tp_alpha: np.ndarray


def _classes(gt: FrameSet, pred: FrameSet, class_id):
    if class_id is not None:
        return [class_id]
    return sorted(gt.class_ids() | pred.class_ids())


def _split(gt: FrameSet, pred: FrameSet, class_id: int):
    n = max(gt.num_frames, pred.num_frames)
    return gt.only_class(class_id).padded(n), pred.only_class(class_id).padded(n)


def _similarity(g_insts, p_insts) -> np.ndarray:
    return riou_matrix([i.box for i in g_insts], [i.box for i in p_insts]).reshape(len(g_insts), len(p_insts))


def _clear_single(gt: FrameSet, pred: FrameSet, alpha: float) -> ClearResult:
    tp = fp = fn = idsw = 0
    prev_pairs: dict[int, int] = {}
    last_pred: dict[int, int] = {}
    for (_, g_insts), (_, p_insts) in zip(gt, pred):
        sim = _similarity(g_insts, p_insts)
        g_ids = [g.track_id for g in g_insts]
        p_ids = [p.track_id for p in p_insts]
        p_index = {pid: j for j, pid in enumerate(p_ids)}
        pairs = []
        used_g, used_p = set(), set()
        for i, gid in enumerate(g_ids):
            j = p_index.get(prev_pairs[gid]) if gid in prev_pairs else None
            if j is not None and sim[i, j] >= alpha:
                pairs.append((i, j))
                used_g.add(i)
                used_p.add(j)
        rows = [i for i in range(len(g_ids)) if i not in used_g]
        cols = [j for j in range(len(p_ids)) if j not in used_p]
        if rows and cols:
            sub = sim[np.ix_(rows, cols)]
            for r, c in max_weight_matching(sub, sub >= alpha):
                pairs.append((rows[r], cols[c]))
        current = {}
        for i, j in pairs:
            gid, pid = g_ids[i], p_ids[j]
            if gid in last_pred and last_pred[gid] != pid:
                idsw += 1
            last_pred[gid] = pid
            current[gid] = pid
        prev_pairs = current
        tp += len(pairs)
        fn += len(g_ids) - len(pairs)
        fp += len(p_ids) - len(pairs)
    num_gt = tp + fn
    mota = 1.0 - (fp + fn + idsw) / num_gt if num_gt else math.nan
    return ClearResult(mota, tp, fp, fn, idsw, num_gt)


def clear_metrics(gt: FrameSet, pred: FrameSet, alpha: float = 0.5, class_id: int | None = None) -> dict:
    """Per-class MOTA with FP/FN/IDSW counts.

    Each frame keeps last frame's pairs that still overlap by at least
    ``alpha`` and matches the rest to maximise summed rIoU.
    """
    return {c: _clear_single(*_split(gt, pred, c), alpha) for c in _classes(gt, pred, class_id)}


def _identity_single(gt: FrameSet, pred: FrameSet, alpha: float) -> IdentityResult:
    g_ids = sorted(gt.track_ids())
    p_ids = sorted(pred.track_ids())
    gi = {g: k for k, g in enumerate(g_ids)}
    pi = {p: k for k, p in enumerate(p_ids)}
    overlap = np.zeros((len(g_ids), len(p_ids)))
    for (_, g_insts), (_, p_insts) in zip(gt, pred):
        if not g_insts or not p_insts:
            continue
        sim = _similarity(g_insts, p_insts)
        for a, b in zip(*np.nonzero(sim >= alpha)):
            overlap[gi[g_insts[a].track_id], pi[p_insts[b].track_id]] += 1
    idtp = int(sum(overlap[r, c] for r, c in max_weight_matching(overlap)))
    n_gt, n_pred = gt.num_instances(), pred.num_instances()
    idfn, idfp = n_gt - idtp, n_pred - idtp
    denom = 2 * idtp + idfp + idfn
    return IdentityResult(2 * idtp / denom if denom else math.nan, idtp, idfp, idfn)


def idf1(gt: FrameSet, pred: FrameSet, alpha: float = 0.5, class_id: int | None = None) -> dict:
    """Per-class identity F1 from the best one-to-one matching of whole trajectories."""
    return {c: _identity_single(*_split(gt, pred, c), alpha) for c in _classes(gt, pred, class_id)}


def _hota_single(gt: FrameSet, pred: FrameSet) -> HotaResult:
    g_ids = sorted(gt.track_ids())
    p_ids = sorted(pred.track_ids())
    gi = {g: k for k, g in enumerate(g_ids)}
    pi = {p: k for k, p in enumerate(p_ids)}
    n_a = len(ALPHAS)
    n_gt, n_pred = gt.num_instances(), pred.num_instances()
    if n_gt == 0 or n_pred == 0:
        zero = np.zeros(n_a)
        one = np.ones(n_a) if n_gt == 0 and n_pred == 0 else zero
        return HotaResult(float(one.mean()), float(one.mean()), float(one.mean()), one, one, one, zero)

    sims = []
    potential = np.zeros((len(g_ids), len(p_ids)))
    g_count = np.zeros(len(g_ids))
    p_count = np.zeros(len(p_ids))
    for (_, g_insts), (_, p_insts) in zip(gt, pred):
        gidx = np.array([gi[i.track_id] for i in g_insts], dtype=int)
        pidx = np.array([pi[i.track_id] for i in p_insts], dtype=int)
        sim = _similarity(g_insts, p_insts)
        sims.append((gidx, pidx, sim))
        if len(gidx) and len(pidx):
            denom = sim.sum(0)[None, :] + sim.sum(1)[:, None] - sim
            soft = np.divide(sim, denom, out=np.zeros_like(sim), where=denom > 0)
            potential[np.ix_(gidx, pidx)] += soft
        g_count[gidx] += 1
        p_count[pidx] += 1
    global_score = potential / (g_count[:, None] + p_count[None, :] - potential)

    tp = np.zeros(n_a)
    match_counts = np.zeros((n_a, len(g_ids), len(p_ids)))
    for gidx, pidx, sim in sims:
        if not len(gidx) or not len(pidx):
            continue
        score = global_score[np.ix_(gidx, pidx)] * sim
        pairs = max_weight_matching(score)
        if not pairs:
            continue
        r = np.array([a for a, _ in pairs])
        c = np.array([b for _, b in pairs])
        matched_sim = sim[r, c]
        for k, alpha in enumerate(ALPHAS):
            ok = matched_sim >= alpha
            tp[k] += ok.sum()
            np.add.at(match_counts[k], (gidx[r[ok]], pidx[c[ok]]), 1)

    fn = n_gt - tp
    fp = n_pred - tp
    deta = tp / np.maximum(1.0, tp + fn + fp)
    assa = np.zeros(n_a)
    for k in range(n_a):
        mc = match_counts[k]
        ass = mc / np.maximum(1.0, g_count[:, None] + p_count[None, :] - mc)
        assa[k] = (mc * ass).sum() / max(1.0, tp[k])
    hota_a = np.sqrt(deta * assa)
    return HotaResult(float(hota_a.mean()), float(deta.mean()), float(assa.mean()), hota_a, deta, assa, tp)


def hota(gt: FrameSet, pred: FrameSet, class_id: int | None = None) -> dict:
    """Per-class HOTA, DetA and AssA averaged over :data:`ALPHAS`.

    Frames are matched once with scores weighted by each identity pair's
    global alignment, so matches that agree with the rest of the sequence
    win ties; the threshold is applied per alpha afterwards.
    """
    return {c: _hota_single(*_split(gt, pred, c)) for c in _classes(gt, pred, class_id)}


@dataclass
class ClassMetrics:
    class_id: int
    HOTA: float
    MOTA: float
    IDF1: float
    DetA: float
    AssA: float
    FP: int
    FN: int
    IDSW: int
    num_gt: int
    tp_alpha: np.ndarray = field(repr=False, default=None)

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in SUMMARY_KEYS}


def aggregate(per_class: dict, gt_counts: dict) -> dict:
    """``{"class_averaged": {...}, "detection_averaged": {...}}`` over classes with ground truth.

    ``per_class`` maps class id to a dict (or object) holding the summary
    metrics; ``gt_counts`` maps class id to its ground-truth instance count.
    """
    keep = [c for c in per_class if gt_counts.get(c, 0) > 0]
    if not keep:
        raise ValueError("no class has ground-truth instances")

    def value(entry, key):
        return entry[key] if isinstance(entry, dict) else getattr(entry, key)

    keys = [k for k in SUMMARY_KEYS if all(_has(per_class[c], k) for c in keep)]
    weights = np.array([gt_counts[c] for c in keep], dtype=float)
    out = {"class_averaged": {}, "detection_averaged": {}}
    for k in keys:
        vals = np.array([value(per_class[c], k) for c in keep], dtype=float)
        out["class_averaged"][k] = float(vals.mean())
        out["detection_averaged"][k] = float((vals * weights).sum() / weights.sum())
    return out


def _has(entry, key) -> bool:
    return key in entry if isinstance(entry, dict) else hasattr(entry, key)


@dataclass
class MetricsReport:
    per_class: dict[int, ClassMetrics]
    class_averaged: dict
    detection_averaged: dict
    totals: dict

    def rows(self) -> list[list]:
        rows = []
        for c in sorted(self.per_class):
            m = self.per_class[c]
            rows.append([CLASS_NAMES.get(c, str(c)), m.HOTA, m.MOTA, m.IDF1, m.DetA, m.AssA, m.FP, m.FN, m.IDSW])
        for name, agg in (("class_averaged", self.class_averaged), ("detection_averaged", self.detection_averaged)):
            rows.append([name] + [agg.get(k, math.nan) for k in SUMMARY_KEYS]
                        + [self.totals["FP"], self.totals["FN"], self.totals["IDSW"]])
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for row in self.rows():
            writer.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in row])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'class':<20}" + "".join(f"{h:>10}" for h in METRICS_HEADER[1:])]
        for row in self.rows():
            cells = [f"{v:>10.4f}" if isinstance(v, float) else f"{v:>10}" for v in row[1:]]
            lines.append(f"{row[0]:<20}" + "".join(cells))
        return "\n".join(lines) + "\n"


def _drop_truncated(gt: FrameSet, pred: FrameSet) -> tuple[FrameSet, FrameSet]:
    # predictions covering a truncated object are ignored rather than counted as FP
    new_gt, new_pred = [], []
    for (_, g_insts), (_, p_insts) in zip(gt, pred):
        trunc = [g for g in g_insts if g.truncated]
        drop = set()
        if trunc and p_insts:
            sim = _similarity(trunc, p_insts)
            same = np.array([[g.class_id == p.class_id for p in p_insts] for g in trunc])
            drop = {c for _, c in max_weight_matching(sim, (sim >= 0.5) & same)}
        new_gt.append([g for g in g_insts if not g.truncated])
        new_pred.append([p for j, p in enumerate(p_insts) if j not in drop])
    return FrameSet(new_gt), FrameSet(new_pred)


def evaluate(gt: FrameSet, pred: FrameSet, alpha: float = 0.5, exclude_truncated: bool = False) -> MetricsReport:
    n = max(gt.num_frames, pred.num_frames)
    gt, pred = gt.padded(n), pred.padded(n)
    if exclude_truncated:
        gt, pred = _drop_truncated(gt, pred)
    clear = clear_metrics(gt, pred, alpha)
    ident = idf1(gt, pred, alpha)
    hot = hota(gt, pred)
    per_class = {}
    for c in clear:
        per_class[c] = ClassMetrics(
            c, hot[c].HOTA, clear[c].MOTA, ident[c].IDF1, hot[c].DetA, hot[c].AssA,
            clear[c].FP, clear[c].FN, clear[c].IDSW, clear[c].num_gt, hot[c].tp_alpha,
        )
    counts = {c: m.num_gt for c, m in per_class.items()}
    if any(counts.values()):
        agg = aggregate({c: m.summary() for c, m in per_class.items()}, counts)
    else:
        agg = {"class_averaged": {}, "detection_averaged": {}}
    totals = {k: sum(getattr(m, k) for m in per_class.values()) for k in ("FP", "FN", "IDSW")}
    return MetricsReport(per_class, agg["class_averaged"], agg["detection_averaged"], totals)
