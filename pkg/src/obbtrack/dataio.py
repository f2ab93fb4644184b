"""File formats, annotation clean-up and dataset statistics.

OBB-MOT text format, one record per line (UTF-8, LF)::

    frame,id,cx,cy,w,h,theta,conf,class,truncated

``frame`` is 1-based, ``id`` is -1 for raw detections, ``theta`` is in
radians and ``class`` is 1..8 (see :data:`obbtrack.frames.CLASS_NAMES`).
Lines starting with ``#`` are comments.

``MSC1`` cubes: magic ``MSC1``, little-endian u32 ``C, H, W``, then
``C*H*W`` little-endian float32 values, band-major.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, TextIO

import numpy as np

from .cmc import SimilarityTransform, decompose_displacement
from .frames import CLASS_NAMES, FrameSet, Instance
from .geometry import OrientedBox, canonicalize_box, corners, iof

__all__ = [
    "ParseError",
    "FormatError",
    "SpectralCube",
    "Finding",
    "StatsReport",
    "parse_obbmot",
    "write_obbmot",
    "postprocess",
    "validate",
    "read_cube",
    "write_cube",
    "rgb_proxy",
    "cube_to_gray",
    "read_pgm",
    "write_pgm",
    "read_transforms",
    "write_transforms",
    "dataset_stats",
    "frames_to_detections",
    "detections_to_frameset",
]


class ParseError(ValueError):
    pass


class FormatError(ValueError):
    pass


def _read_text(source) -> str:
    if isinstance(source, str):
        return source
    return source.read()


def parse_obbmot(source, allow_duplicates: bool = False) -> FrameSet:
    """Parse OBB-MOT text (a string or text stream) into a :class:`FrameSet`.

    Boxes are canonicalized. A repeated ``(frame, id)`` with ``id != -1``
    is an error unless ``allow_duplicates`` is set (annotation QA input).
    """
    records = []
    seen = set()
    for lineno, raw in enumerate(_read_text(source).splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 10:
            raise ParseError(f"line {lineno}: expected 10 fields, got {len(parts)}")
        try:
            frame, tid = int(parts[0]), int(parts[1])
            cx, cy, w, h, theta, conf = (float(p) for p in parts[2:8])
            cls, trunc = int(parts[8]), int(parts[9])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if frame < 1:
            raise ParseError(f"line {lineno}: frame must be >= 1")
        if cls not in CLASS_NAMES:
            raise ParseError(f"line {lineno}: class {cls} outside 1..8")
        if trunc not in (0, 1):
            raise ParseError(f"line {lineno}: truncated flag must be 0 or 1")
        if not all(math.isfinite(v) for v in (cx, cy, w, h, theta, conf)):
            raise ParseError(f"line {lineno}: non-finite value")
        try:
            box = canonicalize_box(cx, cy, w, h, theta)
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if tid != -1 and not allow_duplicates:
            if (frame, tid) in seen:
                raise ParseError(f"line {lineno}: duplicate id {tid} in frame {frame}")
            seen.add((frame, tid))
        records.append((frame, Instance(tid, cls, box, bool(trunc), conf)))
    return FrameSet.from_records(records)


def _iter_records(data) -> list[tuple[int, Instance]]:
    if isinstance(data, FrameSet):
        return data.records()
    out = []
    for item in data:
        if isinstance(item, tuple):
            out.append(item)
        else:  # TrackOutput-like
            out.append((item.frame, Instance(item.track_id, item.class_id, item.box, False, item.confidence)))
    return out


def _fmt(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def write_obbmot(data, stream: TextIO | None = None) -> str:
    """Serialize a frame set, tracker outputs or ``(frame, Instance)`` pairs.

    Records are ordered by frame, then id (stable for equal keys).
    """
    records = sorted(_iter_records(data), key=lambda r: (r[0], r[1].track_id))
    lines = []
    for frame, inst in records:
        b = inst.box
        lines.append(",".join([
            str(frame), str(inst.track_id), _fmt(b.cx), _fmt(b.cy), _fmt(b.w), _fmt(b.h), _fmt(b.angle),
            _fmt(inst.confidence), str(inst.class_id), str(int(bool(inst.truncated))),
        ]))
    text = "".join(line + "\n" for line in lines)
    if stream is not None:
        stream.write(text)
    return text


def frames_to_detections(fs: FrameSet) -> list:
    from .trackers import Detection

    return [[Detection(i.box, i.confidence, i.class_id) for i in insts] for _, insts in fs]


def detections_to_frameset(frames) -> FrameSet:
    return FrameSet([[Instance(-1, d.class_id, d.box, False, d.confidence) for d in dets] for dets in frames])


def _excess(box: OrientedBox, width: float, height: float) -> float:
    pts = corners(box)
    over = np.concatenate([-pts[:, 0], pts[:, 0] - width, -pts[:, 1], pts[:, 1] - height])
    return max(0.0, float(over.max()))


def postprocess(records: FrameSet, image_width: float, image_height: float,
                iof_threshold: float = 0.5, max_overflow: float = 100.0):
    """Apply the boundary rules to every instance.

    An instance is discarded when its center is outside ``[0, W) x [0, H)``,
    when less than ``iof_threshold`` of its area lies inside the image, or
    when a corner lies more than ``max_overflow`` px outside the image
    (largest per-axis excess). Survivors that cross the border are flagged
    truncated. Returns ``(kept, discarded)`` where ``discarded`` lists
    ``(frame, instance, reason)``.
    """
    kept_frames = []
    discarded = []
    region = (0.0, 0.0, float(image_width), float(image_height))
    for frame, insts in records:
        kept = []
        for inst in insts:
            b = inst.box
            if not (0 <= b.cx < image_width and 0 <= b.cy < image_height):
                discarded.append((frame, inst, "center_outside"))
                continue
            if iof(b, region) < iof_threshold:
                discarded.append((frame, inst, "low_iof"))
                continue
            excess = _excess(b, image_width, image_height)
            if excess > max_overflow:
                discarded.append((frame, inst, "overflow"))
                continue
            kept.append(Instance(inst.track_id, inst.class_id, b, excess > 0, inst.confidence))
        kept_frames.append(kept)
    return FrameSet(kept_frames), discarded


@dataclass(frozen=True)
class Finding:
    severity: str  # ERROR or WARNING
    kind: str
    frame: int
    track_id: int


def validate(fs: FrameSet) -> list[Finding]:
    """Annotation consistency checks between adjacent frames.

    Errors: an id used twice within a frame, an id changing class between
    adjacent frames. Warnings: an id present in the previous frame but not
    this one, an id appearing for the first time after frame 1.
    """
    findings = []
    prev: dict[int, int] = {}
    seen_ever: set[int] = set()
    for frame, insts in fs:
        counts = Counter(i.track_id for i in insts if i.track_id != -1)
        for tid in sorted(t for t, n in counts.items() if n > 1):
            findings.append(Finding("ERROR", "DUPLICATE_ID", frame, tid))
        current: dict[int, int] = {}
        for inst in insts:
            if inst.track_id != -1:
                current.setdefault(inst.track_id, inst.class_id)
        for tid in sorted(current):
            if tid in prev and prev[tid] != current[tid]:
                findings.append(Finding("ERROR", "CLASS_MISMATCH", frame, tid))
        if frame > 1:
            for tid in sorted(set(prev) - set(current)):
                findings.append(Finding("WARNING", "DISAPPEARED", frame, tid))
            for tid in sorted(set(current) - seen_ever):
                findings.append(Finding("WARNING", "NEW_ID", frame, tid))
        seen_ever |= set(current)
        prev = current
    return findings


@dataclass
class SpectralCube:
    values: np.ndarray  # bands x H x W

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3 or v.shape[0] < 1:
            raise ValueError("cube values must be bands x H x W with at least one band")
        if not np.all(np.isfinite(v)):
            raise ValueError("cube values must be finite")
        self.values = v

    @property
    def bands(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


_CUBE_HEADER = struct.Struct("<4s3I")


def write_cube(stream: BinaryIO, cube: SpectralCube) -> None:
    c, h, w = cube.values.shape
    stream.write(_CUBE_HEADER.pack(b"MSC1", c, h, w))
    stream.write(np.ascontiguousarray(cube.values, dtype="<f4").tobytes())


def read_cube(stream: BinaryIO) -> SpectralCube:
    head = stream.read(_CUBE_HEADER.size)
    if len(head) < _CUBE_HEADER.size:
        raise FormatError("short read in cube header")
    magic, c, h, w = _CUBE_HEADER.unpack(head)
    if magic != b"MSC1":
        raise FormatError(f"bad magic {magic!r}")
    n = c * h * w
    body = stream.read(4 * n)
    if len(body) != 4 * n:
        raise FormatError(f"short read: expected {4 * n} payload bytes, got {len(body)}")
    if stream.read(1):
        raise FormatError("trailing bytes after cube payload")
    return SpectralCube(np.frombuffer(body, dtype="<f4").reshape(c, h, w).astype(np.float32))


# 1-based band numbers used as (R, G, B)
RGB_PROXY_BANDS = (5, 3, 2)


def rgb_proxy(cube: SpectralCube) -> SpectralCube:
    if cube.bands < max(RGB_PROXY_BANDS):
        raise ValueError(f"need at least {max(RGB_PROXY_BANDS)} bands, cube has {cube.bands}")
    return SpectralCube(cube.values[[b - 1 for b in RGB_PROXY_BANDS]].copy())


def cube_to_gray(cube: SpectralCube) -> np.ndarray:
    return np.asarray(cube.values, dtype=float).mean(axis=0)


def write_pgm(stream: BinaryIO, image) -> None:
    """8-bit binary PGM; values are clipped to 0..255."""
    img = np.clip(np.rint(np.asarray(image, dtype=float)), 0, 255).astype(np.uint8)
    h, w = img.shape
    stream.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
    stream.write(img.tobytes())


def read_pgm(stream: BinaryIO) -> np.ndarray:
    data = stream.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError("only binary (P5) PGM is supported")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise FormatError("only 8-bit PGM is supported")
    pixels = data[pos + 1:pos + 1 + w * h]
    if len(pixels) != w * h:
        raise FormatError("short PGM payload")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).astype(float)


TRANSFORMS_HEADER = ["frame", "scale", "rotation", "tx", "ty"]


def write_transforms(transforms, stream: TextIO | None = None) -> str:
    """Row ``t`` holds ``transforms[t - 1]``, mapping frame ``t - 1`` coordinates into frame ``t``.

    The first entry (frame 1) has no predecessor and is normally the identity.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRANSFORMS_HEADER)
    for k, t in enumerate(transforms, start=1):
        writer.writerow([k, f"{t.scale:.12g}", f"{t.rotation:.12g}", f"{t.tx:.12g}", f"{t.ty:.12g}"])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def read_transforms(source, num_frames: int | None = None) -> list[SimilarityTransform]:
    rows = list(csv.reader(io.StringIO(_read_text(source))))
    if not rows or [c.strip() for c in rows[0]] != TRANSFORMS_HEADER:
        raise ParseError(f"transforms file must start with header {','.join(TRANSFORMS_HEADER)}")
    by_frame = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            frame = int(row[0])
            scale, rot, tx, ty = (float(v) for v in row[1:5])
        except (ValueError, IndexError) as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        by_frame[frame] = SimilarityTransform(scale, rot, tx, ty)
    n = max(by_frame, default=0) if num_frames is None else num_frames
    return [by_frame.get(f, SimilarityTransform()) for f in range(1, n + 1)]


@dataclass
class StatsReport:
    max_objects: int
    density_300: float
    drone: float
    object: float
    total: float
    iou_object: float
    iou_total: float
    riou_histogram: np.ndarray
    class_counts: dict
    trajectory_lengths: dict
    n_trajectories: int
    bin_edges: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 11))

    def rows(self) -> list[tuple[str, object]]:
        rows = [
            ("max_objects", self.max_objects),
            ("at_300px", self.density_300),
            ("drone_displacement", self.drone),
            ("object_displacement", self.object),
            ("total_displacement", self.total),
            ("iou_object", self.iou_object),
            ("iou_total", self.iou_total),
            ("n_trajectories", self.n_trajectories),
        ]
        for c in sorted(self.class_counts):
            rows.append((f"class_count_{CLASS_NAMES.get(c, c)}", self.class_counts[c]))
        for lo, hi, n in zip(self.bin_edges[:-1], self.bin_edges[1:], self.riou_histogram):
            rows.append((f"riou_hist_{lo:.1f}_{hi:.1f}", int(n)))
        for length in sorted(self.trajectory_lengths):
            rows.append((f"trajectory_length_{length}", self.trajectory_lengths[length]))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for key, value in self.rows():
            writer.writerow([key, f"{value:.6f}" if isinstance(value, float) else value])
        return buf.getvalue()


def dataset_stats(sequences: Iterable[FrameSet], transforms=None, radius: float = 300.0) -> StatsReport:
    """Density, motion and long-tail statistics over annotated sequences.

    ``transforms[s][t - 1]`` maps frame ``t - 1`` of sequence ``s`` into
    frame ``t``, the same layout as the transforms CSV. Without transforms
    the drone/object split is reported as NaN.
    """
    sequences = list(sequences)
    max_objects = 0
    neighbour_counts = []
    disp = []
    riou_values = []
    class_counts: Counter = Counter()
    lengths: Counter = Counter()
    for s, fs in enumerate(sequences):
        seq_transforms = transforms[s] if transforms is not None else None
        per_track = Counter()
        prev: dict[int, OrientedBox] = {}
        for frame, insts in fs:
            max_objects = max(max_objects, len(insts))
            if insts:
                centers = np.array([[i.box.cx, i.box.cy] for i in insts])
                d2 = ((centers[:, None] - centers[None]) ** 2).sum(-1)
                neighbour_counts.extend(((d2 <= radius * radius).sum(1) - 1).tolist())
            current = {}
            for inst in insts:
                class_counts[inst.class_id] += 1
                per_track[inst.track_id] += 1
                current[inst.track_id] = inst.box
            platform = seq_transforms[frame - 1] if seq_transforms is not None else SimilarityTransform()
            for tid, box in current.items():
                if tid in prev:
                    st = decompose_displacement(prev[tid], box, platform)
                    disp.append((st.drone, st.object, st.total, st.iou_object, st.iou_total))
                    riou_values.append(st.iou_total)
            prev = current
        for n in per_track.values():
            lengths[n] += 1

    edges = np.linspace(0.0, 1.0, 11)
    hist, _ = np.histogram(riou_values, bins=edges)
    arr = np.array(disp) if disp else np.full((1, 5), np.nan)
    means = arr.mean(0)
    if transforms is None:
        means[[0, 1, 3]] = np.nan
    return StatsReport(
        max_objects=max_objects,
        density_300=float(np.mean(neighbour_counts)) if neighbour_counts else 0.0,
        drone=float(means[0]),
        object=float(means[1]),
        total=float(means[2]),
        iou_object=float(means[3]),
        iou_total=float(means[4]),
        riou_histogram=hist,
        class_counts=dict(class_counts),
        trajectory_lengths=dict(lengths),
        n_trajectories=sum(lengths.values()),
        bin_edges=edges,
    )
