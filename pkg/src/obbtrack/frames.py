"""Per-frame collections of labelled oriented boxes."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

from .geometry import OrientedBox

__all__ = ["CLASS_NAMES", "SUPERCLASS", "Instance", "FrameSet"]

CLASS_NAMES = {
    1: "pedestrian",
    2: "car",
    3: "van",
    4: "truck",
    5: "bus",
    6: "tricycle",
    7: "bike",
    8: "awning-bike",
}

SUPERCLASS = {1: "HUMAN", 2: "VEHICLE", 3: "VEHICLE", 4: "VEHICLE", 5: "VEHICLE",
              6: "BICYCLE", 7: "BICYCLE", 8: "BICYCLE"}


@dataclass(frozen=True)
class Instance:
    track_id: int
    class_id: int
    box: OrientedBox
    truncated: bool = False
    confidence: float = 1.0


@dataclass
class FrameSet:
    """Instances for frames ``1..num_frames``; ``frames[k]`` holds frame ``k + 1``."""

    frames: list[list[Instance]] = field(default_factory=list)

    @classmethod
    def empty(cls, num_frames: int) -> "FrameSet":
        return cls([[] for _ in range(num_frames)])

    @classmethod
    def from_records(cls, records: Iterable[tuple[int, Instance]], num_frames: int | None = None) -> "FrameSet":
        records = list(records)
        n = max([f for f, _ in records], default=0)
        if num_frames is not None:
            n = max(n, num_frames)
        out = cls.empty(n)
        for frame, inst in records:
            if frame < 1:
                raise ValueError(f"frame numbers start at 1, got {frame}")
            out.frames[frame - 1].append(inst)
        return out

    @classmethod
    def from_outputs(cls, outputs, num_frames: int | None = None) -> "FrameSet":
        """Build from tracker outputs (anything with frame/track_id/box/confidence/class_id)."""
        return cls.from_records(
            ((o.frame, Instance(o.track_id, o.class_id, o.box, False, o.confidence)) for o in outputs), num_frames
        )

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[tuple[int, list[Instance]]]:
        for k, insts in enumerate(self.frames):
            yield k + 1, insts

    def __getitem__(self, frame: int) -> list[Instance]:
        return self.frames[frame - 1]

    def records(self) -> list[tuple[int, Instance]]:
        return [(f, inst) for f, insts in self for inst in insts]

    def num_instances(self) -> int:
        return sum(len(x) for x in self.frames)

    def class_ids(self) -> set[int]:
        return {inst.class_id for insts in self.frames for inst in insts}

    def track_ids(self) -> set[int]:
        return {inst.track_id for insts in self.frames for inst in insts}

    def only_class(self, class_id: int) -> "FrameSet":
        return FrameSet([[i for i in insts if i.class_id == class_id] for insts in self.frames])

    def padded(self, num_frames: int) -> "FrameSet":
        extra = max(0, num_frames - self.num_frames)
        return FrameSet([list(x) for x in self.frames] + [[] for _ in range(extra)])

    def map_boxes(self, fn) -> "FrameSet":
        return FrameSet([[replace(i, box=fn(i.box)) for i in insts] for insts in self.frames])
