"""Motion-only tracking-by-detection over oriented boxes.

One :class:`Tracker` drives SORT, ByteTrack, OC-SORT or BoT-SORT; the
variants differ only in how detections are split, which cost is used for
association, and whether predictions are warped by the camera motion.
Association never crosses class labels.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kalman
from .association import CostMatrix, solve_lap
from .cmc import SimilarityTransform
from .geometry import OrientedBox, angle_residual, canonicalize_angle, canonicalize_box, riou_matrix
from .kalman import FilterParams, MotionState, SizeParam

__all__ = [
    "Algorithm",
    "TrackStatus",
    "ConfigError",
    "TrackerConfig",
    "Detection",
    "Track",
    "TrackOutput",
    "Tracker",
    "run_sequence",
    "warp_state",
]


class ConfigError(ValueError):
    pass


class Algorithm(str, enum.Enum):
    SORT = "sort"
    BYTETRACK = "bytetrack"
    OCSORT = "ocsort"
    BOTSORT = "botsort"

    @property
    def size_param(self) -> SizeParam:
        if self in (Algorithm.SORT, Algorithm.OCSORT):
            return SizeParam.AREA_ASPECT
        return SizeParam.WIDTH_HEIGHT


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    LOST = "lost"
    REMOVED = "removed"


@dataclass(frozen=True)
class TrackerConfig:
    algorithm: Algorithm = Algorithm.SORT
    det_threshold: float = 0.1
    high_threshold: float = 0.6
    riou_gate: float = 0.3
    max_age: int = 30
    min_hits: int = 3
    ocm_weight: float = 0.2
    cmc_enabled: bool = True
    # frames back used for the OC-SORT direction estimate
    ocm_delta_t: int = 3

    def __post_init__(self):
        try:
            object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        except ValueError as exc:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}") from exc
        if not (0.0 <= self.det_threshold <= self.high_threshold <= 1.0):
            raise ConfigError(
                f"need 0 <= det_threshold <= high_threshold <= 1, got {self.det_threshold}, {self.high_threshold}"
            )
        if not (0.0 <= self.riou_gate <= 1.0):
            raise ConfigError("riou_gate must lie in [0, 1]")
        if self.max_age < 0 or self.min_hits < 1 or self.ocm_delta_t < 1:
            raise ConfigError("max_age must be >= 0, min_hits and ocm_delta_t >= 1")
        if self.ocm_weight < 0:
            raise ConfigError("ocm_weight must be non-negative")

    @property
    def uses_cmc(self) -> bool:
        return self.algorithm is Algorithm.BOTSORT and self.cmc_enabled


@dataclass(frozen=True)
class Detection:
    box: OrientedBox
    confidence: float = 1.0
    class_id: int = 1


@dataclass
class Track:
    track_id: int
    state: MotionState
    class_id: int
    hits: int = 1
    age: int = 0
    time_since_update: int = 0
    status: TrackStatus = TrackStatus.TENTATIVE
    last_observation: Optional[Detection] = None
    last_update_frame: int = 0
    velocity_direction: Optional[np.ndarray] = None
    # posterior at the last real observation, replayed by OC-SORT re-updates
    anchor_state: Optional[MotionState] = None
    observations: dict = field(default_factory=dict)

    @property
    def box(self) -> OrientedBox:
        return kalman.state_to_box(self.state)


@dataclass(frozen=True)
class TrackOutput:
    frame: int
    track_id: int
    box: OrientedBox
    confidence: float
    class_id: int


def warp_state(state: MotionState, transform: SimilarityTransform) -> MotionState:
    """Carry a state into the next frame's coordinates (positions, velocities, sizes, angle)."""
    s = transform.scale
    M = np.eye(10)
    M[0:2, 0:2] = transform.linear
    M[5:7, 5:7] = transform.linear
    if state.size_param is SizeParam.AREA_ASPECT:
        M[2, 2] = M[7, 7] = s * s
    else:
        M[2, 2] = M[3, 3] = M[7, 7] = M[8, 8] = s
    mean = M @ state.mean
    mean[0:2] += transform.translation
    mean[4] = canonicalize_angle(state.mean[4] + transform.rotation)
    cov = M @ state.covariance @ M.T
    return MotionState(mean, 0.5 * (cov + cov.T), state.size_param)


def _interpolate(a: OrientedBox, b: OrientedBox, t: float) -> OrientedBox:
    lerp = lambda x, y: x + (y - x) * t  # noqa: E731
    angle = a.angle + angle_residual(b.angle, a.angle) * t
    return canonicalize_box(lerp(a.cx, b.cx), lerp(a.cy, b.cy), lerp(a.w, b.w), lerp(a.h, b.h), angle)


def _direction(a: OrientedBox, b: OrientedBox) -> Optional[np.ndarray]:
    d = np.array([b.cx - a.cx, b.cy - a.cy])
    n = float(np.hypot(*d))
    return d / n if n > 1e-9 else None


class Tracker:
    """Stateful multi-object tracker; feed one frame of detections per :meth:`step`."""

    def __init__(self, config: TrackerConfig = TrackerConfig(), filter_params: FilterParams | None = None):
        if not isinstance(config, TrackerConfig):
            raise ConfigError("config must be a TrackerConfig")
        self.config = config
        self.size_param = config.algorithm.size_param
        self.filter_params = filter_params or FilterParams.default(self.size_param)
        self.frame = 0
        self.tracks: list[Track] = []
        self._next_id = 1

    @property
    def active_tracks(self) -> list[Track]:
        return [t for t in self.tracks if t.status is not TrackStatus.REMOVED]

    def _cold_start(self) -> bool:
        return self.frame <= self.config.min_hits

    # -- association -------------------------------------------------

    def _costs(self, tracks: Sequence[Track], dets: Sequence[Detection]) -> CostMatrix:
        sim = riou_matrix([t.box for t in tracks], [d.box for d in dets])
        sim = sim.reshape(len(tracks), len(dets))
        forbidden = sim < self.config.riou_gate
        forbidden |= np.array([[t.class_id != d.class_id for d in dets] for t in tracks], dtype=bool).reshape(
            sim.shape
        )
        cost = 1.0 - sim
        if self.config.algorithm is Algorithm.OCSORT and self.config.ocm_weight > 0:
            cost = cost + self.config.ocm_weight * self._direction_inconsistency(tracks, dets)
        return CostMatrix(cost, forbidden)

    def _direction_inconsistency(self, tracks, dets) -> np.ndarray:
        out = np.zeros((len(tracks), len(dets)))
        for i, t in enumerate(tracks):
            if t.velocity_direction is None or t.last_observation is None:
                continue
            ref = self._reference_observation(t)
            for j, d in enumerate(dets):
                direction = _direction(ref, d.box)
                if direction is None:
                    continue
                cos = float(np.clip(np.dot(t.velocity_direction, direction), -1.0, 1.0))
                out[i, j] = math.acos(cos) / math.pi
        return out

    def _reference_observation(self, track: Track) -> OrientedBox:
        # observation delta_t frames back, falling back to the latest one
        for back in range(self.config.ocm_delta_t, 0, -1):
            obs = track.observations.get(self.frame - back)
            if obs is not None:
                return obs
        return track.last_observation.box

    def _associate(self, tracks: list[Track], dets: list[Detection]):
        if not tracks or not dets:
            return [], list(range(len(tracks))), list(range(len(dets)))
        result = solve_lap(self._costs(tracks, dets))
        return result.matches, result.unmatched_rows, result.unmatched_cols

    # -- lifecycle ----------------------------------------------------

    def _apply_update(self, track: Track, det: Detection) -> None:
        cfg = self.config
        gap = track.time_since_update
        if cfg.algorithm is Algorithm.OCSORT and gap > 1 and track.anchor_state is not None:
            # re-run the missed steps along a straight virtual path
            state = track.anchor_state
            start = track.last_observation.box
            for k in range(1, gap + 1):
                state = kalman.predict(state, self.filter_params)
                state = kalman.update(state, _interpolate(start, det.box, k / gap), self.filter_params)
            track.state = state
        else:
            track.state = kalman.update(track.state, det.box, self.filter_params)

        if cfg.algorithm is Algorithm.OCSORT:
            ref = self._reference_observation(track) if track.last_observation is not None else None
            direction = _direction(ref, det.box) if ref is not None else None
            if direction is not None:
                track.velocity_direction = direction
        track.last_observation = det
        track.last_update_frame = self.frame
        track.observations[self.frame] = det.box
        for old in [f for f in track.observations if f < self.frame - cfg.ocm_delta_t]:
            del track.observations[old]
        track.anchor_state = track.state
        track.hits += 1
        track.time_since_update = 0
        if track.status is TrackStatus.LOST:
            track.status = TrackStatus.CONFIRMED
        elif track.status is TrackStatus.TENTATIVE and (track.hits >= cfg.min_hits or self._cold_start()):
            track.status = TrackStatus.CONFIRMED

    def _mark_missed(self, track: Track) -> None:
        if track.status is TrackStatus.TENTATIVE:
            track.status = TrackStatus.REMOVED
        elif track.status is TrackStatus.CONFIRMED:
            track.status = TrackStatus.LOST
        if track.status is TrackStatus.LOST and track.time_since_update > self.config.max_age:
            track.status = TrackStatus.REMOVED

    def _spawn(self, det: Detection) -> None:
        state = kalman.init_state(det.box, self.filter_params, self.size_param)
        confirmed = self._cold_start() or self.config.min_hits <= 1
        track = Track(
            track_id=self._next_id,
            state=state,
            class_id=det.class_id,
            status=TrackStatus.CONFIRMED if confirmed else TrackStatus.TENTATIVE,
            last_observation=det,
            last_update_frame=self.frame,
            anchor_state=state,
            observations={self.frame: det.box},
        )
        self._next_id += 1
        self.tracks.append(track)

    # -- main loop ----------------------------------------------------

    def step(self, detections: Sequence[Detection], transform: SimilarityTransform | None = None) -> list[TrackOutput]:
        """Advance one frame. ``transform`` maps the previous frame into this one."""
        cfg = self.config
        self.frame += 1
        dets = [d for d in detections if d.confidence >= cfg.det_threshold]

        self.tracks = self.active_tracks
        for t in self.tracks:
            t.state = kalman.predict(t.state, self.filter_params)
            t.age += 1
            t.time_since_update += 1
            if cfg.uses_cmc and transform is not None:
                t.state = warp_state(t.state, transform)
                if t.last_observation is not None:
                    t.last_observation = Detection(
                        transform.apply_box(t.last_observation.box), t.last_observation.confidence,
                        t.last_observation.class_id,
                    )

        tracks = list(self.tracks)
        matched: set[int] = set()
        if cfg.algorithm in (Algorithm.SORT, Algorithm.OCSORT):
            matches, _, unmatched_dets = self._associate(tracks, dets)
            for r, c in matches:
                self._apply_update(tracks[r], dets[c])
                matched.add(r)
            spawn = [dets[c] for c in unmatched_dets]
        else:
            high = [d for d in dets if d.confidence >= cfg.high_threshold]
            low = [d for d in dets if d.confidence < cfg.high_threshold]
            matches, rest, unmatched_high = self._associate(tracks, high)
            for r, c in matches:
                self._apply_update(tracks[r], high[c])
                matched.add(r)
            # low-confidence boxes may only extend tracks that were live last frame
            second = [r for r in rest if tracks[r].status is TrackStatus.CONFIRMED]
            matches2, _, _ = self._associate([tracks[r] for r in second], low)
            for r, c in matches2:
                self._apply_update(tracks[second[r]], low[c])
                matched.add(second[r])
            spawn = [high[c] for c in unmatched_high]

        for i, t in enumerate(tracks):
            if i not in matched:
                self._mark_missed(t)
        for det in spawn:
            self._spawn(det)
        self.tracks = self.active_tracks

        return [
            TrackOutput(self.frame, t.track_id, t.box, t.last_observation.confidence, t.class_id)
            for t in self.tracks
            if t.status is TrackStatus.CONFIRMED and t.time_since_update == 0
        ]


def run_sequence(config: TrackerConfig, frames: Sequence[Sequence[Detection]],
                 transforms: Sequence[SimilarityTransform] | None = None,
                 filter_params: FilterParams | None = None) -> list[TrackOutput]:
    """Track a whole sequence; ``transforms[t]`` maps frame ``t-1`` into frame ``t``."""
    if config.uses_cmc:
        if transforms is None:
            raise ConfigError("BoT-SORT with camera motion compensation needs per-frame transforms")
        if len(transforms) != len(frames):
            raise ConfigError(f"got {len(transforms)} transforms for {len(frames)} frames")
    tracker = Tracker(config, filter_params)
    out: list[TrackOutput] = []
    for k, dets in enumerate(frames):
        out.extend(tracker.step(dets, transforms[k] if transforms is not None and k > 0 else None))
    return out
