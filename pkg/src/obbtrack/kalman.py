"""Constant-velocity Kalman filter over oriented boxes.

State layout: ``[u, v, s1, s2, theta, du, dv, ds1, ds2, dtheta]`` with one
frame per step. The size pair is either area/aspect (SORT style) or
width/height (ByteTrack style); see :class:`SizeParam`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .geometry import OrientedBox, angle_residual, canonicalize_angle, canonicalize_box

__all__ = [
    "SizeParam",
    "FilterParams",
    "MotionState",
    "init_state",
    "predict",
    "update",
    "state_to_box",
    "box_to_measurement",
    "NumericError",
    "DegenerateStateError",
    "SIZE_FLOOR",
]

NDIM = 5
SIZE_FLOOR = 1e-3
_THETA = 4


class NumericError(ArithmeticError):
    pass


class DegenerateStateError(ValueError):
    pass


class SizeParam(enum.Enum):
    AREA_ASPECT = "area_aspect"
    WIDTH_HEIGHT = "width_height"


@dataclass(frozen=True)
class FilterParams:
    """Noise model, all entries are standard deviations.

    Components flagged in ``relative`` are multiplied by the mean of the two
    size entries of the current state, the rest are absolute.
    """

    process_std: np.ndarray
    measurement_std: np.ndarray
    initial_std: np.ndarray
    relative: np.ndarray = field(default_factory=lambda: np.zeros(2 * NDIM, dtype=bool))

    def __post_init__(self):
        for name, n in (("process_std", 2 * NDIM), ("measurement_std", NDIM), ("initial_std", 2 * NDIM)):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have {n} entries")
            if not np.all(arr > 0):
                raise ValueError(f"{name} entries must be positive")
            object.__setattr__(self, name, arr)
        rel = np.asarray(self.relative, dtype=bool)
        if rel.shape != (2 * NDIM,):
            raise ValueError("relative must have 10 entries")
        object.__setattr__(self, "relative", rel)

    @classmethod
    def default(cls, size_param: SizeParam) -> "FilterParams":
        if size_param is SizeParam.WIDTH_HEIGHT:
            pos, vel = 1 / 20, 1 / 160
            return cls(
                process_std=np.array([pos, pos, pos, pos, 0.01, vel, vel, vel, vel, 0.005]),
                measurement_std=np.array([pos, pos, pos, pos, 0.1]),
                initial_std=np.array([2 * pos, 2 * pos, 2 * pos, 2 * pos, 0.1,
                                      10 * vel, 10 * vel, 10 * vel, 10 * vel, 0.1]),
                relative=np.array([True] * 4 + [False] + [True] * 4 + [False]),
            )
        return cls(
            process_std=np.array([1.0, 1.0, 10.0, 0.01, 0.01, 0.1, 0.1, 1.0, 0.001, 0.005]),
            measurement_std=np.array([1.0, 1.0, 10.0, 0.01, 0.1]),
            initial_std=np.array([1.0, 1.0, 10.0, 0.01, 0.1, 10.0, 10.0, 100.0, 0.1, 0.1]),
        )

    def _scaled(self, std: np.ndarray, mean: np.ndarray, relative: np.ndarray) -> np.ndarray:
        size = 0.5 * (mean[2] + mean[3])
        return np.where(relative, std * size, std)

    def process_cov(self, mean: np.ndarray) -> np.ndarray:
        return np.diag(self._scaled(self.process_std, mean, self.relative) ** 2)

    def measurement_cov(self, mean: np.ndarray) -> np.ndarray:
        return np.diag(self._scaled(self.measurement_std, mean, self.relative[:NDIM]) ** 2)

    def initial_cov(self, mean: np.ndarray) -> np.ndarray:
        return np.diag(self._scaled(self.initial_std, mean, self.relative) ** 2)


@dataclass(frozen=True)
class MotionState:
    mean: np.ndarray
    covariance: np.ndarray
    size_param: SizeParam

    @property
    def pose(self) -> np.ndarray:
        return self.mean[:NDIM]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[NDIM:]


_F = np.eye(2 * NDIM)
_F[:NDIM, NDIM:] = np.eye(NDIM)
_H = np.eye(NDIM, 2 * NDIM)


def box_to_measurement(box: OrientedBox, size_param: SizeParam) -> np.ndarray:
    if not (box.w > 0 and box.h > 0):
        raise ValueError("box sides must be positive")
    if size_param is SizeParam.AREA_ASPECT:
        s1, s2 = box.w * box.h, box.w / box.h
    else:
        s1, s2 = box.w, box.h
    return np.array([box.cx, box.cy, s1, s2, box.angle], dtype=float)


def init_state(box: OrientedBox, params: FilterParams, size_param: SizeParam) -> MotionState:
    mean = np.zeros(2 * NDIM)
    mean[:NDIM] = box_to_measurement(box, size_param)
    mean[_THETA] = canonicalize_angle(mean[_THETA])
    return MotionState(mean, params.initial_cov(mean), size_param)


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def predict(state: MotionState, params: FilterParams) -> MotionState:
    mean = _F @ state.mean
    mean[_THETA] = canonicalize_angle(mean[_THETA])
    mean[2] = max(mean[2], SIZE_FLOOR)
    mean[3] = max(mean[3], SIZE_FLOOR)
    cov = _F @ state.covariance @ _F.T + params.process_cov(state.mean)
    return MotionState(mean, _symmetrize(cov), state.size_param)


def update(state: MotionState, measurement: OrientedBox, params: FilterParams) -> MotionState:
    z = box_to_measurement(measurement, state.size_param)
    innovation = z - state.mean[:NDIM]
    innovation[_THETA] = angle_residual(z[_THETA], state.mean[_THETA])
    P = state.covariance
    S = _H @ P @ _H.T + params.measurement_cov(state.mean)
    try:
        cho = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NumericError("innovation covariance is not positive definite") from exc
    # K = P H^T S^-1 via two triangular solves
    PHt = P @ _H.T
    K = np.linalg.solve(cho.T, np.linalg.solve(cho, PHt.T)).T
    mean = state.mean + K @ innovation
    mean[_THETA] = canonicalize_angle(mean[_THETA])
    mean[2] = max(mean[2], SIZE_FLOOR)
    mean[3] = max(mean[3], SIZE_FLOOR)
    # Joseph form keeps the posterior PSD
    A = np.eye(2 * NDIM) - K @ _H
    cov = A @ P @ A.T + K @ params.measurement_cov(state.mean) @ K.T
    return MotionState(mean, _symmetrize(cov), state.size_param)


def state_to_box(state: MotionState) -> OrientedBox:
    u, v, s1, s2, theta = state.mean[:NDIM]
    if not (s1 > 0 and s2 > 0):
        raise DegenerateStateError(f"non-positive size parameters ({s1}, {s2})")
    if state.size_param is SizeParam.AREA_ASPECT:
        w, h = np.sqrt(s1 * s2), np.sqrt(s1 / s2)
    else:
        w, h = s1, s2
    return canonicalize_box(u, v, w, h, theta)

