"""Synthetic tracking scenarios with exact ground truth.

Randomness comes from numpy's Philox counter-based generator
(``philox4x64-10``) seeded through :class:`numpy.random.SeedSequence`.
Independent streams (placement, motion, platform, texture) are spawned
from the scenario seed, so changing one part of a scenario does not
reshuffle the others.

Object motion is expressed in the current frame's coordinates: each frame
the platform transform carries every object, then the object adds its own
ground-relative step. Dataset statistics with the exact transforms
therefore recover the platform and object speeds directly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import ndimage

from .cmc import SimilarityTransform
from .dataio import SpectralCube, postprocess
from .frames import CLASS_NAMES, FrameSet, Instance
from .geometry import OrientedBox, canonicalize_box, corners
from .trackers import ConfigError, Detection

__all__ = [
    "RNG_ALGORITHM",
    "ScenarioConfig",
    "PerturbConfig",
    "SynthResult",
    "make_rng",
    "generate",
    "perturb",
    "load_signatures",
    "texture",
    "textured_pair",
    "render_cube",
]

RNG_ALGORITHM = "philox4x64-10"


def make_rng(seed) -> np.random.Generator:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def _check_range(name: str, r) -> None:
    lo, hi = r
    if lo < 0 or hi < 0:
        raise ConfigError(f"{name} must be non-negative, got {r}")
    if lo > hi:
        raise ConfigError(f"{name} must be (low, high) with low <= high, got {r}")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    n_objects: int = 10
    frames: int = 50
    image_size: tuple = (1024.0, 768.0)
    object_speed_range: tuple = (1.0, 3.0)
    # magnitude of the per-frame heading change; the sign is random
    turn_rate_range: tuple = (0.0, 0.02)
    # long side of the box
    box_size_range: tuple = (16.0, 48.0)
    aspect_range: tuple = (1.5, 3.0)
    platform_translation: tuple = (0.0, 0.0)
    platform_rotation: float = 0.0
    platform_jitter: float = 0.0
    class_distribution: tuple = (0.125,) * 8
    min_separation: float = 60.0
    render_cubes: bool = False

    def __post_init__(self):
        if self.n_objects < 0 or self.frames < 1:
            raise ConfigError("n_objects must be >= 0 and frames >= 1")
        if len(self.image_size) != 2 or min(self.image_size) <= 0:
            raise ConfigError("image_size must be two positive numbers")
        for name in ("object_speed_range", "turn_rate_range", "box_size_range", "aspect_range"):
            _check_range(name, getattr(self, name))
        if self.box_size_range[0] <= 0:
            raise ConfigError("box_size_range must be positive")
        if self.aspect_range[0] < 1:
            raise ConfigError("aspect_range values must be >= 1 (long side over short side)")
        if self.platform_jitter < 0 or self.min_separation < 0:
            raise ConfigError("platform_jitter and min_separation must be non-negative")
        w = np.asarray(self.class_distribution, dtype=float)
        if w.shape != (8,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-6:
            raise ConfigError("class_distribution needs 8 non-negative weights summing to 1")


@dataclass(frozen=True)
class PerturbConfig:
    miss_rate: float = 0.0
    fp_rate: float = 0.0
    center_noise_std: float = 0.0
    size_noise_std: float = 0.0
    angle_noise_std: float = 0.0
    # (mean, std) of the confidence of detections of real objects
    matched_confidence: tuple = (0.9, 0.05)
    fp_confidence: tuple = (0.3, 0.1)
    fp_box_size_range: tuple = (8.0, 48.0)
    image_size: tuple = (1024.0, 768.0)

    def __post_init__(self):
        if not 0.0 <= self.miss_rate <= 1.0:
            raise ConfigError("miss_rate must lie in [0, 1]")
        for name in ("fp_rate", "center_noise_std", "size_noise_std", "angle_noise_std"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("matched_confidence", "fp_confidence"):
            mean, std = getattr(self, name)
            if std < 0:
                raise ConfigError(f"{name} std must be non-negative")
        _check_range("fp_box_size_range", self.fp_box_size_range)
        if self.fp_box_size_range[0] <= 0 or min(self.image_size) <= 0:
            raise ConfigError("fp_box_size_range and image_size must be positive")


@dataclass
class SynthResult:
    config: ScenarioConfig
    gt: FrameSet
    # transforms[t - 1] maps frame t - 1 into frame t; the first is the identity
    transforms: list
    cubes: list | None = None


def load_signatures() -> dict[str, np.ndarray]:
    text = resources.files("obbtrack").joinpath("data/spectral_signatures.csv").read_text()
    rows = csv.reader(line for line in io.StringIO(text) if not line.startswith("#"))
    next(rows)
    return {row[0]: np.array([float(v) for v in row[1:]]) for row in rows if row}


def _texture_base(rng: np.random.Generator, size: int = 512) -> np.ndarray:
    # fractal value noise: blurred white noise at several scales
    base = np.zeros((size, size))
    # the fine octaves give ground corners comparable in strength to object edges
    for sigma, amp in ((8.0, 1.0), (4.0, 0.7), (2.0, 0.5), (1.0, 0.35)):
        layer = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
        base += amp * layer / layer.std()
    base -= base.min()
    return base / base.max()


def texture(base: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample the periodic texture at world coordinates (cubic spline)."""
    out = ndimage.map_coordinates(base, [np.ravel(y), np.ravel(x)], order=3, mode="grid-wrap")
    return out.reshape(np.shape(x))


def textured_pair(shape, transform: SimilarityTransform, seed: int = 0):
    """Two grayscale frames of the same textured ground; the second is the
    first seen after ``transform`` (frame-1 coordinates into frame-2)."""
    h, w = shape
    base = _texture_base(make_rng(seed))
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    first = 255.0 * texture(base, xs, ys)
    inv = transform.inverse()
    pts = inv.apply(np.stack([xs.ravel(), ys.ravel()], axis=1))
    second = 255.0 * texture(base, pts[:, 0].reshape(h, w), pts[:, 1].reshape(h, w))
    return first, second


def _inside_mask(box: OrientedBox, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    c, s = math.cos(box.angle), math.sin(box.angle)
    dx, dy = xs - box.cx, ys - box.cy
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (np.abs(u) <= box.w / 2) & (np.abs(v) <= box.h / 2)


def render_cube(instances, to_world: SimilarityTransform, base: np.ndarray, signatures: dict,
                image_size) -> SpectralCube:
    """Render one 8-band frame: textured background plus flat object signatures.

    ``to_world`` maps pixel coordinates of this frame to ground coordinates.
    """
    w, h = int(round(image_size[0])), int(round(image_size[1]))
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    world = to_world.apply(np.stack([xs.ravel(), ys.ravel()], axis=1))
    tex = texture(base, world[:, 0], world[:, 1]).reshape(h, w)
    bg = signatures["background"]
    cube = bg[:, None, None] * (0.3 + 1.4 * tex)[None]
    for inst in instances:
        pts = corners(inst.box)
        x0, y0 = np.floor(pts.min(0)).astype(int)
        x1, y1 = np.ceil(pts.max(0)).astype(int) + 1
        x0, y0, x1, y1 = max(x0, 0), max(y0, 0), min(x1, w), min(y1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        mask = _inside_mask(inst.box, xs[y0:y1, x0:x1], ys[y0:y1, x0:x1])
        sig = signatures[CLASS_NAMES[inst.class_id]]
        region = cube[:, y0:y1, x0:x1]
        region[:, mask] = sig[:, None]
    return SpectralCube(cube.astype(np.float32))


def _place(rng, n: int, cfg: ScenarioConfig, margin: float) -> np.ndarray:
    w, h = cfg.image_size
    pts: list[np.ndarray] = []
    attempts = 0
    while len(pts) < n:
        attempts += 1
        if attempts > 1000 * max(n, 1):
            raise ConfigError(f"cannot place {n} objects {cfg.min_separation} px apart in {w}x{h}")
        p = rng.uniform([margin, margin], [max(margin, w - margin), max(margin, h - margin)])
        if all(np.hypot(*(p - q)) >= cfg.min_separation for q in pts):
            pts.append(p)
    return np.array(pts).reshape(n, 2)


def generate(config: ScenarioConfig) -> SynthResult:
    cfg = config
    place_ss, motion_ss, platform_ss, texture_ss = np.random.SeedSequence(cfg.seed).spawn(4)
    place_rng, motion_rng, platform_rng = make_rng(place_ss), make_rng(motion_ss), make_rng(platform_ss)
    n = cfg.n_objects
    w, h = cfg.image_size
    center = np.array([w / 2, h / 2])

    pos = _place(place_rng, n, cfg, margin=cfg.box_size_range[1])
    speed = motion_rng.uniform(*cfg.object_speed_range, size=n)
    heading = motion_rng.uniform(0.0, 2 * math.pi, size=n)
    turn = motion_rng.uniform(*cfg.turn_rate_range, size=n) * motion_rng.choice([-1.0, 1.0], size=n)
    length = motion_rng.uniform(*cfg.box_size_range, size=n)
    aspect = motion_rng.uniform(*cfg.aspect_range, size=n)
    classes = motion_rng.choice(8, size=n, p=np.asarray(cfg.class_distribution) / np.sum(cfg.class_distribution)) + 1
    half = length / 2

    transforms = [SimilarityTransform()]
    to_world = [SimilarityTransform()]  # frame pixel -> ground (frame 1) coordinates
    frames: list[list[Instance]] = []

    def emit():
        frames.append([
            Instance(i + 1, int(classes[i]),
                     canonicalize_box(float(pos[i, 0]), float(pos[i, 1]), float(length[i]),
                                      float(length[i] / aspect[i]), float(heading[i])))
            for i in range(n)
        ])

    emit()
    for _ in range(1, cfg.frames):
        shift = np.asarray(cfg.platform_translation, dtype=float)
        if cfg.platform_jitter > 0:
            shift = shift + platform_rng.normal(0.0, cfg.platform_jitter, size=2)
        step_t = SimilarityTransform.about(center, 1.0, cfg.platform_rotation, shift)
        transforms.append(step_t)
        to_world.append(step_t.inverse().then(to_world[-1]))

        carried = step_t.apply(pos) if n else pos
        heading = heading + cfg.platform_rotation + turn
        vel = speed[:, None] * np.stack([np.cos(heading), np.sin(heading)], axis=1)
        nxt = carried + vel
        # bounce off the image border
        bx = ((nxt[:, 0] < half) & (vel[:, 0] < 0)) | ((nxt[:, 0] > w - half) & (vel[:, 0] > 0))
        by = ((nxt[:, 1] < half) & (vel[:, 1] < 0)) | ((nxt[:, 1] > h - half) & (vel[:, 1] > 0))
        heading = np.where(bx, math.pi - heading, heading)
        heading = np.where(by, -heading, heading)
        # turn around pairs that are closing in on each other
        for i in range(n):
            for j in range(i + 1, n):
                d_new = np.hypot(*(nxt[i] - nxt[j]))
                if d_new < cfg.min_separation and d_new < np.hypot(*(carried[i] - carried[j])):
                    heading[i] += math.pi
                    heading[j] += math.pi
        heading = np.mod(heading, 2 * math.pi)
        vel = speed[:, None] * np.stack([np.cos(heading), np.sin(heading)], axis=1)
        pos = carried + vel
        emit()

    gt, _ = postprocess(FrameSet(frames), w, h)
    cubes = None
    if cfg.render_cubes:
        base = _texture_base(make_rng(texture_ss))
        sigs = load_signatures()
        cubes = [render_cube(insts, to_world[k], base, sigs, cfg.image_size) for k, (_, insts) in enumerate(gt)]
    return SynthResult(cfg, gt, transforms, cubes)


def perturb(gt: FrameSet, config: PerturbConfig, seed: int = 0) -> list[list[Detection]]:
    """Turn ground truth into per-frame detections with misses, jitter and false positives."""
    cfg = config
    rng = make_rng(seed)
    w, h = cfg.image_size
    out = []
    for _, insts in gt:
        dets = []
        for inst in insts:
            if rng.random() < cfg.miss_rate:
                continue
            b = inst.box
            dx, dy = rng.normal(0.0, cfg.center_noise_std, size=2) if cfg.center_noise_std > 0 else (0.0, 0.0)
            sw, sh = rng.normal(0.0, cfg.size_noise_std, size=2) if cfg.size_noise_std > 0 else (0.0, 0.0)
            da = rng.normal(0.0, cfg.angle_noise_std) if cfg.angle_noise_std > 0 else 0.0
            box = canonicalize_box(b.cx + dx, b.cy + dy, b.w * max(0.1, 1 + sw), b.h * max(0.1, 1 + sh), b.angle + da)
            conf = _confidence(rng, cfg.matched_confidence)
            dets.append(Detection(box, conf, inst.class_id))
        for _ in range(rng.poisson(cfg.fp_rate) if cfg.fp_rate > 0 else 0):
            length = rng.uniform(*cfg.fp_box_size_range)
            box = canonicalize_box(rng.uniform(0, w), rng.uniform(0, h), length, length / rng.uniform(1.0, 3.0),
                                   rng.uniform(-math.pi / 4, 3 * math.pi / 4))
            dets.append(Detection(box, _confidence(rng, cfg.fp_confidence), int(rng.integers(1, 9))))
        out.append(dets)
    return out


def _confidence(rng, model) -> float:
    mean, std = model
    value = rng.normal(mean, std) if std > 0 else mean
    return float(np.clip(value, 0.0, 1.0))
