"""Numeric reference of a spectral 3D convolution stem.

Three stages turn a ``bands x H x W`` cube into ``D x H/4 x W/4`` features:

1. 3-D cross-correlation with one input channel, kernel
   ``spectral_kernel x k x k``, stride ``(1, 2, 2)`` and "same" padding,
   giving ``D x bands x H/2 x W/2``;
2. a depthwise fold over the full spectral axis (one length-``bands``
   kernel per output channel), giving ``D x H/2 x W/2``;
3. 3x3 max-pooling with stride 2 and padding 1.

No stage has a bias. Everything runs in float64 numpy.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "StemConfig",
    "StemWeights",
    "param_count",
    "conv2d_stem_params",
    "random_weights",
    "forward",
    "backward",
    "grad_check",
    "import_rgb_weights",
    "rgb_stem_forward",
    "maxpool",
    "write_weights",
    "read_weights",
    "ShapeError",
]


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class StemConfig:
    bands: int = 8
    spectral_kernel: int = 3
    spatial_kernel: int = 7
    out_channels: int = 64
    spatial_stride: int = 2
    spectral_stride: int = 1

    def __post_init__(self):
        if self.spectral_kernel % 2 == 0 or self.spatial_kernel % 2 == 0:
            raise ValueError("kernels must have odd size")
        if min(self.bands, self.spectral_kernel, self.spatial_kernel, self.out_channels) < 1:
            raise ValueError("all sizes must be positive")
        if self.spatial_stride != 2 or self.spectral_stride != 1:
            raise ValueError("only stride (1, 2, 2) is supported")

    @property
    def spatial_padding(self) -> int:
        return (self.spatial_kernel - 1) // 2

    @property
    def spectral_padding(self) -> int:
        return (self.spectral_kernel - 1) // 2

    @property
    def conv3d_shape(self) -> tuple[int, int, int, int, int]:
        k = self.spatial_kernel
        return (self.out_channels, 1, self.spectral_kernel, k, k)


@dataclass
class StemWeights:
    conv3d: np.ndarray  # D x 1 x ks x k x k
    fold: np.ndarray  # D x bands

    def copy(self) -> "StemWeights":
        return StemWeights(self.conv3d.copy(), self.fold.copy())

    def check(self, config: StemConfig) -> None:
        if self.conv3d.shape != config.conv3d_shape:
            raise ShapeError(f"conv3d has shape {self.conv3d.shape}, expected {config.conv3d_shape}")
        if self.fold.shape != (config.out_channels, config.bands):
            raise ShapeError(f"fold has shape {self.fold.shape}, expected {(config.out_channels, config.bands)}")


def param_count(config: StemConfig = StemConfig()) -> dict:
    conv = config.out_channels * 1 * config.spectral_kernel * config.spatial_kernel ** 2
    fold = config.bands * config.out_channels
    return {"conv3d": conv, "fold": fold, "total": conv + fold}


def conv2d_stem_params(in_channels: int, out_channels: int = 64, kernel: int = 7) -> int:
    """Weights of a bias-free 2-D first convolution."""
    return in_channels * out_channels * kernel * kernel


def random_weights(config: StemConfig, rng: np.random.Generator) -> StemWeights:
    fan_in = config.spectral_kernel * config.spatial_kernel ** 2
    conv = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=config.conv3d_shape)
    fold = rng.normal(0.0, 1.0 / np.sqrt(config.bands), size=(config.out_channels, config.bands))
    return StemWeights(conv, fold)


def _cube_array(cube, config: StemConfig) -> np.ndarray:
    x = np.asarray(getattr(cube, "values", cube), dtype=float)
    if x.ndim == 4:
        if x.shape[0] != 1:
            raise ShapeError("the stem takes a single input channel")
        x = x[0]
    if x.ndim != 3:
        raise ShapeError(f"expected bands x H x W, got shape {x.shape}")
    if x.shape[0] != config.bands:
        raise ShapeError(f"cube has {x.shape[0]} bands, config expects {config.bands}")
    if x.shape[1] % 4 or x.shape[2] % 4:
        raise ShapeError("H and W must be divisible by 4")
    return x


def _windows(x: np.ndarray, config: StemConfig) -> np.ndarray:
    """Strided patches, shape ``(bands, Ho, Wo, ks, k, k)``."""
    ps, p = config.spectral_padding, config.spatial_padding
    xp = np.pad(x, ((ps, ps), (p, p), (p, p)))
    k = config.spatial_kernel
    win = sliding_window_view(xp, (config.spectral_kernel, k, k))
    return win[:, ::2, ::2]


def maxpool(x: np.ndarray, return_index: bool = False):
    """3x3 max-pool, stride 2, padding 1 over the last two axes."""
    xp = np.pad(x, [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)], constant_values=-np.inf)
    win = sliding_window_view(xp, (3, 3), axis=(-2, -1))[..., ::2, ::2, :, :]
    flat = win.reshape(win.shape[:-2] + (9,))
    idx = flat.argmax(-1)
    out = np.take_along_axis(flat, idx[..., None], -1)[..., 0]
    return (out, idx) if return_index else out


def _stage1(win: np.ndarray, conv3d: np.ndarray) -> np.ndarray:
    d = conv3d.shape[0]
    kernels = conv3d.reshape(d, -1)
    b, ho, wo = win.shape[:3]
    y = win.reshape(b * ho * wo, -1) @ kernels.T
    return y.reshape(b, ho, wo, d).transpose(3, 0, 1, 2)


def forward(cube, weights: StemWeights, config: StemConfig = StemConfig(), return_intermediates: bool = False):
    x = _cube_array(cube, config)
    weights.check(config)
    win = _windows(x, config)
    stage1 = _stage1(win, weights.conv3d)
    stage2 = np.einsum("dbij,db->dij", stage1, weights.fold)
    out = maxpool(stage2)
    if return_intermediates:
        return out, {"stage1": stage1, "stage2": stage2[:, None]}
    return out


def _maxpool_backward(grad_out: np.ndarray, idx: np.ndarray, in_shape) -> np.ndarray:
    *lead, h, w = in_shape
    grad = np.zeros(tuple(lead) + (h + 2, w + 2))
    oh, ow = idx.shape[-2:]
    rows = 2 * np.arange(oh)[:, None] + idx // 3
    cols = 2 * np.arange(ow)[None, :] + idx % 3
    for lead_idx in np.ndindex(*lead):
        np.add.at(grad[lead_idx], (rows[lead_idx], cols[lead_idx]), grad_out[lead_idx])
    return grad[..., 1:-1, 1:-1]


def backward(cube, weights: StemWeights, config: StemConfig = StemConfig(), grad_output=None) -> StemWeights:
    """Gradient of ``sum(grad_output * forward(...))`` with respect to both weight tensors."""
    x = _cube_array(cube, config)
    weights.check(config)
    win = _windows(x, config)
    stage1 = _stage1(win, weights.conv3d)
    stage2 = np.einsum("dbij,db->dij", stage1, weights.fold)
    out, idx = maxpool(stage2, return_index=True)
    g_out = np.ones_like(out) if grad_output is None else np.asarray(grad_output, dtype=float)
    g2 = _maxpool_backward(g_out, idx, stage2.shape)
    g_fold = np.einsum("dij,dbij->db", g2, stage1)
    g1 = weights.fold[:, :, None, None] * g2[:, None]
    d = weights.conv3d.shape[0]
    b, ho, wo = win.shape[:3]
    g_conv = g1.transpose(1, 2, 3, 0).reshape(b * ho * wo, d).T @ win.reshape(b * ho * wo, -1)
    return StemWeights(g_conv.reshape(weights.conv3d.shape), g_fold)


def grad_check(cube=None, weights: StemWeights | None = None, config: StemConfig | None = None, seed: int = 0,
               step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    The loss is the sum of all outputs. Missing inputs are drawn from
    ``seed``; by default a ``8 x 16 x 16`` cube with the default config.
    """
    config = config or StemConfig()
    rng = np.random.default_rng(seed)
    if cube is None:
        cube = rng.normal(size=(config.bands, 16, 16))
    if weights is None:
        weights = random_weights(config, rng)
    x = _cube_array(cube, config)
    analytic = backward(x, weights, config)
    win = _windows(x, config)
    n = win.shape[0] * win.shape[1] * win.shape[2]
    flat_win = win.reshape(n, -1)

    # output channels are independent, so each perturbation only re-evaluates one channel
    def channel_loss(kernel: np.ndarray, fold: np.ndarray) -> float:
        s1 = (flat_win @ kernel).reshape(win.shape[:3])
        s2 = np.tensordot(fold, s1, axes=(0, 0))
        return float(maxpool(s2).sum())

    worst = 0.0
    for d in range(config.out_channels):
        kernel = weights.conv3d[d].ravel().copy()
        fold = weights.fold[d].copy()
        numeric_conv = np.empty_like(kernel)
        for k in range(kernel.size):
            orig = kernel[k]
            kernel[k] = orig + step
            up = channel_loss(kernel, fold)
            kernel[k] = orig - step
            down = channel_loss(kernel, fold)
            kernel[k] = orig
            numeric_conv[k] = (up - down) / (2 * step)
        numeric_fold = np.empty_like(fold)
        for k in range(fold.size):
            orig = fold[k]
            fold[k] = orig + step
            up = channel_loss(kernel, fold)
            fold[k] = orig - step
            down = channel_loss(kernel, fold)
            fold[k] = orig
            numeric_fold[k] = (up - down) / (2 * step)
        for a, b in ((analytic.conv3d[d].ravel(), numeric_conv), (analytic.fold[d], numeric_fold)):
            scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
            worst = max(worst, float((np.abs(a - b) / scale).max()))
    return worst


def import_rgb_weights(rgb2d, config: StemConfig = StemConfig()) -> StemWeights:
    """Reuse a ``D x 3 x k x k`` RGB convolution as the 3-D kernel.

    The RGB channel axis becomes the spectral kernel axis. The fold is set
    to a uniform ``1 / bands`` average, a neutral starting point.
    """
    w = np.asarray(rgb2d, dtype=float)
    if config.spectral_kernel != 3:
        raise ShapeError("RGB weights need a spectral kernel of size 3")
    expected = (config.out_channels, 3, config.spatial_kernel, config.spatial_kernel)
    if w.shape != expected:
        raise ShapeError(f"RGB weights have shape {w.shape}, expected {expected}")
    fold = np.full((config.out_channels, config.bands), 1.0 / config.bands)
    return StemWeights(w[:, None].copy(), fold)


def rgb_stem_forward(image, rgb2d) -> np.ndarray:
    """Plain 2-D stem: ``k x k`` stride-2 convolution, then the same max-pool."""
    img = np.asarray(image, dtype=float)
    w = np.asarray(rgb2d, dtype=float)
    d, c, k, _ = w.shape
    if img.shape[0] != c:
        raise ShapeError("image channels do not match the kernel")
    p = (k - 1) // 2
    xp = np.pad(img, ((0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::2, ::2]  # c, Ho, Wo, k, k
    _, ho, wo = win.shape[:3]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, -1)
    y = (cols @ w.reshape(d, -1).T).T.reshape(d, ho, wo)
    return maxpool(y)


_HEADER = struct.Struct("<4s4I")


def write_weights(stream: BinaryIO, weights: StemWeights, config: StemConfig) -> None:
    """``STW1`` container: magic, u32 D, bands, ks, k, then conv3d and fold as f32 (little endian)."""
    weights.check(config)
    stream.write(_HEADER.pack(b"STW1", config.out_channels, config.bands, config.spectral_kernel,
                              config.spatial_kernel))
    stream.write(weights.conv3d.astype("<f4").tobytes())
    stream.write(weights.fold.astype("<f4").tobytes())


def read_weights(stream: BinaryIO) -> tuple[StemWeights, StemConfig]:
    head = stream.read(_HEADER.size)
    if len(head) < _HEADER.size:
        raise ValueError("truncated STW1 header")
    magic, d, bands, ks, k = _HEADER.unpack(head)
    if magic != b"STW1":
        raise ValueError(f"bad magic {magic!r}")
    config = StemConfig(bands=bands, spectral_kernel=ks, spatial_kernel=k, out_channels=d)
    n_conv, n_fold = d * ks * k * k, d * bands
    body = stream.read(4 * (n_conv + n_fold))
    if len(body) != 4 * (n_conv + n_fold):
        raise ValueError("truncated STW1 payload")
    if stream.read(1):
        raise ValueError("trailing bytes after STW1 payload")
    values = np.frombuffer(body, dtype="<f4").astype(float)
    return StemWeights(values[:n_conv].reshape(config.conv3d_shape), values[n_conv:].reshape(d, bands)), config
