import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from obbtrack.dataio import SpectralCube
from obbtrack.stem import (
    ShapeError,
    StemConfig,
    StemWeights,
    backward,
    conv2d_stem_params,
    forward,
    grad_check,
    import_rgb_weights,
    maxpool,
    param_count,
    random_weights,
    read_weights,
    rgb_stem_forward,
    write_weights,
)

SMALL = StemConfig(bands=4, spectral_kernel=3, spatial_kernel=3, out_channels=2)


def _naive_forward(x, w: StemWeights, cfg: StemConfig):
    """Loop-by-loop cross-correlation, fold and max-pool."""
    bands, h, wd = x.shape
    ps, p, k, ks = cfg.spectral_padding, cfg.spatial_padding, cfg.spatial_kernel, cfg.spectral_kernel
    ho, wo = h // 2, wd // 2
    s1 = np.zeros((cfg.out_channels, bands, ho, wo))
    for d in range(cfg.out_channels):
        for b in range(bands):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for a in range(ks):
                        for u in range(k):
                            for v in range(k):
                                bb, yy, xx = b + a - ps, 2 * i + u - p, 2 * j + v - p
                                if 0 <= bb < bands and 0 <= yy < h and 0 <= xx < wd:
                                    acc += w.conv3d[d, 0, a, u, v] * x[bb, yy, xx]
                    s1[d, b, i, j] = acc
    s2 = np.einsum("db,dbij->dij", w.fold, s1)
    out = np.full((cfg.out_channels, ho // 2, wo // 2), -np.inf)
    for d in range(cfg.out_channels):
        for i in range(ho // 2):
            for j in range(wo // 2):
                for u in range(-1, 2):
                    for v in range(-1, 2):
                        yy, xx = 2 * i + u, 2 * j + v
                        if 0 <= yy < ho and 0 <= xx < wo:
                            out[d, i, j] = max(out[d, i, j], s2[d, yy, xx])
    return out, s1


def test_param_counts():
    assert param_count(StemConfig()) == {"conv3d": 9408, "fold": 512, "total": 9920}
    assert conv2d_stem_params(3) == 9408
    assert conv2d_stem_params(8) == 25088


def test_forward_shapes():
    cfg = StemConfig()
    w = random_weights(cfg, np.random.default_rng(0))
    out, inter = forward(np.random.default_rng(1).normal(size=(1, 8, 64, 64)), w, cfg, return_intermediates=True)
    assert out.shape == (64, 16, 16)
    assert inter["stage1"].shape == (64, 8, 32, 32)
    assert inter["stage2"].shape == (64, 1, 32, 32)


def test_forward_matches_naive_loops():
    rng = np.random.default_rng(2)
    w = random_weights(SMALL, rng)
    x = rng.normal(size=(4, 8, 12))
    want, want_s1 = _naive_forward(x, w, SMALL)
    got, inter = forward(x, w, SMALL, return_intermediates=True)
    assert np.abs(got - want).max() < 1e-12
    assert np.abs(inter["stage1"] - want_s1).max() < 1e-12


def test_zero_cube_gives_zero_output():
    cfg = StemConfig()
    w = random_weights(cfg, np.random.default_rng(3))
    assert not forward(np.zeros((8, 16, 16)), w, cfg).any()


def test_delta_kernel_passes_constant_through():
    cfg = StemConfig()
    conv = np.zeros(cfg.conv3d_shape)
    conv[:, 0, 1, 3, 3] = 1.0
    fold = np.zeros((64, 8))
    fold[:, 4] = 1.0
    out = forward(SpectralCube(np.full((8, 16, 16), 2.5)), StemWeights(conv, fold), cfg)
    assert np.all(out == 2.5)


@settings(max_examples=25)
@given(st.floats(0, 50))
def test_positive_homogeneity(a):
    rng = np.random.default_rng(4)
    w = random_weights(SMALL, rng)
    x = rng.normal(size=(4, 8, 8))
    assert np.allclose(forward(a * x, w, SMALL), a * forward(x, w, SMALL), atol=1e-9 * max(1, a))


@pytest.mark.parametrize("hw", [(4, 4), (8, 12), (20, 16)])
def test_output_shape_quarter(hw):
    w = random_weights(SMALL, np.random.default_rng(0))
    assert forward(np.ones((4, *hw)), w, SMALL).shape == (2, hw[0] // 4, hw[1] // 4)


def test_shape_errors():
    w = random_weights(SMALL, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        forward(np.ones((5, 8, 8)), w, SMALL)
    with pytest.raises(ShapeError):
        forward(np.ones((4, 6, 8)), w, SMALL)
    with pytest.raises(ShapeError):
        forward(np.ones((4, 8, 8)), StemWeights(w.conv3d, w.fold[:, :3]), SMALL)
    with pytest.raises(ValueError):
        StemConfig(spatial_kernel=4)


def test_maxpool_padding_ignores_border():
    x = -np.ones((1, 4, 4))
    assert np.all(maxpool(x) == -1)


def test_grad_check_small_and_deterministic():
    err = grad_check(config=SMALL, cube=np.random.default_rng(5).normal(size=(4, 8, 8)), seed=0)
    assert err < 1e-4
    assert grad_check(config=SMALL, seed=7) == grad_check(config=SMALL, seed=7)


def test_zero_input_zero_conv_gradient():
    cfg = StemConfig()
    g = backward(np.zeros((8, 16, 16)), random_weights(cfg, np.random.default_rng(0)), cfg)
    assert not g.conv3d.any()


@pytest.mark.parametrize("b", range(1, 7))
def test_rgb_weights_reproduce_2d_stem(b):
    cfg = StemConfig()
    rng = np.random.default_rng(b)
    rgb2d = rng.normal(size=(64, 3, 7, 7))
    image = rng.normal(size=(3, 32, 32))
    w = import_rgb_weights(rgb2d, cfg)
    assert w.conv3d.size == 9408
    w.fold[:] = 0.0
    w.fold[:, b] = 1.0
    cube = np.zeros((8, 32, 32))
    cube[b - 1:b + 2] = image
    assert np.abs(forward(cube, w, cfg) - rgb_stem_forward(image, rgb2d)).max() < 1e-6


def test_import_rejects_other_spectral_kernels():
    with pytest.raises(ShapeError):
        import_rgb_weights(np.zeros((64, 3, 7, 7)), StemConfig(spectral_kernel=7))


def test_import_fold_is_uniform_average():
    w = import_rgb_weights(np.zeros((64, 3, 7, 7)))
    assert np.all(w.fold == 1 / 8)


def test_weights_round_trip():
    w = random_weights(SMALL, np.random.default_rng(9))
    buf = io.BytesIO()
    write_weights(buf, w, SMALL)
    raw = buf.getvalue()
    assert raw[:4] == b"STW1"
    back, cfg = read_weights(io.BytesIO(raw))
    assert cfg == SMALL
    assert np.array_equal(back.conv3d, w.conv3d.astype(np.float32))
    assert np.array_equal(back.fold, w.fold.astype(np.float32))
    with pytest.raises(ValueError):
        read_weights(io.BytesIO(b"XXXX" + raw[4:]))
    with pytest.raises(ValueError):
        read_weights(io.BytesIO(raw[:-2]))
