"""Parameter accounting of the spectral stem and the RGB-weight import."""

import numpy as np

from obbtrack.stem import (StemConfig, conv2d_stem_params, forward, import_rgb_weights, param_count,
                           rgb_stem_forward)


def main() -> None:
    cfg = StemConfig()
    print(f"2-D stem on RGB: {conv2d_stem_params(3):,} parameters")
    print(f"2-D stem on 8 bands: {conv2d_stem_params(8):,} parameters")
    print(f"spectral stem: {param_count(cfg)}")
    rng = np.random.default_rng(0)
    rgb2d = rng.normal(size=(64, 3, 7, 7))
    image = rng.normal(size=(3, 64, 64))
    w = import_rgb_weights(rgb2d, cfg)
    # a one-hot fold over band 3 with the image placed in bands 2..4 reproduces the 2-D stem
    w.fold[:] = 0.0
    w.fold[:, 3] = 1.0
    cube = np.zeros((8, 64, 64))
    cube[2:5] = image
    diff = np.abs(forward(cube, w, cfg) - rgb_stem_forward(image, rgb2d)).max()
    print(f"max difference to the RGB stem: {diff:.2e}")


if __name__ == "__main__":
    main()
