import numpy as np
import pytest

from chromafool.imagecore import ColorMode, Image


def random_integer_image(rng, h=32, w=32):
    pixels = rng.integers(0, 256, size=(h, w, 3), dtype=np.int64)
    return Image(pixels.astype(np.uint8), ColorMode.INTEGER)


def uniform_image(r, g, b, h=16, w=16, mode=ColorMode.INTEGER):
    if mode is ColorMode.INTEGER:
        pixels = np.full((h, w, 3), 0, dtype=np.uint8)
        pixels[..., 0] = r
        pixels[..., 1] = g
        pixels[..., 2] = b
    else:
        pixels = np.zeros((h, w, 3), dtype=np.float64)
        pixels[..., 0] = r
        pixels[..., 1] = g
        pixels[..., 2] = b
    return Image(pixels, mode)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
