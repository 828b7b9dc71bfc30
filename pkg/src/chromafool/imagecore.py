"""Image containers, grayscale conversion, and color-filter colorization.

Images are H x W x 3 RGB rasters with every value in [0, 255].  Two value
models exist: integer mode (uint8, what a file or a camera holds) and
continuous mode (float64, what the optimizer manipulates).  Colorization
scales the grayscale of the input into the three channels by a per-channel
coefficient in [0, 1]; integer mode additionally floors the result.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image as _PILImage
from PIL import UnidentifiedImageError

__all__ = [
    "GRAY_WEIGHTS",
    "WORKING_SIZE",
    "MIN_SIDE",
    "ColorMode",
    "ColorFilter",
    "Image",
    "ImageFormatError",
    "ChannelCountError",
    "grayscale",
    "apply_filter",
    "quantize",
    "resize_bilinear",
    "to_working",
    "load_image",
    "save_image",
]

#: R, G, B weights of the grayscale conversion.  They sum to 1, so the gray
#: value of an in-range pixel is itself in range.
GRAY_WEIGHTS = (0.3, 0.59, 0.11)

#: Side length every attack-path image is resized to before processing.
WORKING_SIZE = 256

#: Smallest raster side accepted anywhere.
MIN_SIDE = 8


class ImageFormatError(ValueError):
    """File exists but is not a decodable, supported image."""


class ChannelCountError(ImageFormatError):
    """Decodable image whose channel layout is not 3-channel RGB."""


class ColorMode(enum.Enum):
    """Value model of an image: floored uint8 or real-valued float64."""

    INTEGER = "integer"
    CONTINUOUS = "continuous"


class Image:
    """Immutable H x W x 3 raster with values in [0, 255].

    ``pixels`` is uint8 in integer mode and float64 in continuous mode;
    the array is made read-only on construction.
    """

    __slots__ = ("pixels", "mode")

    def __init__(self, pixels, mode: ColorMode):
        arr = np.asarray(pixels)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ChannelCountError(
                f"expected an H x W x 3 array, got shape {arr.shape}"
            )
        if arr.shape[0] < MIN_SIDE or arr.shape[1] < MIN_SIDE:
            raise ValueError(
                f"degenerate raster {arr.shape[0]}x{arr.shape[1]}; "
                f"both sides must be >= {MIN_SIDE}"
            )
        if mode is ColorMode.INTEGER:
            if not np.issubdtype(arr.dtype, np.integer):
                raise ValueError("integer mode requires an integer dtype array")
            if arr.min() < 0 or arr.max() > 255:
                raise ValueError("pixel values outside [0, 255]")
            arr = arr.astype(np.uint8)
        elif mode is ColorMode.CONTINUOUS:
            arr = arr.astype(np.float64)
            if not np.isfinite(arr).all():
                raise ValueError("pixel values must be finite")
            if arr.min() < 0.0 or arr.max() > 255.0:
                raise ValueError("pixel values outside [0.0, 255.0]")
        else:
            raise TypeError(f"mode must be a ColorMode, got {mode!r}")
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)
        object.__setattr__(self, "mode", mode)

    def __setattr__(self, name, value):
        raise AttributeError("Image is immutable")

    @classmethod
    def trusted(cls, pixels: np.ndarray, mode: ColorMode) -> "Image":
        """Wrap an array known to satisfy the invariants, skipping the scans.

        Hot paths producing clipped/quantized rasters use this to avoid
        re-validating millions of values; the array is still frozen.
        """
        obj = object.__new__(cls)
        pixels.flags.writeable = False
        object.__setattr__(obj, "pixels", pixels)
        object.__setattr__(obj, "mode", mode)
        return obj

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def as_float(self) -> np.ndarray:
        """Pixel values as a float64 array (a copy in integer mode)."""
        return self.pixels.astype(np.float64)

    def __repr__(self):
        return f"Image({self.height}x{self.width}, {self.mode.value})"


@dataclass(frozen=True)
class ColorFilter:
    """Per-channel scaling coefficients, each in [0, 1]."""

    r: float
    g: float
    b: float

    def __post_init__(self):
        for name in ("r", "g", "b"):
            v = float(getattr(self, name))
            if not (0.0 <= v <= 1.0) or not np.isfinite(v):
                raise ValueError(f"filter component {name}={v} outside [0, 1]")
            object.__setattr__(self, name, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "ColorFilter":
        a = np.asarray(arr, dtype=np.float64).reshape(3)
        return cls(float(a[0]), float(a[1]), float(a[2]))


def grayscale(img: Image) -> np.ndarray:
    """Weighted-channel gray values of ``img``, as an (H, W) float64 array.

    Each value is 0.3 R + 0.59 G + 0.11 B of the corresponding pixel and
    therefore lies in [0, 255].
    """
    f = img.as_float()
    return gray_of_array(f)


def gray_of_array(arr: np.ndarray) -> np.ndarray:
    """Grayscale of a raw (..., 3) float array, same leading shape."""
    wr, wg, wb = GRAY_WEIGHTS
    return wr * arr[..., 0] + wg * arr[..., 1] + wb * arr[..., 2]


def apply_filter(img: Image, filt: ColorFilter, mode: ColorMode) -> Image:
    """Colorize ``img``: scale its grayscale into R, G, B by the filter.

    Each output channel is clip(coefficient * gray, 0, 255); integer mode
    floors the clipped value.  The clip is a no-op while coefficients stay
    in [0, 1] but guards extended filter ranges.
    """
    gray = grayscale(img)
    out = np.empty(gray.shape + (3,), dtype=np.float64)
    for c, coeff in enumerate((filt.r, filt.g, filt.b)):
        out[..., c] = np.clip(coeff * gray, 0.0, 255.0)
    if mode is ColorMode.INTEGER:
        return Image(np.floor(out).astype(np.uint8), ColorMode.INTEGER)
    return Image(out, ColorMode.CONTINUOUS)


def quantize(img: Image) -> Image:
    """Round a continuous image to the nearest integer raster.

    Integer-mode input is returned unchanged.
    """
    if img.mode is ColorMode.INTEGER:
        return img
    q = np.clip(np.rint(img.pixels), 0, 255).astype(np.uint8)
    return Image(q, ColorMode.INTEGER)


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W) or (H, W, C) float array.

    Uses half-pixel sample centers, the common image-resampler convention.
    """
    a = np.asarray(arr, dtype=np.float64)
    in_h, in_w = a.shape[0], a.shape[1]
    if (in_h, in_w) == (out_h, out_w):
        return a.copy()

    def _coords(n_out, n_in):
        c = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        return np.clip(c, 0.0, n_in - 1.0)

    ys = _coords(out_h, in_h)
    xs = _coords(out_w, in_w)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    if a.ndim == 3:
        wy = wy[..., None]
        wx = wx[..., None]
    top = a[y0[:, None], x0[None, :]] * (1 - wx) + a[y0[:, None], x1[None, :]] * wx
    bot = a[y1[:, None], x0[None, :]] * (1 - wx) + a[y1[:, None], x1[None, :]] * wx
    return top * (1 - wy) + bot * wy


def to_working(img: Image) -> Image:
    """Resize to the working resolution, preserving the value model."""
    if img.height == WORKING_SIZE and img.width == WORKING_SIZE:
        return img
    resized = resize_bilinear(img.as_float(), WORKING_SIZE, WORKING_SIZE)
    if img.mode is ColorMode.INTEGER:
        return Image(np.clip(np.rint(resized), 0, 255).astype(np.uint8),
                     ColorMode.INTEGER)
    return Image(np.clip(resized, 0.0, 255.0), ColorMode.CONTINUOUS)


def load_image(path) -> Image:
    """Load an 8-bit RGB image file (PNG or PPM) in integer mode.

    Raises FileNotFoundError for a missing path, ChannelCountError for a
    decodable file that is not 3-channel RGB, and ImageFormatError for
    anything Pillow cannot decode.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with _PILImage.open(path) as im:
            if im.mode != "RGB":
                raise ChannelCountError(
                    f"{path}: expected 3-channel RGB, got mode {im.mode!r}"
                )
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a decodable image") from exc
    return Image(arr, ColorMode.INTEGER)


def save_image(img: Image, path) -> None:
    """Write an integer-mode image losslessly (PNG or PPM by extension).

    Continuous images must be quantized explicitly first; refusing them here
    keeps the save/load round trip bit-exact.
    """
    if img.mode is not ColorMode.INTEGER:
        raise ValueError("save_image requires integer mode; call quantize() first")
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"directory does not exist: {directory}")
    _PILImage.fromarray(img.pixels, mode="RGB").save(path)
