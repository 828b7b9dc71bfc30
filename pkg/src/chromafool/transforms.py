"""Physical-simulation transforms and their uniform parameter sampler.

The suite models what a camera pointed at an illuminated print sees:
a local halation spot, global brightness change, gamma correction,
small geometric jitter (translation, rotation, crop) and lens blur.
Parameter envelopes default to the reference ranges in
:class:`TransformRanges`; one concrete draw is a :class:`TransformParams`.

Every operation maps a valid image to a valid image (values stay in
[0, 255]); outputs are continuous-mode, since the composition lives in
float space until the attack path quantizes once at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

from .imagecore import ColorMode, Image

cv2.setNumThreads(1)  # keep per-process work single-threaded and predictable

__all__ = [
    "TransformRanges",
    "TransformParams",
    "identity_params",
    "illuminate",
    "adjust_brightness",
    "gamma_correct",
    "geo_transform",
    "gaussian_blur",
    "sample_params",
    "apply",
    "apply_batch",
]


@dataclass(frozen=True)
class TransformRanges:
    """Sampling envelope for every transform parameter.

    Intervals are (low, high) tuples; the kernel field is the finite set of
    allowed Gaussian kernel sizes.  Defaults are the reference envelope for
    a 256x256 working raster.
    """

    illumination_coeff: tuple = (0.0, 300.0)
    illumination_center: tuple = (25.0, 100.0)
    illumination_radius: tuple = (25.0, 50.0)
    brightness_coeff: tuple = (0.2, 1.8)
    gamma_coeff: tuple = (1.0, 3.0)
    translation: tuple = (-10.0, 10.0)
    rotation: tuple = (-60.0, 60.0)
    crop: tuple = (-20.0, 20.0)
    gaussian_kernels: tuple = (3, 5, 7)
    illumination_probability: float = 0.5

    def __post_init__(self):
        for name in ("illumination_coeff", "illumination_center",
                     "illumination_radius", "brightness_coeff", "gamma_coeff",
                     "translation", "rotation", "crop"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"{name}: bounds must be finite")
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper {hi}")
        if not all(int(k) % 2 == 1 and k > 0 for k in self.gaussian_kernels):
            raise ValueError("gaussian kernel sizes must be positive odd integers")
        if not (0.0 <= self.illumination_probability <= 1.0):
            raise ValueError("illumination_probability outside [0, 1]")


@dataclass(frozen=True)
class TransformParams:
    """One concrete transform draw.

    ``kernel`` may be None to disable blurring (never produced by the
    sampler, useful for identity compositions).
    """

    illumination_coeff: float = 0.0
    illumination_center: tuple = (0.0, 0.0)
    illumination_radius: float = 1.0
    apply_illumination: bool = False
    brightness_coeff: float = 1.0
    gamma_coeff: float = 1.0
    translation: tuple = (0.0, 0.0)
    rotation: float = 0.0
    crop: float = 0.0
    kernel: int | None = None

    def __post_init__(self):
        if self.apply_illumination:
            if self.illumination_coeff < 0:
                raise ValueError("illumination coefficient must be >= 0")
            if self.illumination_radius <= 0:
                raise ValueError("illumination radius must be positive")
        if self.brightness_coeff < 0:
            raise ValueError("brightness coefficient must be >= 0")
        if self.gamma_coeff < 1.0:
            raise ValueError("gamma coefficient must be >= 1")
        if self.kernel is not None and int(self.kernel) not in (3, 5, 7):
            raise ValueError(f"kernel size {self.kernel} not in {{3, 5, 7}}")


def identity_params() -> TransformParams:
    """Parameters under which apply() is exactly the identity."""
    return TransformParams()


def _continuous(img: Image, values: np.ndarray) -> Image:
    return Image(values, ColorMode.CONTINUOUS)


def illuminate(img: Image, coeff: float, center, radius: float) -> Image:
    """Add a halation spot: a linear ramp peaking at ``center``.

    Every channel at distance d from center gains
    coeff * max(1 - d / radius, 0), clipped to [0, 255]; pixels at or
    beyond the radius are untouched.  ``center`` is (x, y) in pixels.
    """
    if radius <= 0:
        raise ValueError("illumination radius must be positive")
    if coeff < 0:
        raise ValueError("illumination coefficient must be >= 0")
    cx, cy = float(center[0]), float(center[1])
    if not (0 <= cx < img.width and 0 <= cy < img.height):
        raise ValueError(f"center {center} outside the {img.height}x{img.width} image")
    out = img.as_float()
    _add_halo_inplace(out, coeff, cx, cy, radius)
    return _continuous(img, out)


def _add_halo_inplace(pixels: np.ndarray, coeff, cx, cy, radius) -> None:
    """Add the halation ramp to (H, W, 3) float pixels, clipping in place."""
    h, w = pixels.shape[0], pixels.shape[1]
    y0 = max(0, int(math.floor(cy - radius)))
    y1 = min(h, int(math.ceil(cy + radius)) + 1)
    x0 = max(0, int(math.floor(cx - radius)))
    x1 = min(w, int(math.ceil(cx + radius)) + 1)
    if y0 >= y1 or x0 >= x1:
        return
    yy = np.arange(y0, y1, dtype=pixels.dtype) - pixels.dtype.type(cy)
    xx = np.arange(x0, x1, dtype=pixels.dtype) - pixels.dtype.type(cx)
    d = np.sqrt(yy[:, None] ** 2 + xx[None, :] ** 2)
    boost = coeff * np.maximum(1.0 - d / radius, 0.0)
    region = pixels[y0:y1, x0:x1]
    np.clip(region + boost[..., None], 0.0, 255.0, out=region)


def adjust_brightness(img: Image, coeff: float) -> Image:
    """Scale every value by ``coeff`` and clip to [0, 255]."""
    if coeff < 0:
        raise ValueError("brightness coefficient must be >= 0")
    return _continuous(img, np.clip(img.as_float() * coeff, 0.0, 255.0))


def gamma_correct(img: Image, gamma: float) -> Image:
    """Gamma correction in the normalized domain: v -> 255 (v/255)^(1/gamma).

    Only gamma >= 1 is accepted (the reference envelope); the map then
    brightens every value, with 0 and 255 as fixed points.
    """
    if gamma < 1.0:
        raise ValueError("gamma must be >= 1")
    if gamma == 1.0:
        return _continuous(img, img.as_float())
    v = img.as_float() / 255.0
    out = np.clip(255.0 * np.power(v, 1.0 / gamma), 0.0, 255.0)
    return _continuous(img, out)


def _geo_matrix(shape, translation, rotation_deg, crop):
    """Inverse affine map (output -> source coords) of the geometric stage.

    The forward chain translates content by (tx, ty), rotates it about the
    raster center, then crops ``crop`` pixels per side (negative pads) and
    resizes back to the original shape.  Composing the three keeps a single
    resampling pass.  Coordinates are (row, col); sampling uses half-pixel
    centers for the crop-resize leg.
    """
    h, w = shape
    tx, ty = float(translation[0]), float(translation[1])
    theta = math.radians(float(rotation_deg))
    c = float(crop)
    sy = (h - 2.0 * c) / h
    sx = (w - 2.0 * c) / w
    ky = 0.5 * sy - 0.5 + c
    kx = 0.5 * sx - 0.5 + c
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    cos_t, sin_t = math.cos(-theta), math.sin(-theta)
    rot = np.array([[cos_t, -sin_t], [sin_t, cos_t]])
    scale = np.array([[sy, 0.0], [0.0, sx]])
    mat = rot @ scale
    center = np.array([cy, cx])
    k = np.array([ky, kx])
    offset = rot @ (k - center) + center - np.array([ty, tx])
    return mat, offset


def _warp(pixels32: np.ndarray, mat, offset) -> np.ndarray:
    """Bilinear resample of float32 (H, W, 3) under an inverse affine map.

    ``mat``/``offset`` map output (row, col) to source (row, col); cv2 wants
    the (x, y) ordering, hence the transposition.  Out-of-frame samples are
    black.  The reference per-sample path and the batch engine both call
    this, so they share one resampler and border convention.
    """
    h, w = pixels32.shape[0], pixels32.shape[1]
    m = np.array([
        [mat[1, 1], mat[1, 0], offset[1]],
        [mat[0, 1], mat[0, 0], offset[0]],
    ], dtype=np.float64)
    return cv2.warpAffine(
        pixels32, m, (w, h),
        flags=cv2.INTER_LINEAR | cv2.WARP_INVERSE_MAP,
        borderMode=cv2.BORDER_CONSTANT, borderValue=0.0,
    )


def geo_transform(img: Image, translation=(0.0, 0.0), rotation: float = 0.0,
                  crop: float = 0.0) -> Image:
    """Translate, rotate about the center, then crop/pad and resize back.

    Out-of-frame regions are black.  ``translation`` is (tx, ty): content
    moves tx columns right and ty rows down.  Positive ``crop`` removes that
    many pixels from each side before resizing back (zoom in); negative pads
    black borders (zoom out).  Resampling runs in float32.
    """
    mat, offset = _geo_matrix((img.height, img.width), translation, rotation, crop)
    out = _warp(np.ascontiguousarray(img.as_float(), dtype=np.float32),
                mat, offset)
    return _continuous(img, np.clip(out.astype(np.float64), 0.0, 255.0))


def _gaussian_weights(kernel: int, dtype=np.float64) -> np.ndarray:
    """Normalized 1-D Gaussian taps for an odd kernel size."""
    sigma = 0.3 * ((kernel - 1) * 0.5 - 1.0) + 0.8
    r = (kernel - 1) // 2
    x = np.arange(-r, r + 1, dtype=dtype)
    w = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


def gaussian_blur(img: Image, kernel: int) -> Image:
    """Separable Gaussian blur with replicate borders.

    The standard deviation follows the conventional size relation
    0.3 ((kernel - 1)/2 - 1) + 0.8; kernel must be 3, 5 or 7.
    """
    if int(kernel) not in (3, 5, 7):
        raise ValueError(f"kernel size {kernel} not in {{3, 5, 7}}")
    w = _gaussian_weights(int(kernel))
    out = img.as_float()
    out = ndimage.convolve1d(out, w, axis=0, mode="nearest")
    out = ndimage.convolve1d(out, w, axis=1, mode="nearest")
    return _continuous(img, np.clip(out, 0.0, 255.0))


def sample_params(ranges: TransformRanges, rng: np.random.Generator) -> TransformParams:
    """Draw one TransformParams uniformly from ``ranges``.

    Every field is drawn on every call (in a fixed order), so the stream of
    draws, and therefore the whole sequence of params, is reproducible from
    the generator seed alone.
    """
    u = rng.uniform
    coeff = u(*ranges.illumination_coeff)
    cx = u(*ranges.illumination_center)
    cy = u(*ranges.illumination_center)
    radius = u(*ranges.illumination_radius)
    lit = bool(rng.random() < ranges.illumination_probability)
    brightness = u(*ranges.brightness_coeff)
    gamma = u(*ranges.gamma_coeff)
    tx = u(*ranges.translation)
    ty = u(*ranges.translation)
    rotation = u(*ranges.rotation)
    crop = u(*ranges.crop)
    kernel = int(rng.choice(np.asarray(ranges.gaussian_kernels, dtype=np.int64)))
    return TransformParams(
        illumination_coeff=coeff,
        illumination_center=(cx, cy),
        illumination_radius=radius,
        apply_illumination=lit,
        brightness_coeff=brightness,
        gamma_coeff=gamma,
        translation=(tx, ty),
        rotation=rotation,
        crop=crop,
        kernel=kernel,
    )


def apply(img: Image, p: TransformParams) -> Image:
    """Compose the full suite in order: halo, brightness, gamma, geometry, blur.

    Stages whose parameters are exactly the identity are skipped, so
    identity_params() reproduces the input bit for bit.
    """
    out = img
    if p.apply_illumination:
        out = illuminate(out, p.illumination_coeff, p.illumination_center,
                         p.illumination_radius)
    if p.brightness_coeff != 1.0:
        out = adjust_brightness(out, p.brightness_coeff)
    if p.gamma_coeff != 1.0:
        out = gamma_correct(out, p.gamma_coeff)
    if p.translation != (0.0, 0.0) or p.rotation != 0.0 or p.crop != 0.0:
        out = geo_transform(out, p.translation, p.rotation, p.crop)
    if p.kernel is not None:
        out = gaussian_blur(out, p.kernel)
    if out is img:
        out = _continuous(img, img.as_float())
    return out


def apply_batch(pixels: np.ndarray, params_list) -> np.ndarray:
    """Apply one TransformParams per output sample and quantize, fast.

    ``pixels`` is the shared (H, W, 3) source raster; the return value is a
    (N, H, W, 3) uint8 array where sample i is quantize(apply(img, params[i]))
    computed in float32.  This is the attack's hot path: brightness and gamma
    vectorize across the batch, geometry is a single composed resampling pass
    per sample, and blurs are grouped by kernel size.
    """
    base = np.ascontiguousarray(pixels, dtype=np.float32)
    n = len(params_list)
    batch = np.broadcast_to(base, (n,) + base.shape).copy()

    for i, p in enumerate(params_list):
        if p.apply_illumination:
            cx, cy = p.illumination_center
            _add_halo_inplace(batch[i], np.float32(p.illumination_coeff),
                              cx, cy, p.illumination_radius)

    bright = np.array([p.brightness_coeff for p in params_list],
                      dtype=np.float32)[:, None, None, None]
    np.multiply(batch, bright, out=batch)
    np.clip(batch, 0.0, 255.0, out=batch)

    inv_gamma = np.array([1.0 / p.gamma_coeff for p in params_list],
                         dtype=np.float32)[:, None, None, None]
    np.divide(batch, np.float32(255.0), out=batch)
    np.power(batch, inv_gamma, out=batch)
    np.multiply(batch, np.float32(255.0), out=batch)
    np.clip(batch, 0.0, 255.0, out=batch)

    shape = base.shape[:2]
    for i, p in enumerate(params_list):
        if p.translation == (0.0, 0.0) and p.rotation == 0.0 and p.crop == 0.0:
            continue
        mat, offset = _geo_matrix(shape, p.translation, p.rotation, p.crop)
        batch[i] = _warp(batch[i], mat, offset)

    for i, p in enumerate(params_list):
        if p.kernel is None:
            continue
        w = _gaussian_weights(int(p.kernel), dtype=np.float32)
        batch[i] = cv2.sepFilter2D(batch[i], -1, w, w,
                                   borderType=cv2.BORDER_REPLICATE)

    np.clip(batch, 0.0, 255.0, out=batch)
    return np.rint(batch).astype(np.uint8)
