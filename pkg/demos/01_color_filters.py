"""Colorization basics: grayscale and the three-component color filter.

Builds a synthetic portrait-like raster, shows how a filter scales its
grayscale into the R, G, B channels, and writes a small gallery of
colorized variants to demos/out/.
"""

import os

import numpy as np

from chromafool import ColorFilter, ColorMode, Image, apply_filter, save_image
from chromafool.imagecore import grayscale

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

# a smooth face-ish test card: bright oval on a tilted gradient
yy, xx = np.mgrid[0:256, 0:256].astype(np.float64)
lum = 120 + 35 * ((xx - 128) / 256 + (yy - 128) / 256)
lum += 45 * np.exp(-(((xx - 128) / 80) ** 2 + ((yy - 120) / 95) ** 2))
pixels = np.clip(lum[..., None] * np.array([1.0, 0.85, 0.7]), 0, 255)
portrait = Image(pixels.astype(np.uint8), ColorMode.INTEGER)
save_image(portrait, os.path.join(OUT, "portrait.png"))

gray = grayscale(portrait)
print(f"gray range: [{gray.min():.1f}, {gray.max():.1f}], "
      f"mean {gray.mean():.1f}")

filters = {
    "identity_gray": ColorFilter(1.0, 1.0, 1.0),
    "purple": ColorFilter(0.9, 0.2, 0.9),
    "amber": ColorFilter(1.0, 0.6, 0.1),
    "teal": ColorFilter(0.1, 0.7, 0.7),
}
for name, filt in filters.items():
    out = apply_filter(portrait, filt, ColorMode.INTEGER)
    save_image(out, os.path.join(OUT, f"filtered_{name}.png"))
    means = out.pixels.reshape(-1, 3).mean(axis=0)
    print(f"{name:14s} filter ({filt.r}, {filt.g}, {filt.b}) -> "
          f"channel means {means.round(1)}")

# the commutation law: grayscale of a filtered image is a scalar multiple
filt = filters["purple"]
lhs = grayscale(apply_filter(portrait, filt, ColorMode.CONTINUOUS))
k = 0.3 * filt.r + 0.59 * filt.g + 0.11 * filt.b
print(f"\nfilter-grayscale commutation: max |gray(filtered) - k*gray| = "
      f"{np.abs(lhs - k * gray).max():.2e} (k = {k:.4f})")
print(f"gallery written to {OUT}")
