"""The physical-simulation transforms, one by one and composed.

Applies each transform at a telling parameter value, then samples the
full envelope a few times, and writes everything to demos/out/.
"""

import os

import numpy as np

from chromafool import ColorMode, Image, quantize, save_image
from chromafool import transforms as T

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

yy, xx = np.mgrid[0:256, 0:256].astype(np.float64)
lum = 110 + 40 * np.cos((xx - 128) / 60) * np.cos((yy - 128) / 60)
lum += 30 * (xx / 256)
pixels = np.clip(lum[..., None] * np.array([0.95, 0.8, 0.7]), 0, 255)
img = Image(pixels.astype(np.uint8), ColorMode.INTEGER)
save_image(img, os.path.join(OUT, "original.png"))

stages = {
    "halo": T.illuminate(img, 220.0, (90, 70), 45.0),
    "brightness_dim": T.adjust_brightness(img, 0.45),
    "brightness_hot": T.adjust_brightness(img, 1.7),
    "gamma_2.5": T.gamma_correct(img, 2.5),
    "rotate_25": T.geo_transform(img, rotation=25.0),
    "shift_crop": T.geo_transform(img, translation=(8, -6), crop=12.0),
    "blur_7": T.gaussian_blur(img, 7),
}
for name, out in stages.items():
    save_image(quantize(out), os.path.join(OUT, f"stage_{name}.png"))
print(f"wrote {len(stages)} single-stage images")

# full composed draws from the reference envelope
ranges = T.TransformRanges()
rng = np.random.default_rng(0)
for i in range(4):
    params = T.sample_params(ranges, rng)
    composed = quantize(T.apply(img, params))
    save_image(composed, os.path.join(OUT, f"composed_{i}.png"))
    print(f"draw {i}: brightness {params.brightness_coeff:.2f}, "
          f"gamma {params.gamma_coeff:.2f}, rot {params.rotation:+.1f} deg, "
          f"halo={'on' if params.apply_illumination else 'off'}, "
          f"kernel {params.kernel}")

# the batch engine produces the same rasters the oracle will see
params = [T.sample_params(ranges, rng) for _ in range(8)]
batch = T.apply_batch(img.as_float(), params)
print(f"\nbatch engine: {batch.shape[0]} samples of shape "
      f"{batch.shape[1:]} in one call; values within "
      f"[{batch.min()}, {batch.max()}]")
print(f"gallery written to {OUT}")
