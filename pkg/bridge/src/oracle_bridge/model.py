"""Verdict models served by the bridge.

The built-in mirror re-implements the color-gate verdict arithmetic from
scratch (channel means, chroma distance against a secret target, a
brightness/saturation quality score, optional template matching).  It is
deliberately independent code: agreement with the attacking toolkit's
built-in gate doubles as a correctness check of the verdict math on both
sides of the wire.
"""

from __future__ import annotations

import importlib.util
import os

import numpy as np
from PIL import Image as PILImage

DEFAULT_SECRET_CHROMA = (0.45, 0.10, 0.45)
DEFAULT_TOLERANCE = 0.14
TEMPLATE_SIZE = 64
MATCH_THRESHOLD = 0.8

SPOOFING = 0
BONAFIDE = 1


class VerdictError(ValueError):
    """The wrapped model produced an out-of-contract verdict."""


def _resize_gray_bilinear(gray: np.ndarray, out_side: int) -> np.ndarray:
    """Half-pixel-center bilinear resize of a 2-D array."""
    in_h, in_w = gray.shape
    if (in_h, in_w) == (out_side, out_side):
        return gray.copy()

    def coords(n_out, n_in):
        c = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        return np.clip(c, 0.0, n_in - 1.0)

    ys = coords(out_side, in_h)
    xs = coords(out_side, in_w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = gray[np.ix_(y0, x0)] * (1 - wx) + gray[np.ix_(y0, x1)] * wx
    bot = gray[np.ix_(y1, x0)] * (1 - wx) + gray[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


class TemplateMatcher:
    """Normalized cross-correlation matcher over enrolled gray templates."""

    def __init__(self):
        self._ids = []
        self._normalized = []

    @classmethod
    def from_directory(cls, path) -> "TemplateMatcher":
        matcher = cls()
        for name in sorted(os.listdir(path)):
            if not name.endswith(".png"):
                continue
            with PILImage.open(os.path.join(path, name)) as im:
                if im.mode != "L":
                    raise ValueError(f"template {name} must be grayscale")
                template = np.asarray(im, dtype=np.float64)
            matcher.enroll(os.path.splitext(name)[0], template)
        return matcher

    def enroll(self, identity: str, template: np.ndarray) -> None:
        t = np.asarray(template, dtype=np.float64)
        if t.shape != (TEMPLATE_SIZE, TEMPLATE_SIZE):
            raise ValueError("template must be 64x64")
        flat = t.ravel() - t.mean()
        norm = np.linalg.norm(flat)
        self._ids.append(identity)
        self._normalized.append(flat / norm if norm > 0 else None)

    def match(self, gray: np.ndarray):
        if not self._ids:
            return None
        probe = _resize_gray_bilinear(gray, TEMPLATE_SIZE).ravel()
        probe = probe - probe.mean()
        norm = np.linalg.norm(probe)
        if norm == 0:
            return None
        probe /= norm
        best_id, best = None, -np.inf
        for identity, tn in zip(self._ids, self._normalized):
            if tn is None:
                continue
            score = float(probe @ tn)
            if score > best:
                best_id, best = identity, score
        return best_id if best >= MATCH_THRESHOLD else None


class ColorGateMirror:
    """Accepts an image when its mean-channel chroma is near the secret.

    Arithmetic contract (kept in lockstep with the attacking toolkit's
    built-in gate): float64 channel means, gray mean as the weighted
    channel-mean combination 0.3/0.59/0.11, quality as the mid-gray
    closeness discounted by the exact 0/255 saturation fraction, and the
    Euclidean chroma distance against the secret.
    """

    def __init__(self, secret_chroma=DEFAULT_SECRET_CHROMA,
                 tolerance=DEFAULT_TOLERANCE,
                 matcher: TemplateMatcher | None = None):
        secret = np.asarray(secret_chroma, dtype=np.float64).reshape(3)
        if (secret < 0).any() or abs(float(secret.sum()) - 1.0) > 1e-9:
            raise ValueError("secret chroma must lie on the unit simplex")
        if not tolerance > 0:
            raise ValueError("tolerance must be positive")
        self.secret = secret
        self.tolerance = float(tolerance)
        self.matcher = matcher

    def __call__(self, pixels: np.ndarray):
        means = pixels.reshape(-1, 3).mean(axis=0, dtype=np.float64)
        total = float(means.sum())
        gray_mean = 0.3 * float(means[0]) + 0.59 * float(means[1]) \
            + 0.11 * float(means[2])
        brightness_term = max(0.0, 1.0 - abs(gray_mean - 128.0) / 128.0)
        saturated = int(np.count_nonzero(pixels == 0))
        saturated += int(np.count_nonzero(pixels == 255))
        quality = brightness_term * (1.0 - saturated / pixels.size)
        if total == 0.0:
            label = SPOOFING
        else:
            chroma = means / total
            dist = float(np.linalg.norm(chroma - self.secret))
            label = BONAFIDE if dist < self.tolerance else SPOOFING
        match_id = None
        if self.matcher is not None:
            f = pixels.astype(np.float64)
            gray = 0.3 * f[..., 0] + 0.59 * f[..., 1] + 0.11 * f[..., 2]
            match_id = self.matcher.match(gray)
        return label, quality, match_id


def wrap_user_model(module_path: str):
    """Load a user verdict function and guard its output contract.

    The module must expose ``verdict(pixels) -> (label, quality, match_id)``
    for an (H, W, 3) uint8 array.  Out-of-range labels or qualities raise
    VerdictError, which the server turns into an error response.
    """
    spec = importlib.util.spec_from_file_location("bridge_user_model",
                                                  module_path)
    if spec is None or spec.loader is None:
        raise ValueError(f"cannot load model module {module_path!r}")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    if not hasattr(module, "verdict"):
        raise ValueError(f"{module_path!r} does not define verdict()")
    user_fn = module.verdict

    def guarded(pixels: np.ndarray):
        label, quality, match_id = user_fn(pixels)
        if label not in (SPOOFING, BONAFIDE):
            raise VerdictError(f"label {label!r} not in {{0, 1}}")
        if not isinstance(quality, (int, float)) or not 0.0 <= quality <= 1.0:
            raise VerdictError(f"quality {quality!r} outside [0, 1]")
        if match_id is not None and not isinstance(match_id, str):
            raise VerdictError(f"match_id {match_id!r} is not a string")
        return int(label), float(quality), match_id

    return guarded
