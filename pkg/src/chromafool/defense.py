"""Color-robust adversarial training of a toy anti-spoofing classifier.

The victim stand-in is logistic regression over eight fixed color and
luminance statistics, so gradients are closed-form and the whole minimax
loop stays desk-scale.  Training alternates an exhaustive grid search for
the color filter that maximizes minibatch misclassification (the inner
maximization) with a gradient step on the perturbed batch mixed 1:1 with
the clean batch.  The perturbation route applies a transform deliberately
disjoint from the attack suite: horizontal flip plus small uniform noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .imagecore import ColorMode, Image, gray_of_array
from .oracle import BONAFIDE, SPOOFING

__all__ = [
    "FEATURE_NAMES",
    "ToyClassifier",
    "ColorAtConfig",
    "DefenseMetrics",
    "feature_map",
    "bce_loss_and_grad",
    "train_plain",
    "train_colorat",
    "inner_max_color",
    "auc",
    "defense_metrics",
    "make_synthetic_dataset",
]

FEATURE_NAMES = (
    "mean_r", "mean_g", "mean_b",
    "chroma_r", "chroma_g",
    "gray_mean", "gray_std", "saturated_fraction",
)

FEATURE_MAP_VERSION = 1
_NOISE_SCALE = 5.0


def _features_from_channels(r, g, b):
    """Shared 8-feature computation from flat per-channel value arrays.

    Accepts (P,) vectors for one image or (G, P) matrices for a batch of
    candidate colorizations of the same raster; reduces over the last axis.
    """
    mean_r = r.mean(axis=-1)
    mean_g = g.mean(axis=-1)
    mean_b = b.mean(axis=-1)
    total = mean_r + mean_g + mean_b
    third = np.full_like(np.atleast_1d(total), 1.0 / 3.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        chroma_r = np.where(total > 0, mean_r / np.where(total > 0, total, 1.0),
                            third)
        chroma_g = np.where(total > 0, mean_g / np.where(total > 0, total, 1.0),
                            third)
    gray = 0.3 * r + 0.59 * g + 0.11 * b
    gray_mean = gray.mean(axis=-1)
    gray_std = gray.std(axis=-1)
    saturated = ((r == 0) | (r == 255)).sum(axis=-1)
    saturated = saturated + ((g == 0) | (g == 255)).sum(axis=-1)
    saturated = saturated + ((b == 0) | (b == 255)).sum(axis=-1)
    sat_fraction = saturated / (3.0 * r.shape[-1])
    feats = np.stack([
        np.atleast_1d(mean_r) / 255.0,
        np.atleast_1d(mean_g) / 255.0,
        np.atleast_1d(mean_b) / 255.0,
        np.atleast_1d(chroma_r),
        np.atleast_1d(chroma_g),
        np.atleast_1d(gray_mean) / 255.0,
        np.atleast_1d(gray_std) / 127.5,
        np.atleast_1d(sat_fraction),
    ], axis=-1)
    return feats


def feature_map(img: Image) -> np.ndarray:
    """The fixed 8-vector of color/luminance statistics, each in [0, 1]."""
    pixels = img.as_float().reshape(-1, 3)
    feats = _features_from_channels(pixels[:, 0], pixels[:, 1], pixels[:, 2])
    return feats.reshape(8)


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ToyClassifier:
    """Logistic regression over the fixed feature map."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(8)
        self.bias = float(self.bias)
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")

    def predict_proba(self, features) -> np.ndarray:
        f = np.asarray(features, dtype=np.float64)
        return _sigmoid(f @ self.weights + self.bias)

    def predict_image(self, img: Image) -> float:
        """Probability that the image is bonafide."""
        return float(self.predict_proba(feature_map(img)[None])[0])

    def predict_label(self, img: Image) -> int:
        return BONAFIDE if self.predict_image(img) >= 0.5 else SPOOFING

    def to_json(self) -> str:
        return json.dumps({
            "weights": [float(w) for w in self.weights],
            "bias": self.bias,
            "feature_map_version": FEATURE_MAP_VERSION,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ToyClassifier":
        doc = json.loads(text)
        if doc.get("feature_map_version") != FEATURE_MAP_VERSION:
            raise ValueError(
                f"unsupported feature_map_version {doc.get('feature_map_version')!r}"
            )
        weights = doc["weights"]
        if len(weights) != 8:
            raise ValueError("model must carry exactly 8 weights")
        return cls(weights=np.asarray(weights, dtype=np.float64),
                   bias=float(doc["bias"]))


def bce_loss_and_grad(weights, bias, features, labels):
    """Mean binary cross-entropy and its analytic gradient."""
    w = np.asarray(weights, dtype=np.float64)
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    p = _sigmoid(X @ w + float(bias))
    eps = 1e-12
    loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
    delta = p - y
    grad_w = X.T @ delta / len(y)
    grad_b = float(delta.mean())
    return loss, grad_w, grad_b


def _check_two_classes(labels):
    labels = np.asarray(labels)
    if not ((labels == 0).any() and (labels == 1).any()):
        raise ValueError("dataset must contain both labels")


# ---------------------------------------------------------------------------
# inner maximization


def _grid_colors(resolution: int) -> np.ndarray:
    """The {0, 1/(R-1), ..., 1}^3 grid in lexicographic order."""
    axis = np.linspace(0.0, 1.0, resolution)
    rr, gg, bb = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([rr.ravel(), gg.ravel(), bb.ravel()], axis=1)


def _perturbed_feature_grid(img: Image, colors: np.ndarray,
                            noise: np.ndarray) -> np.ndarray:
    """Features of flip+noise(colorize(img, c)) for every grid color c.

    ``noise`` is a (3, P) additive field drawn once per search; the flip is
    folded in by colorizing the mirrored raster.  Grid feature sweeps run in
    float32: the inner search only ranks candidate colors.  Returns (G, 8).
    """
    flipped = img.as_float()[:, ::-1, :]
    gray = gray_of_array(flipped).ravel().astype(np.float32)
    colors32 = colors.astype(np.float32)
    noise32 = noise.astype(np.float32)
    channels = []
    for c in range(3):
        vals = np.floor(np.clip(colors32[:, c][:, None] * gray[None, :],
                                np.float32(0.0), np.float32(255.0)))
        vals += noise32[c][None, :]
        np.clip(vals, np.float32(0.0), np.float32(255.0), out=vals)
        channels.append(vals)
    return _features_from_channels(*channels).astype(np.float64)


def inner_max_color(model: ToyClassifier, images, labels,
                    rng: np.random.Generator, grid_resolution: int = 11,
                    noise_scale: float = _NOISE_SCALE):
    """Grid color maximizing minibatch misclassification under flip+noise.

    Evaluates the model at exactly grid_resolution**3 candidate colors and
    returns (color array, perturbed features at that color, misclass counts).
    Ties keep the lexicographically smallest color: candidates are visited
    in lexicographic order and only strict improvements replace the best.
    """
    labels = np.asarray(labels)
    colors = _grid_colors(grid_resolution)
    total_wrong = np.zeros(len(colors), dtype=np.int64)
    per_image_feats = []
    for img in images:
        flat = img.pixels.shape[0] * img.pixels.shape[1]
        noise = rng.uniform(-noise_scale, noise_scale, size=(3, flat))
        feats = _perturbed_feature_grid(img, colors, noise)
        per_image_feats.append(feats)
    for feats, y in zip(per_image_feats, labels):
        pred = (model.predict_proba(feats) >= 0.5).astype(np.int64)
        total_wrong += pred != y
    best_idx = int(np.argmax(total_wrong))  # argmax keeps the first maximum
    best_feats = np.stack([feats[best_idx] for feats in per_image_feats])
    return colors[best_idx], best_feats, total_wrong


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class ColorAtConfig:
    epochs: int = 8
    learning_rate: float = 0.3
    minibatch: int | None = 16
    grid_resolution: int = 11
    noise_scale: float = _NOISE_SCALE
    seed: int = 0
    inner_search: bool = True
    shuffle: bool = True
    clean_mix: bool = True  # mix perturbed batch 1:1 with the clean batch
    weight_decay: float = 0.0


def _gd_train(images, features, labels, epochs, lr, rng, minibatch=None,
              shuffle=False, inner=False, grid_resolution=11,
              noise_scale=_NOISE_SCALE, clean_mix=True, weight_decay=0.0,
              record_loss=None):
    n = len(labels)
    w = np.zeros(8, dtype=np.float64)
    b = 0.0
    batch_size = n if minibatch is None else int(minibatch)
    for _ in range(epochs):
        order = rng.permutation(n) if shuffle else np.arange(n)
        for s in range(0, n, batch_size):
            batch = order[s:s + batch_size]
            if inner:
                model = ToyClassifier(w.copy(), b)
                _, pert_feats, _ = inner_max_color(
                    model, [images[i] for i in batch], labels[batch], rng,
                    grid_resolution, noise_scale)
                if clean_mix:
                    X = np.vstack([features[batch], pert_feats])
                    y = np.concatenate([labels[batch], labels[batch]])
                else:
                    X = pert_feats
                    y = labels[batch]
            else:
                X = features[batch]
                y = labels[batch]
            _, grad_w, grad_b = bce_loss_and_grad(w, b, X, y)
            if weight_decay:
                grad_w = grad_w + weight_decay * w
                grad_b = grad_b + weight_decay * b
            w = w - lr * grad_w
            b = b - lr * grad_b
        if record_loss is not None:
            loss, _, _ = bce_loss_and_grad(w, b, features, labels)
            record_loss.append(loss)
    return ToyClassifier(w, b)


def train_plain(dataset, epochs: int = 300, learning_rate: float = 0.3,
                seed: int = 0, record_loss=None) -> ToyClassifier:
    """Full-batch gradient descent on mean BCE over the clean dataset."""
    images = [img for img, _ in dataset]
    labels = np.asarray([y for _, y in dataset], dtype=np.float64)
    _check_two_classes(labels)
    features = np.stack([feature_map(img) for img in images])
    rng = np.random.default_rng(seed)
    return _gd_train(images, features, labels, epochs, learning_rate, rng,
                     minibatch=None, shuffle=False, inner=False,
                     record_loss=record_loss)


def train_colorat(dataset, config: ColorAtConfig = ColorAtConfig()) -> ToyClassifier:
    """Minimax color training: worst grid color per minibatch, 1:1 clean mix.

    With ``inner_search=False``, ``shuffle=False`` and a full-dataset
    minibatch this degenerates exactly to train_plain.
    """
    images = [img for img, _ in dataset]
    labels = np.asarray([y for _, y in dataset], dtype=np.float64)
    _check_two_classes(labels)
    features = np.stack([feature_map(img) for img in images])
    rng = np.random.default_rng(config.seed)
    return _gd_train(images, features, labels, config.epochs,
                     config.learning_rate, rng, minibatch=config.minibatch,
                     shuffle=config.shuffle, inner=config.inner_search,
                     grid_resolution=config.grid_resolution,
                     noise_scale=config.noise_scale,
                     clean_mix=config.clean_mix,
                     weight_decay=config.weight_decay)


# ---------------------------------------------------------------------------
# metrics


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg), ties counted one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if len(scores) != len(labels):
        raise ValueError("scores and labels must have equal length")
    _check_two_classes(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class DefenseMetrics:
    cauc: float
    ccauc: float
    dmr: float

    def to_dict(self) -> dict:
        return {"cAUC": self.cauc, "ccAUC": self.ccauc, "dMR": self.dmr}


def _colorize_integer(img: Image, color) -> Image:
    gray = gray_of_array(img.as_float())
    out = np.empty(gray.shape + (3,), dtype=np.uint8)
    for c in range(3):
        out[..., c] = np.floor(np.clip(color[c] * gray, 0.0, 255.0))
    return Image(out, ColorMode.INTEGER)


def defense_metrics(model: ToyClassifier, dataset, n_colors: int = 5,
                    seed: int = 0) -> DefenseMetrics:
    """cAUC on clean scores, ccAUC on clean plus colorized, dMR on spoofs.

    The colorized pool applies ``n_colors`` random filters to every image;
    dMR is the fraction of colorized spoof instances the model accepts.
    """
    images = [img for img, _ in dataset]
    labels = np.asarray([y for _, y in dataset], dtype=np.int64)
    _check_two_classes(labels)
    rng = np.random.default_rng(seed)
    colors = rng.uniform(0.0, 1.0, size=(n_colors, 3))

    clean_scores = np.array([model.predict_image(img) for img in images])
    col_scores = []
    col_labels = []
    spoof_colorized_accepted = 0
    spoof_colorized_total = 0
    for img, y in zip(images, labels):
        for color in colors:
            score = model.predict_image(_colorize_integer(img, color))
            col_scores.append(score)
            col_labels.append(y)
            if y == SPOOFING:
                spoof_colorized_total += 1
                spoof_colorized_accepted += int(score >= 0.5)

    cauc = auc(clean_scores, labels)
    ccauc = auc(np.concatenate([clean_scores, col_scores]),
                np.concatenate([labels, col_labels]))
    dmr = spoof_colorized_accepted / spoof_colorized_total
    return DefenseMetrics(cauc=cauc, ccauc=ccauc, dmr=dmr)


# ---------------------------------------------------------------------------
# benchmark data


def make_synthetic_dataset(n: int, seed: int = 0, size: int = 32):
    """Label-balanced benchmark: warm textured bonafide vs shadowed prints.

    Bonafide images are bright, warm-tinted and textured with no true-black
    pixels.  Spoofs are smoother, cool-tinted, and carry a deep print shadow
    clipped to exact zero.  Clean classes separate most easily on chroma (a
    color-fragile cue a naive model leans on), while the zero-valued shadow
    survives every color filter (scaling zero stays zero), leaving a
    color-robust cue for adversarial training to discover.
    """
    if n < 2:
        raise ValueError("need at least 2 samples")
    images = []
    labels = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        bona = i % 2 == 0
        lum = rng.uniform(130.0, 175.0)
        yy, xx = np.mgrid[0:size, 0:size]
        angle = rng.uniform(0, 2 * np.pi)
        gradient = ((xx - size / 2) * np.cos(angle)
                    + (yy - size / 2) * np.sin(angle)) / size
        base = lum * (1.0 + 0.20 * gradient)
        if bona:
            tint = np.array([1.0, rng.uniform(0.66, 0.76),
                             rng.uniform(0.52, 0.64)])
            texture = rng.normal(0.0, rng.uniform(38.0, 55.0),
                                 size=(size, size))
            field = np.clip(base + texture, 20.0, 245.0)
        else:
            tint = np.array([rng.uniform(0.56, 0.68), rng.uniform(0.86, 1.0),
                             rng.uniform(0.86, 1.0)])
            texture = rng.normal(0.0, rng.uniform(5.0, 12.0),
                                 size=(size, size))
            # deep print shadow clipped to exact zero; luminance elsewhere is
            # raised so class gray means stay comparable (the shadow, not a
            # brightness gap, is what must give the spoof away)
            sx = rng.uniform(0, size)
            sy = rng.choice(np.array([0.0, float(size)]))
            radius = rng.uniform(0.46 * size, 0.58 * size)
            d2 = (xx - sx) ** 2 + (yy - sy) ** 2
            shadow = d2 <= radius ** 2
            fraction = shadow.mean()
            field = np.clip((base + texture) / (1.0 - fraction), 20.0, 245.0)
            field = np.where(shadow, 0.0, field)
        pixels = np.clip(field[..., None] * tint[None, None, :], 0.0, 255.0)
        images.append(Image(pixels.astype(np.uint8), ColorMode.INTEGER))
        labels.append(BONAFIDE if bona else SPOOFING)
    return list(zip(images, labels))
