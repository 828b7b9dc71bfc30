"""Universal color extraction and fixed-color evaluation.

Converged per-image filters tend to pile up around a few directions in
color space.  Clustering them yields representative "Color IDs" whose
sample-agnostic fooling power is then measured by colorizing a whole
dataset with one fixed color and sampling transforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attack import colorize_gray
from .imagecore import ColorFilter, ColorMode, Image, grayscale, quantize, to_working
from .oracle import BONAFIDE, OracleSession
from .transforms import TransformRanges, apply_batch, sample_params

__all__ = ["ColorCluster", "UniversalEvaluation", "cluster_filters",
           "evaluate_universal"]

_KMEANS_RESTARTS = 50
_KMEANS_MAX_ITER = 100


@dataclass(frozen=True)
class ColorCluster:
    """One extracted color pattern: its center and the filters it absorbed."""

    center: ColorFilter
    member_count: int
    member_ids: tuple

    def to_dict(self) -> dict:
        return {
            "center_rgb": [self.center.r, self.center.g, self.center.b],
            "member_count": self.member_count,
            "member_ids": list(self.member_ids),
        }


@dataclass(frozen=True)
class UniversalEvaluation:
    """Dataset-level scores of one fixed color."""

    fr: float
    aqs: float | None
    oasr: float

    def to_dict(self) -> dict:
        return {"fr": self.fr, "aqs": self.aqs, "oasr": self.oasr}


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator):
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass sits on existing centers; collapse duplicates
            centers[j] = points[0]
            continue
        probs = d2 / total
        idx = int(rng.choice(n, p=probs))
        centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(points: np.ndarray, centers: np.ndarray):
    assign = None
    for _ in range(_KMEANS_MAX_ITER):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(len(centers)):
            members = points[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    wcss = float(d2[np.arange(len(points)), assign].sum())
    return centers, assign, wcss


def cluster_filters(filters, k: int, seed: int = 0,
                    member_ids=None) -> list[ColorCluster]:
    """k-means over converged filters with k-means++ seeding and 50 restarts.

    Returns clusters ordered by descending member count (Color ID 1 first),
    ties broken by lexicographic center.  With fewer distinct filters than
    k, duplicates collapse onto one center and the excess clusters come out
    empty.  Deterministic for a fixed seed.
    """
    points = np.array([
        f.as_array() if isinstance(f, ColorFilter) else np.asarray(f, float)
        for f in filters
    ], dtype=np.float64)
    if k < 1:
        raise ValueError("k must be positive")
    if len(points) < k:
        raise ValueError(f"need at least k={k} filters, got {len(points)}")
    if member_ids is None:
        member_ids = [str(i) for i in range(len(points))]
    if len(member_ids) != len(points):
        raise ValueError("member_ids length must match filters")

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(_KMEANS_RESTARTS):
        centers = _kmeanspp_init(points, k, rng)
        centers, assign, wcss = _lloyd(points, centers.copy())
        if best is None or wcss < best[2]:
            best = (centers, assign, wcss)
    centers, assign, _ = best

    clusters = []
    for j in range(k):
        ids = tuple(member_ids[i] for i in np.flatnonzero(assign == j))
        center = np.clip(centers[j], 0.0, 1.0)
        clusters.append(ColorCluster(
            center=ColorFilter.from_array(center),
            member_count=len(ids),
            member_ids=ids,
        ))
    clusters.sort(key=lambda c: (-c.member_count,
                                 (c.center.r, c.center.g, c.center.b)))
    return clusters


def evaluate_universal(color: ColorFilter, entries, session: OracleSession,
                       ranges: TransformRanges, n_samples: int,
                       rng: np.random.Generator,
                       quality_threshold: float = 0.3) -> UniversalEvaluation:
    """Measure one fixed color across a dataset.

    ``entries`` is a sequence of (Image, expected_identity-or-None).  Every
    image is colorized with the same filter and queried under ``n_samples``
    fresh transform draws — exactly n_samples * len(entries) queries.  FR
    counts images with at least one accepted sample; AQS averages quality
    over all accepted samples; OASR counts images owning an accepted sample
    that also clears the quality threshold and matches the right identity.
    """
    entries = list(entries)
    if not entries:
        raise ValueError("empty evaluation dataset")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    fooled_images = 0
    passed_images = 0
    fooled_qualities = []
    for img, identity in entries:
        working = quantize(to_working(img))
        colorized = colorize_gray(grayscale(working), color.as_array())
        params = [sample_params(ranges, rng) for _ in range(n_samples)]
        batch = apply_batch(colorized, params)
        any_fooled = False
        any_passed = False
        for i in range(n_samples):
            verdict = session.classify(Image.trusted(batch[i], ColorMode.INTEGER))
            if verdict.label == BONAFIDE:
                any_fooled = True
                fooled_qualities.append(verdict.quality)
                if (verdict.quality >= quality_threshold
                        and identity is not None
                        and verdict.match_id == identity):
                    any_passed = True
        fooled_images += int(any_fooled)
        passed_images += int(any_passed)
    n = len(entries)
    aqs = float(np.mean(fooled_qualities)) if fooled_qualities else None
    return UniversalEvaluation(fr=fooled_images / n, aqs=aqs,
                               oasr=passed_images / n)
