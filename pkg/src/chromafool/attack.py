"""Color-filter attack engine: fitness forms, elastic stop, per-image attack.

Three variants share one search loop:

* ``as`` attacks only the anti-spoofing label: one untransformed query per
  candidate, stop on the first fooling filter.
* ``woq`` adds the quality-preservation term but still no transforms.
* ``full`` estimates fitness over a batch of sampled transforms so the
  filter survives physical variation, and stops once the fooling
  expectation and fooled-sample quality both clear their thresholds.

Candidates are evaluated on integer rasters (what a camera would hand the
pipeline), so built-in and wire-attached oracles see identical pixels.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import pso, transforms
from .imagecore import (ColorFilter, ColorMode, Image, grayscale, quantize,
                        to_working)
from .oracle import BONAFIDE, SPOOFING, OracleSession, QueryBudgetExceeded

__all__ = [
    "AttackVariant",
    "AttackConfig",
    "AttackRecord",
    "FitnessStats",
    "colorize_gray",
    "colorize_and_transform",
    "fitness_as",
    "fitness_alg1",
    "fitness_eq5",
    "elastic_stop",
    "attack_one",
    "measure_adversariality",
]

DEFAULT_QUERY_LIMIT = 10_000
FULL_QUERY_LIMIT = 150_000


class AttackVariant(enum.Enum):
    AS = "as"
    WITHOUT_TRANSFORMS = "woq"
    FULL = "full"


@dataclass(frozen=True)
class AttackConfig:
    """Effective attack parameters.

    ``n_samples`` is forced to 1 and ``quality_weight`` to 0 for the
    ``as`` variant (1 sample, weight kept, for ``woq``); the query limit
    defaults to 10,000 for the untransformed variants and 150,000 for
    ``full``, whose per-iteration cost is n_particles * n_samples queries.
    """

    variant: AttackVariant = AttackVariant.FULL
    quality_weight: float = 0.6
    n_samples: int = 40
    query_limit: int | None = None
    fitness_form: str = "alg1"
    fool_expectation_max: float = 0.1
    fooled_quality_min: float = 0.5
    ranges: transforms.TransformRanges = field(
        default_factory=transforms.TransformRanges)
    pso: pso.PsoConfig = field(default_factory=pso.PsoConfig)
    seed: int = 0
    restart_on_stagnation: bool = True

    def __post_init__(self):
        if isinstance(self.variant, str):
            object.__setattr__(self, "variant", AttackVariant(self.variant))
        if self.quality_weight < 0:
            raise ValueError("quality_weight must be >= 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.fitness_form not in ("alg1", "eq5"):
            raise ValueError("fitness_form must be 'alg1' or 'eq5'")
        for name in ("fool_expectation_max", "fooled_quality_min"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} outside [0, 1]")
        if self.variant in (AttackVariant.AS, AttackVariant.WITHOUT_TRANSFORMS):
            object.__setattr__(self, "n_samples", 1)
        if self.variant is AttackVariant.AS:
            object.__setattr__(self, "quality_weight", 0.0)
        if self.query_limit is None:
            limit = (FULL_QUERY_LIMIT if self.variant is AttackVariant.FULL
                     else DEFAULT_QUERY_LIMIT)
            object.__setattr__(self, "query_limit", limit)
        if self.query_limit < 1:
            raise ValueError("query_limit must be positive")


@dataclass(frozen=True)
class FitnessStats:
    """Outcome of one fitness evaluation at a fixed filter."""

    err: int                     # samples classified Bonafide (fooled)
    n_samples: int
    err_q: float                 # sum of (1 - quality) over fooled samples
    mean_fooled_quality: float   # 0.0 when nothing fooled

    @property
    def fool_rate(self) -> float:
        return self.err / self.n_samples

    def fitness(self, form: str, quality_weight: float) -> float:
        lam = quality_weight
        base = 1.0 - self.err / self.n_samples
        if form == "alg1":
            penalty = lam * self.err_q / self.err if self.err > 0 else 0.0
        else:
            penalty = lam * self.err_q / self.n_samples
        return base + penalty


@dataclass
class AttackRecord:
    """Per-image attack outcome; one JSON object per image downstream."""

    image_id: str
    success: bool
    vacuous: bool
    queries_used: int
    verification_queries: int
    final_filter: ColorFilter | None
    adversariality: float
    final_quality: float
    matched_correct_identity: bool
    iterations: int

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "success": self.success,
            "vacuous": self.vacuous,
            "queries_used": self.queries_used,
            "verification_queries": self.verification_queries,
            "final_filter": (None if self.final_filter is None else
                             [self.final_filter.r, self.final_filter.g,
                              self.final_filter.b]),
            "adversariality": self.adversariality,
            "final_quality": self.final_quality,
            "matched_correct_identity": self.matched_correct_identity,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackRecord":
        filt = d["final_filter"]
        return cls(
            image_id=d["image_id"],
            success=bool(d["success"]),
            vacuous=bool(d["vacuous"]),
            queries_used=int(d["queries_used"]),
            verification_queries=int(d["verification_queries"]),
            final_filter=None if filt is None else ColorFilter(*filt),
            adversariality=float(d["adversariality"]),
            final_quality=float(d["final_quality"]),
            matched_correct_identity=bool(d["matched_correct_identity"]),
            iterations=int(d["iterations"]),
        )


# ---------------------------------------------------------------------------
# colorization helpers


def colorize_gray(gray: np.ndarray, alpha) -> np.ndarray:
    """Integer-mode colorization from a precomputed gray raster.

    Equals apply_filter(img, filter, INTEGER).pixels without recomputing
    the grayscale; ``alpha`` is any length-3 sequence in [0, 1].
    """
    a = np.asarray(alpha, dtype=np.float64).reshape(3)
    out = np.empty(gray.shape + (3,), dtype=np.uint8)
    for c in range(3):
        out[..., c] = np.floor(np.clip(a[c] * gray, 0.0, 255.0)).astype(np.uint8)
    return out


def colorize_and_transform(img: Image, filt: ColorFilter,
                           params: transforms.TransformParams) -> Image:
    """Colorize in integer mode, transform, and quantize back to a raster."""
    gray = grayscale(img)
    colorized = Image(colorize_gray(gray, filt.as_array()), ColorMode.INTEGER)
    return quantize(transforms.apply(colorized, params))


# ---------------------------------------------------------------------------
# fitness evaluation


def _evaluate_candidate(gray: np.ndarray, alpha, session: OracleSession,
                        config: AttackConfig,
                        rng: np.random.Generator) -> FitnessStats:
    """Query the oracle on n_samples transformed colorizations of ``alpha``."""
    n = config.n_samples
    if session.remaining < n:
        raise QueryBudgetExceeded(
            f"need {n} queries, only {session.remaining} remain"
        )
    colorized = colorize_gray(gray, alpha)
    if config.variant is AttackVariant.FULL:
        params = [transforms.sample_params(config.ranges, rng)
                  for _ in range(n)]
        batch = transforms.apply_batch(colorized, params)
    else:
        batch = colorized[None]
    err = 0
    err_q = 0.0
    quality_sum = 0.0
    for i in range(n):
        verdict = session.classify(Image.trusted(batch[i], ColorMode.INTEGER))
        if verdict.label == BONAFIDE:
            err += 1
            err_q += 1.0 - verdict.quality
            quality_sum += verdict.quality
    mean_q = quality_sum / err if err > 0 else 0.0
    return FitnessStats(err=err, n_samples=n, err_q=err_q,
                        mean_fooled_quality=mean_q)


def fitness_as(img: Image, filt: ColorFilter, session: OracleSession) -> float:
    """Indicator fitness: 1 while the untransformed colorization is rejected."""
    gray = grayscale(img)
    verdict = session.classify(Image(colorize_gray(gray, filt.as_array()),
                                     ColorMode.INTEGER))
    return 1.0 if verdict.label == SPOOFING else 0.0


def fitness_alg1(img: Image, filt: ColorFilter, session: OracleSession,
                 config: AttackConfig, rng: np.random.Generator) -> float:
    """Batch fitness with the quality penalty averaged over fooled samples."""
    stats = _evaluate_candidate(grayscale(img), filt.as_array(), session,
                                config, rng)
    return stats.fitness("alg1", config.quality_weight)


def fitness_eq5(img: Image, filt: ColorFilter, session: OracleSession,
                config: AttackConfig, rng: np.random.Generator) -> float:
    """Batch fitness with the quality penalty averaged over all samples."""
    stats = _evaluate_candidate(grayscale(img), filt.as_array(), session,
                                config, rng)
    return stats.fitness("eq5", config.quality_weight)


def elastic_stop(stats: FitnessStats, config: AttackConfig) -> bool:
    """True once fooling is near-certain and fooled samples keep quality.

    Requires err / n >= 1 - fool_expectation_max and the mean quality over
    fooled samples >= fooled_quality_min; never true while nothing fools.
    """
    if stats.err == 0:
        return False
    return (stats.fool_rate >= 1.0 - config.fool_expectation_max
            and stats.mean_fooled_quality >= config.fooled_quality_min)


class _BestTracker:
    """Mirrors the swarm's global best, keeping the matching FitnessStats.

    Strict-improvement updates reproduce the swarm's tie-breaking exactly,
    so ``stats`` always describes the evaluation at the current global best.
    """

    def __init__(self):
        self.fitness = np.inf
        self.position = None
        self.stats = None

    def observe(self, position, value: float, stats: FitnessStats | None):
        if value < self.fitness:
            self.fitness = value
            self.position = np.array(position, dtype=np.float64)
            self.stats = stats


# ---------------------------------------------------------------------------
# the per-image attack


def _vacuous_record(image_id, queries) -> AttackRecord:
    return AttackRecord(
        image_id=image_id, success=False, vacuous=True, queries_used=queries,
        verification_queries=0, final_filter=None, adversariality=0.0,
        final_quality=0.0, matched_correct_identity=False, iterations=0,
    )


def attack_one(img: Image, session: OracleSession, config: AttackConfig,
               expected_identity: str | None = None,
               image_id: str = "image") -> tuple[AttackRecord, Image | None]:
    """Attack a single image; returns its record and the adversarial raster.

    The input must be labeled Spoofing at the start (verified with one
    metered query; an already-accepted input short-circuits as vacuous).
    The swarm search restarts with a fresh initialization whenever it
    stagnates before finding any fooling filter and budget remains.  On
    success the best filter is re-evaluated on a fresh verification batch —
    metered separately, with the limit extended by exactly that batch — to
    report adversariality and pick the highest-quality fooled sample as the
    returned adversarial image.
    """
    working = quantize(to_working(img))
    start_count = session.count
    try:
        first = session.classify(working)
    except QueryBudgetExceeded:
        return AttackRecord(
            image_id=image_id, success=False, vacuous=False,
            queries_used=0, verification_queries=0, final_filter=None,
            adversariality=0.0, final_quality=0.0,
            matched_correct_identity=False, iterations=0,
        ), None
    if first.label == BONAFIDE:
        return _vacuous_record(image_id, session.count - start_count), None

    gray = grayscale(working)
    rng = np.random.default_rng(config.seed)
    tracker = _BestTracker()
    variant = config.variant

    if variant is AttackVariant.AS:
        def fitness(alpha):
            verdict = session.classify(
                Image.trusted(colorize_gray(gray, alpha), ColorMode.INTEGER))
            value = 1.0 if verdict.label == SPOOFING else 0.0
            stats = FitnessStats(
                err=1 - int(value), n_samples=1,
                err_q=(1.0 - verdict.quality) * (1 - int(value)),
                mean_fooled_quality=verdict.quality if value == 0.0 else 0.0)
            tracker.observe(alpha, value, stats)
            return value

        def stop(state):
            return state.gbest_fitness == 0.0
    else:
        def fitness(alpha):
            stats = _evaluate_candidate(gray, alpha, session, config, rng)
            value = stats.fitness(config.fitness_form, config.quality_weight)
            tracker.observe(alpha, value, stats)
            return value

        def stop(state):
            return tracker.stats is not None and elastic_stop(tracker.stats,
                                                              config)

    def fooled_at_best() -> bool:
        return tracker.stats is not None and tracker.stats.err > 0

    iterations = 0
    while True:
        try:
            result = pso.optimize(config.pso, fitness, stop=stop, rng=rng)
        except QueryBudgetExceeded:
            break
        iterations += result.iterations
        if fooled_at_best():
            break
        if not config.restart_on_stagnation:
            break
        if session.remaining < config.n_samples * config.pso.n_particles:
            break

    queries_used = session.count - start_count
    success = fooled_at_best() and queries_used <= config.query_limit
    if not success or tracker.position is None:
        return AttackRecord(
            image_id=image_id, success=False, vacuous=False,
            queries_used=queries_used, verification_queries=0,
            final_filter=(None if tracker.position is None
                          else ColorFilter.from_array(tracker.position)),
            adversariality=0.0, final_quality=0.0,
            matched_correct_identity=False, iterations=iterations,
        ), None

    # verification pass at the best filter
    best = tracker.position
    session.extend_limit(config.n_samples + 1)
    before = session.count
    colorized = colorize_gray(gray, best)
    if variant is AttackVariant.FULL:
        params = [transforms.sample_params(config.ranges, rng)
                  for _ in range(config.n_samples)]
        batch = transforms.apply_batch(colorized, params)
    else:
        batch = colorized[None]
    fooled = []
    print_verdict = None
    for i in range(len(batch)):
        verdict = session.classify(Image.trusted(batch[i], ColorMode.INTEGER))
        if verdict.label == BONAFIDE:
            fooled.append((i, verdict))
    if variant is AttackVariant.FULL:
        # the identity stage sees the adversarial print itself: geometric
        # capture jitter is an anti-spoofing concern, not a matching one
        print_verdict = session.classify(
            Image.trusted(colorized, ColorMode.INTEGER))
    else:
        print_verdict = fooled[0][1] if fooled else None
    verification_queries = session.count - before

    adversariality = len(fooled) / config.n_samples
    matched = (print_verdict is not None
               and print_verdict.label == BONAFIDE
               and expected_identity is not None
               and print_verdict.match_id == expected_identity)
    if fooled:
        idx, verdict = max(fooled, key=lambda item: item[1].quality)
        x_adv = Image(batch[idx], ColorMode.INTEGER)
        final_quality = verdict.quality
    else:
        x_adv = None
        final_quality = 0.0
        matched = False

    return AttackRecord(
        image_id=image_id, success=True, vacuous=False,
        queries_used=queries_used, verification_queries=verification_queries,
        final_filter=ColorFilter.from_array(best),
        adversariality=adversariality, final_quality=final_quality,
        matched_correct_identity=matched, iterations=iterations,
    ), x_adv


def measure_adversariality(img: Image, filt: ColorFilter | None,
                           session: OracleSession,
                           ranges: transforms.TransformRanges,
                           n_samples: int, rng: np.random.Generator) -> float:
    """Fraction of transform draws under which the image is accepted.

    Pass ``filt`` as None for the clean-image baseline (no colorization).
    """
    working = quantize(to_working(img))
    if filt is None:
        base = working.as_float()
    else:
        base = colorize_gray(grayscale(working), filt.as_array())
    params = [transforms.sample_params(ranges, rng) for _ in range(n_samples)]
    batch = transforms.apply_batch(np.asarray(base, dtype=np.float64), params)
    fooled = 0
    for i in range(n_samples):
        verdict = session.classify(Image.trusted(batch[i], ColorMode.INTEGER))
        if verdict.label == BONAFIDE:
            fooled += 1
    return fooled / n_samples
