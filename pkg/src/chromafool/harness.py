"""Dataset generation, batch attack orchestration, metrics and reports.

A manifest is a plain CSV (``path,identity,label``) naming images, their
enrolled identities and ground-truth labels.  The synthetic generator
builds face-like spoof rasters (smooth ellipse-on-gradient compositions)
whose base tints are rejection-sampled away from the default gate's secret
chroma, together with one enrolled template per identity.  Batch runs
attack every spoof-labeled entry, aggregate the standard metric set and
serialize machine-readable reports.
"""

from __future__ import annotations

import csv
import io
import json
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image as _PILImage

from .attack import (AttackConfig, AttackRecord, attack_one,
                     measure_adversariality)
from .imagecore import ColorMode, Image, load_image, save_image
from .oracle import (DEFAULT_SECRET_CHROMA, DEFAULT_TOLERANCE, Gallery,
                     OracleSession, OracleSpec, build_oracle, enroll_template,
                     TEMPLATE_SIZE)
from .transforms import TransformRanges

__all__ = [
    "ManifestEntry",
    "Manifest",
    "MetricsReport",
    "load_manifest",
    "save_manifest",
    "generate_synthetic",
    "load_gallery",
    "run_batch",
    "compute_metrics",
    "emit_report",
    "clean_adversariality",
    "QUALITY_PASS_THRESHOLD",
    "FR_CURVE_BUDGETS",
]

QUALITY_PASS_THRESHOLD = 0.3
FR_CURVE_BUDGETS = (10, 100, 1_000, 10_000, 100_000)
SYNTHETIC_SIZE = 256

#: Minimum chroma distance between a generated tint and the secret chroma,
#: and the floor on the green chroma component; together they keep clean
#: images decisively rejected even under chroma-bending transforms.
_TINT_MARGIN = 0.20
_TINT_MIN_GREEN = 0.26


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    identity: str
    label: str  # "spoof" | "bonafide"

    def __post_init__(self):
        if self.label not in ("spoof", "bonafide"):
            raise ValueError(f"label must be spoof|bonafide, got {self.label!r}")
        if not self.identity:
            raise ValueError("identity must be a non-empty string")


@dataclass(frozen=True)
class Manifest:
    entries: tuple
    base_dir: str = "."

    def __post_init__(self):
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("manifest paths must be unique")

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def resolve(self, entry: ManifestEntry) -> str:
        if os.path.isabs(entry.path):
            return entry.path
        return os.path.join(self.base_dir, entry.path)

    def spoof_entries(self):
        return [e for e in self.entries if e.label == "spoof"]


def load_manifest(path) -> Manifest:
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"path", "identity", "label"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ValueError(
                f"manifest header must be path,identity,label, got {reader.fieldnames}"
            )
        for row in reader:
            entries.append(ManifestEntry(row["path"], row["identity"],
                                         row["label"]))
    return Manifest(entries=tuple(entries),
                    base_dir=os.path.dirname(os.path.abspath(path)))


def save_manifest(manifest: Manifest, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "identity", "label"])
        for e in manifest:
            writer.writerow([e.path, e.identity, e.label])


# ---------------------------------------------------------------------------
# synthetic data


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _synthetic_luminance(rng, size) -> np.ndarray:
    """Smooth face-like luminance field: gradient, ellipse, broad soft blobs.

    All structure is low-frequency (feature radii of 40+ pixels, faint
    grain), so the enrolled-template correlation degrades gently under the
    moderate geometric jitter of the transform suite.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx, cy = size / 2.0, size / 2.0
    angle = rng.uniform(0.0, 2.0 * np.pi)
    gradient = ((xx - cx) * np.cos(angle) + (yy - cy) * np.sin(angle)) / size
    base = rng.uniform(120.0, 165.0)
    field = base * (1.0 + rng.uniform(0.10, 0.25) * gradient)

    ex = cx + rng.uniform(-25.0, 25.0)
    ey = cy + rng.uniform(-25.0, 25.0)
    ea = rng.uniform(60.0, 95.0)
    eb = rng.uniform(75.0, 110.0)
    theta = rng.uniform(0.0, np.pi)
    xr = (xx - ex) * np.cos(theta) + (yy - ey) * np.sin(theta)
    yr = -(xx - ex) * np.sin(theta) + (yy - ey) * np.cos(theta)
    q = np.sqrt((xr / ea) ** 2 + (yr / eb) ** 2)
    field += rng.uniform(30.0, 55.0) * _smoothstep(1.0 - q)

    for _ in range(2):
        bx = rng.uniform(0.25 * size, 0.75 * size)
        by = rng.uniform(0.25 * size, 0.75 * size)
        br = rng.uniform(40.0, 90.0)
        amp = rng.uniform(-18.0, 18.0)
        d2 = ((xx - bx) ** 2 + (yy - by) ** 2) / (2.0 * br ** 2)
        field += amp * np.exp(-d2)

    field += rng.normal(0.0, 1.5, size=(size, size))
    return np.clip(field, 12.0, 243.0)


def _sample_tint(rng, secret) -> np.ndarray:
    """Per-channel tint multipliers whose chroma avoids the secret region."""
    secret = np.asarray(secret, dtype=np.float64)
    while True:
        m = rng.uniform(0.55, 1.0, size=3)
        m /= m.max()
        chroma = m / m.sum()
        if chroma[1] < _TINT_MIN_GREEN:
            continue
        if np.linalg.norm(chroma - secret) < _TINT_MARGIN:
            continue
        return m


def generate_synthetic(n: int, seed: int, out_dir,
                       secret_chroma=DEFAULT_SECRET_CHROMA,
                       tolerance=DEFAULT_TOLERANCE) -> Manifest:
    """Write n spoof-labeled synthetic images, templates and a manifest.

    Deterministic under ``seed``.  Every image is checked against the
    default gate configuration during generation: tints are re-drawn until
    the image is rejected (labeled spoofing), so the emitted dataset is a
    valid attack corpus by construction.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    images_dir = os.path.join(out_dir, "images")
    templates_dir = os.path.join(out_dir, "templates")
    os.makedirs(images_dir, exist_ok=True)
    os.makedirs(templates_dir, exist_ok=True)
    gate = build_oracle(OracleSpec("builtin", "colorgate"),
                        secret_chroma=secret_chroma, tolerance=tolerance)

    entries = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        identity = f"id_{i:03d}"
        for _ in range(64):
            lum = _synthetic_luminance(rng, SYNTHETIC_SIZE)
            tint = _sample_tint(rng, secret_chroma)
            pixels = np.clip(lum[..., None] * tint[None, None, :], 0.0, 255.0)
            img = Image(pixels.astype(np.uint8), ColorMode.INTEGER)
            if gate.verdict(img).label == 0:
                break
        else:
            raise RuntimeError(f"could not draw a rejected tint for image {i}")
        rel = os.path.join("images", f"img_{i:03d}.png")
        save_image(img, os.path.join(out_dir, rel))
        template = enroll_template(img)
        _PILImage.fromarray(
            np.clip(np.rint(template), 0, 255).astype(np.uint8), mode="L"
        ).save(os.path.join(templates_dir, f"{identity}.png"))
        entries.append(ManifestEntry(rel, identity, "spoof"))

    manifest = Manifest(entries=tuple(entries),
                        base_dir=os.path.abspath(out_dir))
    save_manifest(manifest, os.path.join(out_dir, "manifest.csv"))
    return manifest


def load_gallery(manifest: Manifest) -> Gallery:
    """Enrolled templates for every manifest identity.

    Prefers ``templates/<identity>.png`` next to the manifest; falls back to
    enrolling the image itself.
    """
    gallery = Gallery()
    seen = set()
    for entry in manifest:
        if entry.identity in seen:
            continue
        seen.add(entry.identity)
        template_path = os.path.join(manifest.base_dir, "templates",
                                     f"{entry.identity}.png")
        if os.path.exists(template_path):
            with _PILImage.open(template_path) as im:
                if im.mode != "L" or im.size != (TEMPLATE_SIZE, TEMPLATE_SIZE):
                    raise ValueError(f"bad template file {template_path}")
                template = np.asarray(im, dtype=np.float64)
            gallery.enroll(entry.identity, template)
        else:
            gallery.enroll_image(entry.identity,
                                 load_image(manifest.resolve(entry)))
    return gallery


# ---------------------------------------------------------------------------
# batch attacks


def derive_seed(seed: int, image_id: str) -> int:
    """Stable per-image seed: mixes the run seed with a CRC of the id."""
    mixed = np.random.SeedSequence([int(seed), zlib.crc32(image_id.encode())])
    return int(mixed.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class _Task:
    image_path: str
    image_id: str
    identity: str
    config: AttackConfig
    oracle_spec: OracleSpec
    secret_chroma: tuple
    tolerance: float
    gallery: Gallery | None
    out_dir: str | None


def _run_one(task: _Task) -> AttackRecord:
    oracle = build_oracle(task.oracle_spec, secret_chroma=task.secret_chroma,
                          tolerance=task.tolerance, gallery=task.gallery)
    session = OracleSession(oracle, task.config.query_limit)
    try:
        img = load_image(task.image_path)
        record, x_adv = attack_one(img, session, task.config,
                                   expected_identity=task.identity,
                                   image_id=task.image_id)
        if x_adv is not None and task.out_dir is not None:
            adv_dir = os.path.join(task.out_dir, "adv")
            os.makedirs(adv_dir, exist_ok=True)
            save_image(x_adv, os.path.join(adv_dir, f"{task.image_id}.png"))
    finally:
        session.close()
    return record


def run_batch(manifest: Manifest, oracle_spec: OracleSpec,
              config: AttackConfig, out_dir=None, workers=None,
              deterministic=False, secret_chroma=DEFAULT_SECRET_CHROMA,
              tolerance=DEFAULT_TOLERANCE, gallery: Gallery | None = None,
              quality_threshold: float = QUALITY_PASS_THRESHOLD):
    """Attack every spoof-labeled manifest entry and aggregate metrics.

    Each image gets its own oracle session and a seed derived from the run
    seed and the image id, so results do not depend on scheduling; records
    are sorted by image id before aggregation.  ``deterministic`` forces a
    serial run.
    """
    spoof = manifest.spoof_entries()
    if not spoof:
        raise ValueError("manifest contains no spoof-labeled entries")
    if gallery is None and oracle_spec.kind == "builtin":
        gallery = load_gallery(manifest)

    tasks = []
    for entry in spoof:
        image_id = os.path.splitext(os.path.basename(entry.path))[0]
        cfg = replace(config, seed=derive_seed(config.seed, image_id))
        tasks.append(_Task(
            image_path=manifest.resolve(entry), image_id=image_id,
            identity=entry.identity, config=cfg, oracle_spec=oracle_spec,
            secret_chroma=tuple(secret_chroma), tolerance=tolerance,
            gallery=gallery, out_dir=out_dir,
        ))

    if deterministic or (workers is not None and workers <= 1):
        records = [_run_one(t) for t in tasks]
    else:
        n_workers = workers or os.cpu_count() or 1
        if n_workers <= 1:
            records = [_run_one(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                records = list(pool.map(_run_one, tasks))

    records.sort(key=lambda r: r.image_id)
    report = compute_metrics(records, quality_threshold=quality_threshold)
    if out_dir is not None:
        emit_report(records, report, out_dir)
    return records, report


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class MetricsReport:
    fr: float
    aq: float | None
    aqs: float | None
    oasr: float
    adv_m: float
    adv_s: float
    n_images: int
    n_successes: int
    query_histogram: dict
    fr_curve: tuple

    def to_dict(self) -> dict:
        return {
            "fr": self.fr,
            "aq": self.aq,
            "aqs": self.aqs,
            "oasr": self.oasr,
            "adv_m": self.adv_m,
            "adv_s": self.adv_s,
            "n_images": self.n_images,
            "n_successes": self.n_successes,
            "query_histogram": {str(k): v for k, v in
                                sorted(self.query_histogram.items())},
            "fr_curve": [{"budget": b, "fr": fr} for b, fr in self.fr_curve],
        }


def compute_metrics(records, quality_threshold: float = QUALITY_PASS_THRESHOLD,
                    budgets=FR_CURVE_BUDGETS) -> MetricsReport:
    """Aggregate per-image records into the standard metric set.

    FR is the success fraction within the query limit, AQ the mean queries
    over successes, AQS the mean final quality over successes, OASR the
    fraction whose adversarial image also clears the quality threshold and
    matches the right identity, and Adv-m/Adv-s the mean and standard
    deviation of per-image adversariality.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    n = len(records)
    successes = [r for r in records if r.success]
    queries = [r.queries_used for r in successes]
    fr = len(successes) / n
    aq = float(np.mean(queries)) if queries else None
    aqs = float(np.mean([r.final_quality for r in successes])) if successes else None
    oasr = sum(
        1 for r in successes
        if r.final_quality >= quality_threshold and r.matched_correct_identity
    ) / n
    adv = np.array([r.adversariality for r in records], dtype=np.float64)
    histogram = {int(b): sum(1 for r in successes if r.queries_used <= b)
                 for b in budgets}
    curve = tuple((int(b), histogram[int(b)] / n) for b in budgets)
    return MetricsReport(
        fr=fr, aq=aq, aqs=aqs, oasr=oasr,
        adv_m=float(adv.mean()), adv_s=float(adv.std()),
        n_images=n, n_successes=len(successes),
        query_histogram=histogram, fr_curve=curve,
    )


_CSV_COLUMNS = (
    "image_id", "success", "vacuous", "queries_used", "verification_queries",
    "filter_r", "filter_g", "filter_b", "adversariality", "final_quality",
    "matched_correct_identity", "iterations",
)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for r in records:
        filt = r.final_filter
        writer.writerow([
            r.image_id, int(r.success), int(r.vacuous), r.queries_used,
            r.verification_queries,
            "" if filt is None else repr(filt.r),
            "" if filt is None else repr(filt.g),
            "" if filt is None else repr(filt.b),
            repr(r.adversariality), repr(r.final_quality),
            int(r.matched_correct_identity), r.iterations,
        ])
    return buf.getvalue()


def records_from_csv(text: str):
    from .imagecore import ColorFilter

    reader = csv.DictReader(io.StringIO(text))
    records = []
    for row in reader:
        filt = None
        if row["filter_r"] != "":
            filt = ColorFilter(float(row["filter_r"]), float(row["filter_g"]),
                               float(row["filter_b"]))
        records.append(AttackRecord(
            image_id=row["image_id"],
            success=bool(int(row["success"])),
            vacuous=bool(int(row["vacuous"])),
            queries_used=int(row["queries_used"]),
            verification_queries=int(row["verification_queries"]),
            final_filter=filt,
            adversariality=float(row["adversariality"]),
            final_quality=float(row["final_quality"]),
            matched_correct_identity=bool(int(row["matched_correct_identity"])),
            iterations=int(row["iterations"]),
        ))
    return records


def emit_report(records, report: MetricsReport, out_dir) -> dict:
    """Write records.json/report.json/records.csv/fr_curve.csv under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "records_json": os.path.join(out_dir, "records.json"),
        "report_json": os.path.join(out_dir, "report.json"),
        "records_csv": os.path.join(out_dir, "records.csv"),
        "fr_curve_csv": os.path.join(out_dir, "fr_curve.csv"),
    }
    with open(paths["records_json"], "w") as fh:
        json.dump({"records": [r.to_dict() for r in records]}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths["report_json"], "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths["records_csv"], "w") as fh:
        fh.write(records_to_csv(records))
    with open(paths["fr_curve_csv"], "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["budget", "fooling_rate"])
        for budget, fr in report.fr_curve:
            writer.writerow([budget, repr(fr)])
    return paths


def clean_adversariality(manifest: Manifest, oracle_spec: OracleSpec,
                         ranges: TransformRanges, n_samples: int, seed: int,
                         secret_chroma=DEFAULT_SECRET_CHROMA,
                         tolerance=DEFAULT_TOLERANCE):
    """Per-image accepted fraction of untouched images under the transforms."""
    oracle = build_oracle(oracle_spec, secret_chroma=secret_chroma,
                          tolerance=tolerance)
    out = []
    for entry in manifest:
        session = OracleSession(oracle, n_samples + 1)
        rng = np.random.default_rng(derive_seed(seed, entry.identity))
        img = load_image(manifest.resolve(entry))
        out.append(measure_adversariality(img, None, session, ranges,
                                          n_samples, rng))
    return out
