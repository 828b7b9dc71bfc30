"""Acceptance suite: one test per release criterion, one PASS line each.

The end-to-end criteria share a session-scoped synthetic benchmark (100
spoof images, fixed seed) and one full-variant batch run whose converged
filters also feed the universal-color criterion.  Run with ``-s`` to see
the per-criterion lines.
"""

import time

import numpy as np
import pytest

from chromafool import harness, transforms as T
from chromafool.attack import (AttackConfig, AttackVariant, attack_one,
                               colorize_gray, fitness_as)
from chromafool.defense import (ColorAtConfig, bce_loss_and_grad,
                                defense_metrics, feature_map,
                                make_synthetic_dataset, train_colorat,
                                train_plain)
from chromafool.imagecore import (ColorFilter, ColorMode, Image, apply_filter,
                                  grayscale, load_image)
from chromafool.oracle import (ColorgateOracle, OracleSession, OracleSpec)
from chromafool.pso import PsoConfig, optimize
from chromafool.universal import cluster_filters, evaluate_universal

BENCH_SEED = 42
HOLDOUT_SEED = 10042


def announce(name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f"  ({detail})"
    print(line, flush=True)
    assert ok, line


# ---------------------------------------------------------------------------
# shared benchmark state


@pytest.fixture(scope="session")
def bench_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    harness.generate_synthetic(100, seed=BENCH_SEED, out_dir=root)
    return root


@pytest.fixture(scope="session")
def bench_manifest(bench_dir):
    return harness.load_manifest(bench_dir / "manifest.csv")


@pytest.fixture(scope="session")
def holdout_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("holdout")
    harness.generate_synthetic(100, seed=HOLDOUT_SEED, out_dir=root)
    return root


@pytest.fixture(scope="session")
def full_batch(bench_manifest, tmp_path_factory):
    out = tmp_path_factory.mktemp("full_out")
    config = AttackConfig(variant=AttackVariant.FULL, seed=BENCH_SEED)
    records, report = harness.run_batch(
        bench_manifest, OracleSpec("builtin", "colorgate"), config,
        out_dir=out, workers=2)
    return records, report


# ---------------------------------------------------------------------------
# criteria


def test_colorization_suite(rng):
    t0 = time.time()
    img = Image(np.full((16, 16, 3), 100, dtype=np.uint8), ColorMode.INTEGER)
    assert grayscale(img)[0, 0] == pytest.approx(100.0, abs=1e-9)
    red = np.zeros((16, 16, 3), dtype=np.uint8)
    red[..., 0] = 255
    assert grayscale(Image(red, ColorMode.INTEGER))[0, 0] == pytest.approx(
        76.5, abs=1e-9)
    green = np.zeros((16, 16, 3), dtype=np.uint8)
    green[..., 1] = 255
    assert grayscale(Image(green, ColorMode.INTEGER))[0, 0] == pytest.approx(
        150.45, abs=1e-9)

    uniform101 = Image(np.full((16, 16, 3), 101, dtype=np.uint8),
                       ColorMode.INTEGER)
    floored = apply_filter(uniform101, ColorFilter(0.5, 0, 0),
                           ColorMode.INTEGER)
    assert tuple(floored.pixels[0, 0]) == (50, 0, 0)

    worst = 0.0
    for _ in range(1000):
        pixels = rng.integers(0, 256, size=(12, 12, 3)).astype(np.uint8)
        img = Image(pixels, ColorMode.INTEGER)
        f = ColorFilter(*rng.uniform(0, 1, 3))
        lhs = grayscale(apply_filter(img, f, ColorMode.CONTINUOUS))
        rhs = (0.3 * f.r + 0.59 * f.g + 0.11 * f.b) * grayscale(img)
        scale = max(1.0, float(np.abs(rhs).max()))
        worst = max(worst, float(np.abs(lhs - rhs).max()) / scale)
    elapsed = time.time() - t0
    announce("colorization unit suite + commutation 1e-9 x1000",
             worst < 1e-9 and elapsed < 5.0,
             f"worst rel err {worst:.2e}, {elapsed:.1f}s")


def test_transform_suite(rng):
    t0 = time.time()
    ranges = T.TransformRanges()
    base = rng.integers(0, 256, size=(256, 256, 3)).astype(np.uint8)
    img = Image(base, ColorMode.INTEGER)

    identity = T.apply(img, T.identity_params())
    ok = bool(np.array_equal(identity.pixels, img.as_float()))

    for i in range(1000):
        p = T.sample_params(ranges, rng)
        assert ranges.illumination_coeff[0] <= p.illumination_coeff <= ranges.illumination_coeff[1]
        assert ranges.brightness_coeff[0] <= p.brightness_coeff <= ranges.brightness_coeff[1]
        assert ranges.gamma_coeff[0] <= p.gamma_coeff <= ranges.gamma_coeff[1]
        assert ranges.rotation[0] <= p.rotation <= ranges.rotation[1]
        assert p.kernel in ranges.gaussian_kernels
        if i < 200:
            out = T.apply(img, p)
            assert out.pixels.min() >= 0.0 and out.pixels.max() <= 255.0

    lit = T.illuminate(img, 150.0, (64, 80), 40.0)
    ok &= bool((lit.pixels >= img.as_float() - 1e-12).all())
    bright = T.gamma_correct(img, 2.2)
    ok &= bool((bright.pixels >= img.as_float() - 1e-9).all())
    elapsed = time.time() - t0
    announce("transform identity/monotonicity/range suite x1000",
             ok and elapsed < 30.0, f"{elapsed:.1f}s")


def test_pso_sphere_convergence():
    t0 = time.time()
    target = np.array([0.2, 0.5, 0.8])
    worst = 0.0
    for seed in range(20):
        result = optimize(PsoConfig(seed=seed),
                          lambda x: float(((x - target) ** 2).sum()))
        assert result.iterations <= 100
        worst = max(worst, float(np.abs(result.best_position - target).max()))
    elapsed = time.time() - t0
    announce("PSO sphere minimum 20/20 seeds within 1e-2",
             worst < 1e-2 and elapsed < 10.0,
             f"worst axis err {worst:.2e}, {elapsed:.1f}s")


def _random_simplex_point(rng):
    v = rng.dirichlet(np.ones(3))
    return tuple(float(x) for x in v)


def test_pso_vs_grid_equivalence(rng):
    t0 = time.time()
    axis = np.linspace(0.0, 1.0, 11)
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"),
                    axis=-1).reshape(-1, 3)
    base = np.clip(
        140.0 * np.array([0.8, 1.0, 0.75])[None, None, :]
        + rng.normal(0, 8, (256, 256, 3)), 1, 254).astype(np.uint8)
    img = Image(base, ColorMode.INTEGER)
    gray = grayscale(img)

    qualifying_runs = 0
    successes = 0
    configs_qualifying = 0
    attempts = 0
    while configs_qualifying < 20 and attempts < 60:
        attempts += 1
        secret = _random_simplex_point(rng)
        tolerance = float(rng.uniform(0.08, 0.18))
        gate = ColorgateOracle(secret_chroma=secret, tolerance=tolerance)
        if gate.verdict(img).label == 1:
            continue  # the probe image must start as a spoof under this gate
        grid_fooling = any(
            gate.verdict(Image.trusted(colorize_gray(gray, g),
                                       ColorMode.INTEGER)).label == 1
            for g in grid)
        if not grid_fooling:
            continue
        configs_qualifying += 1
        for seed in range(5):
            session = OracleSession(
                ColorgateOracle(secret_chroma=secret, tolerance=tolerance),
                10_000)
            cfg = AttackConfig(variant=AttackVariant.AS, seed=seed)
            record, _ = attack_one(img, session, cfg, image_id="probe")
            qualifying_runs += 1
            successes += int(record.success)
    elapsed = time.time() - t0
    rate = successes / qualifying_runs if qualifying_runs else 0.0
    announce("PSO-vs-grid oracle equivalence >=90% over 20 gates x5 seeds",
             configs_qualifying == 20 and rate >= 0.9 and elapsed < 300.0,
             f"success {successes}/{qualifying_runs}, {elapsed:.0f}s")


def test_end_to_end_as_variant(bench_manifest):
    t0 = time.time()
    config = AttackConfig(variant=AttackVariant.AS, seed=BENCH_SEED)
    records, report = harness.run_batch(
        bench_manifest, OracleSpec("builtin", "colorgate"), config,
        workers=2)
    elapsed = time.time() - t0
    announce("end-to-end AS variant FR>=0.95 with AQ<=1000",
             report.fr >= 0.95 and report.aq is not None
             and report.aq <= 1000.0,
             f"FR {report.fr:.2f}, AQ {report.aq:.0f}, {elapsed:.0f}s")


def test_end_to_end_full_variant(full_batch):
    records, report = full_batch
    succ = [r for r in records if r.success]
    adv_m = float(np.mean([r.adversariality for r in succ])) if succ else 0.0
    announce("end-to-end full variant Adv-m>=0.80 (succeeded) and OASR>=0.80",
             len(succ) > 0 and adv_m >= 0.80 and report.oasr >= 0.80,
             f"FR {report.fr:.2f}, Adv-m {adv_m:.3f}, OASR {report.oasr:.2f}, "
             f"AQ {report.aq:.0f}")


def test_clean_baseline(bench_manifest):
    t0 = time.time()
    subset = harness.Manifest(entries=bench_manifest.entries[:50],
                              base_dir=bench_manifest.base_dir)
    values = harness.clean_adversariality(
        subset, OracleSpec("builtin", "colorgate"), T.TransformRanges(),
        n_samples=40, seed=BENCH_SEED)
    mean_adv = float(np.mean(values))
    elapsed = time.time() - t0
    announce("clean-image adversariality below 0.05",
             mean_adv < 0.05, f"mean {mean_adv:.4f}, {elapsed:.0f}s")


def test_universal_colors(full_batch, holdout_dir):
    t0 = time.time()
    records, _ = full_batch
    converged = [(r.final_filter, r.image_id) for r in records
                 if r.success and r.final_filter is not None]
    assert len(converged) >= 50
    clusters = cluster_filters([c[0] for c in converged], k=3,
                               seed=BENCH_SEED,
                               member_ids=[c[1] for c in converged])
    manifest = harness.load_manifest(holdout_dir / "manifest.csv")
    gallery = harness.load_gallery(manifest)
    entries = [(load_image(manifest.resolve(e)), e.identity)
               for e in manifest]
    frs = []
    for i, cluster in enumerate(clusters, start=1):
        oracle = ColorgateOracle(gallery=gallery)
        session = OracleSession(oracle, 40 * len(entries) + 1)
        rng = np.random.default_rng([BENCH_SEED, i])
        result = evaluate_universal(cluster.center, entries, session,
                                    T.TransformRanges(), 40, rng)
        frs.append(result.fr)
    elapsed = time.time() - t0
    ordered = all(frs[i] >= frs[i + 1] for i in range(len(frs) - 1))
    announce("universal Color ID 1 FR>=0.6 on held-out set, ordering kept",
             frs[0] >= 0.6 and ordered,
             f"FRs {['%.2f' % f for f in frs]}, {elapsed:.0f}s")


def test_colorat_defense():
    t0 = time.time()
    data = make_synthetic_dataset(120, seed=7, size=20)
    labels = np.asarray([y for _, y in data])
    features = np.stack([feature_map(img) for img, _ in data])

    plain = train_plain(data, epochs=300, learning_rate=0.5, seed=0)
    m_plain = defense_metrics(plain, data, n_colors=5, seed=11)
    robust = train_colorat(data, ColorAtConfig(
        epochs=300, learning_rate=0.7, seed=0, grid_resolution=5,
        minibatch=8, weight_decay=0.02, noise_scale=2.0))
    m_robust = defense_metrics(robust, data, n_colors=5, seed=11)

    clean_scores = np.array([robust.predict_image(img) for img, _ in data])
    clean_acc = float(((clean_scores >= 0.5).astype(int) == labels).mean())

    # analytic gradient against central finite differences
    h = 1e-5
    grad_rng = np.random.default_rng(1)
    w = grad_rng.normal(scale=0.5, size=8)
    b = 0.1
    _, grad_w, _ = bce_loss_and_grad(w, b, features, labels)
    max_rel = 0.0
    for k in range(8):
        wp, wm = w.copy(), w.copy()
        wp[k] += h
        wm[k] -= h
        lp, _, _ = bce_loss_and_grad(wp, b, features, labels)
        lm, _, _ = bce_loss_and_grad(wm, b, features, labels)
        fd = (lp - lm) / (2 * h)
        max_rel = max(max_rel, abs(grad_w[k] - fd) / max(1.0, abs(fd)))

    elapsed = time.time() - t0
    halved = m_robust.dmr <= 0.5 * m_plain.dmr
    cauc_ok = (m_plain.cauc - m_robust.cauc) <= 0.05
    announce("ColorAT dMR halved, cAUC drop <=0.05, gradient check <1e-4",
             halved and cauc_ok and max_rel < 1e-4 and clean_acc >= 0.95
             and elapsed < 300.0,
             f"dMR {m_plain.dmr:.3f}->{m_robust.dmr:.3f}, "
             f"cAUC {m_plain.cauc:.2f}->{m_robust.cauc:.2f}, "
             f"grad {max_rel:.1e}, acc {clean_acc:.2f}, {elapsed:.0f}s")


def test_batch_determinism(tmp_path):
    data_dir = tmp_path / "data"
    harness.generate_synthetic(6, seed=77, out_dir=data_dir)
    manifest = harness.load_manifest(data_dir / "manifest.csv")
    config = AttackConfig(variant=AttackVariant.AS, seed=5)
    blobs = []
    for name in ("run1", "run2"):
        out = tmp_path / name
        harness.run_batch(manifest, OracleSpec("builtin", "colorgate"),
                          config, out_dir=out, deterministic=True)
        content = {}
        for fname in ("records.json", "report.json", "records.csv",
                      "fr_curve.csv"):
            content[fname] = (out / fname).read_bytes()
        blobs.append(content)
    announce("deterministic batch runs byte-identical",
             blobs[0] == blobs[1])
