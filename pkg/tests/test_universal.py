import numpy as np
import pytest

from chromafool.imagecore import ColorFilter, ColorMode, Image
from chromafool.oracle import ColorgateOracle, OracleSession
from chromafool.transforms import TransformRanges
from chromafool.universal import cluster_filters, evaluate_universal

from conftest import uniform_image


class TestClustering:
    def test_identical_filters_collapse(self):
        filters = [ColorFilter(0.4, 0.2, 0.6)] * 8
        clusters = cluster_filters(filters, k=3, seed=0)
        assert clusters[0].member_count == 8
        assert clusters[1].member_count == 0
        assert clusters[2].member_count == 0
        np.testing.assert_allclose(clusters[0].center.as_array(),
                                   [0.4, 0.2, 0.6])

    def test_two_blobs_recovered(self, rng):
        mean_a = np.array([0.2, 0.3, 0.8])
        mean_b = np.array([0.8, 0.6, 0.1])
        pts = [np.clip(mean_a + rng.normal(0, 0.01, 3), 0, 1)
               for _ in range(30)]
        pts += [np.clip(mean_b + rng.normal(0, 0.01, 3), 0, 1)
                for _ in range(20)]
        emp_a = np.mean(pts[:30], axis=0)
        emp_b = np.mean(pts[30:], axis=0)
        clusters = cluster_filters(pts, k=2, seed=1)
        # Color ID 1 is the larger cluster
        assert clusters[0].member_count == 30
        assert clusters[1].member_count == 20
        np.testing.assert_allclose(clusters[0].center.as_array(), emp_a,
                                   atol=0.02)
        np.testing.assert_allclose(clusters[1].center.as_array(), emp_b,
                                   atol=0.02)

    def test_seed_determinism(self, rng):
        pts = [rng.uniform(0, 1, 3) for _ in range(40)]
        a = cluster_filters(pts, k=3, seed=9)
        b = cluster_filters(pts, k=3, seed=9)
        assert a == b

    def test_assignment_locally_optimal(self, rng):
        pts = np.array([rng.uniform(0, 1, 3) for _ in range(50)])
        clusters = cluster_filters(pts, k=4, seed=2)
        centers = np.array([c.center.as_array() for c in clusters])
        by_id = {mid: ci for ci, c in enumerate(clusters)
                 for mid in c.member_ids}
        for i, p in enumerate(pts):
            d = ((centers - p) ** 2).sum(axis=1)
            assert d[by_id[str(i)]] == pytest.approx(d.min(), abs=1e-12)

    def test_ordering_ties_lexicographic(self):
        filters = ([ColorFilter(0.9, 0.1, 0.1)] * 5
                   + [ColorFilter(0.1, 0.9, 0.1)] * 5)
        clusters = cluster_filters(filters, k=2, seed=0)
        assert clusters[0].member_count == clusters[1].member_count == 5
        assert clusters[0].center.as_array()[0] < clusters[1].center.as_array()[0]

    def test_too_few_filters(self):
        with pytest.raises(ValueError, match="at least"):
            cluster_filters([ColorFilter(0.1, 0.2, 0.3)], k=3, seed=0)


def small_spoof_set(n=6):
    entries = []
    for i in range(n):
        rng = np.random.default_rng([7, i])
        base = rng.uniform(90, 160)
        pixels = np.clip(
            base * np.array([0.8, 1.0, 0.75])[None, None, :]
            + rng.normal(0, 6, (64, 64, 3)), 1, 254).astype(np.uint8)
        entries.append((Image(pixels, ColorMode.INTEGER), f"id_{i}"))
    return entries


def scaled_ranges():
    return TransformRanges(illumination_center=(6.0, 25.0),
                           illumination_radius=(6.0, 12.0),
                           translation=(-3.0, 3.0), crop=(-5.0, 5.0))


class TestEvaluateUniversal:
    def test_query_count_exact(self):
        entries = small_spoof_set(4)
        session = OracleSession(ColorgateOracle(), 1000)
        evaluate_universal(ColorFilter(0.9, 0.2, 0.9), entries, session,
                           scaled_ranges(), 10, np.random.default_rng(0))
        assert session.count == 40

    def test_secret_direction_color_fools(self):
        entries = small_spoof_set(6)
        session = OracleSession(ColorgateOracle(), 1000)
        result = evaluate_universal(ColorFilter(0.9, 0.2, 0.9), entries,
                                    session, scaled_ranges(), 10,
                                    np.random.default_rng(0))
        assert result.fr >= 0.6
        assert result.aqs is not None

    def test_black_color_never_fools(self):
        entries = small_spoof_set(4)
        session = OracleSession(ColorgateOracle(), 1000)
        result = evaluate_universal(ColorFilter(0.0, 0.0, 0.0), entries,
                                    session, scaled_ranges(), 5,
                                    np.random.default_rng(0))
        assert result.fr == 0.0
        assert result.aqs is None
        assert result.oasr == 0.0

    def test_empty_dataset_rejected(self):
        session = OracleSession(ColorgateOracle(), 10)
        with pytest.raises(ValueError, match="empty"):
            evaluate_universal(ColorFilter(0.5, 0.5, 0.5), [], session,
                               scaled_ranges(), 5, np.random.default_rng(0))
