import json

import numpy as np
import pytest

from chromafool.defense import (ColorAtConfig, ToyClassifier, auc,
                                bce_loss_and_grad, defense_metrics,
                                feature_map, inner_max_color,
                                make_synthetic_dataset, train_colorat,
                                train_plain, _grid_colors)
from chromafool.imagecore import ColorMode, Image

from conftest import random_integer_image, uniform_image


def tiny_dataset():
    return make_synthetic_dataset(24, seed=3, size=16)


class TestFeatureMap:
    def test_in_unit_range(self, rng):
        for _ in range(20):
            f = feature_map(random_integer_image(rng, h=16, w=16))
            assert f.shape == (8,)
            assert (f >= 0).all() and (f <= 1).all()

    def test_black_image_chroma_convention(self):
        f = feature_map(uniform_image(0, 0, 0))
        assert f[3] == pytest.approx(1 / 3)
        assert f[4] == pytest.approx(1 / 3)
        assert f[7] == 1.0  # fully saturated at zero

    def test_uniform_image_features(self):
        f = feature_map(uniform_image(100, 50, 25))
        assert f[0] == pytest.approx(100 / 255)
        assert f[3] == pytest.approx(100 / 175)
        assert f[6] == pytest.approx(0.0)
        assert f[7] == 0.0


class TestToyClassifier:
    def test_zero_model_is_uninformative(self, rng):
        model = ToyClassifier(np.zeros(8), 0.0)
        for _ in range(5):
            assert model.predict_image(random_integer_image(rng)) == 0.5

    def test_probability_strictly_inside_unit_interval(self, rng):
        model = ToyClassifier(rng.normal(size=8), 0.3)
        p = model.predict_image(random_integer_image(rng))
        assert 0.0 < p < 1.0

    def test_monotone_in_bias(self, rng):
        img = random_integer_image(rng)
        w = rng.normal(size=8)
        probs = [ToyClassifier(w, b).predict_image(img)
                 for b in (-1.0, 0.0, 1.0, 2.0)]
        assert probs == sorted(probs)

    def test_json_round_trip(self):
        model = ToyClassifier(np.arange(8, dtype=float), -0.5)
        again = ToyClassifier.from_json(model.to_json())
        np.testing.assert_array_equal(model.weights, again.weights)
        assert model.bias == again.bias

    def test_json_rejects_bad_version(self):
        doc = {"weights": [0.0] * 8, "bias": 0.0, "feature_map_version": 2}
        with pytest.raises(ValueError, match="version"):
            ToyClassifier.from_json(json.dumps(doc))


class TestTraining:
    def test_separable_two_points(self):
        bright = uniform_image(220, 180, 160)
        dark = uniform_image(60, 80, 90)
        data = [(bright, 1), (dark, 0)]
        model = train_plain(data, epochs=400, learning_rate=0.5, seed=0)
        assert model.predict_label(bright) == 1
        assert model.predict_label(dark) == 0

    def test_loss_non_increasing(self):
        history = []
        train_plain(tiny_dataset(), epochs=120, learning_rate=0.3, seed=0,
                    record_loss=history)
        diffs = np.diff(history)
        assert (diffs <= 1e-12).all()

    def test_same_seed_identical_weights(self):
        data = tiny_dataset()
        a = train_plain(data, epochs=50, learning_rate=0.3, seed=4)
        b = train_plain(data, epochs=50, learning_rate=0.3, seed=4)
        np.testing.assert_array_equal(a.weights, b.weights)
        assert a.bias == b.bias

    def test_single_class_rejected(self):
        imgs = [uniform_image(10 * i + 5, 10, 10) for i in range(1, 4)]
        with pytest.raises(ValueError, match="both labels"):
            train_plain([(im, 0) for im in imgs])

    def test_gradient_matches_finite_differences(self, rng):
        data = tiny_dataset()
        feats = np.stack([feature_map(img) for img, _ in data])
        labels = np.asarray([y for _, y in data], dtype=np.float64)
        h = 1e-5
        for _ in range(10):
            w = rng.normal(scale=0.8, size=8)
            b = float(rng.normal())
            _, grad_w, grad_b = bce_loss_and_grad(w, b, feats, labels)
            for k in range(8):
                wp, wm = w.copy(), w.copy()
                wp[k] += h
                wm[k] -= h
                lp, _, _ = bce_loss_and_grad(wp, b, feats, labels)
                lm, _, _ = bce_loss_and_grad(wm, b, feats, labels)
                fd = (lp - lm) / (2 * h)
                assert abs(grad_w[k] - fd) <= 1e-4 * max(1.0, abs(fd))
            lp, _, _ = bce_loss_and_grad(w, b + h, feats, labels)
            lm, _, _ = bce_loss_and_grad(w, b - h, feats, labels)
            fd = (lp - lm) / (2 * h)
            assert abs(grad_b - fd) <= 1e-4 * max(1.0, abs(fd))

    def test_colorat_degenerates_to_plain(self):
        data = tiny_dataset()
        plain = train_plain(data, epochs=40, learning_rate=0.3, seed=1)
        degenerate = train_colorat(data, ColorAtConfig(
            epochs=40, learning_rate=0.3, seed=1, minibatch=None,
            shuffle=False, inner_search=False))
        np.testing.assert_array_equal(plain.weights, degenerate.weights)
        assert plain.bias == degenerate.bias


class TestInnerMax:
    def test_indifferent_model_returns_origin(self, rng):
        data = tiny_dataset()[:6]
        model = ToyClassifier(np.zeros(8), 0.0)
        color, _, counts = inner_max_color(
            model, [img for img, _ in data], [y for _, y in data],
            np.random.default_rng(0), grid_resolution=5)
        # probability 0.5 classifies everything bonafide: every color ties
        assert counts.min() == counts.max()
        np.testing.assert_array_equal(color, [0.0, 0.0, 0.0])

    def test_grid_size_exact(self):
        assert len(_grid_colors(11)) == 1331
        data = tiny_dataset()[:4]
        model = ToyClassifier(np.zeros(8), 0.0)
        _, _, counts = inner_max_color(
            model, [img for img, _ in data], [y for _, y in data],
            np.random.default_rng(0), grid_resolution=11)
        assert len(counts) == 1331

    def test_chroma_ball_model_recovered(self, rng):
        center = np.array([0.45, 0.2])

        class BallModel:
            def predict_proba(self, feats):
                d = np.linalg.norm(feats[:, 3:5] - center, axis=1)
                return (d < 0.06).astype(np.float64)

        images = [random_integer_image(rng, h=16, w=16) for _ in range(4)]
        labels = [0, 0, 0, 0]  # all spoof: fooling = classified bonafide
        color, _, counts = inner_max_color(BallModel(), images, labels,
                                           np.random.default_rng(1),
                                           grid_resolution=11)
        assert counts.max() == 4
        chroma = color / color.sum()
        assert abs(chroma[0] - center[0]) < 0.1
        assert abs(chroma[1] - center[1]) < 0.1


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_ties(self):
        assert auc([0.5] * 6, [1, 0, 1, 0, 1, 0]) == 0.5

    def test_spec_example(self):
        assert auc([0.9, 0.4, 0.6, 0.1], [1, 0, 1, 0]) == 1.0

    def test_invariant_under_monotone_transform(self, rng):
        for _ in range(20):
            scores = rng.normal(size=30)
            labels = rng.integers(0, 2, size=30)
            if labels.min() == labels.max():
                continue
            base = auc(scores, labels)
            assert auc(np.exp(scores), labels) == pytest.approx(base)
            assert auc(3 * scores - 7, labels) == pytest.approx(base)
            assert auc(np.tanh(scores), labels) == pytest.approx(base)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            auc([0.1, 0.2], [1, 1])


class TestDefenseMetrics:
    def test_saturation_keyed_model_is_color_immune(self):
        # decisions depend on the zero-pixel fraction, which colorization
        # can only increase: colorized spoofs stay rejected
        data = tiny_dataset()
        model = ToyClassifier(np.array([0, 0, 0, 0, 0, 0, 0, -60.0]), 3.0)
        metrics = defense_metrics(model, data, n_colors=5, seed=2)
        assert metrics.cauc == 1.0
        assert metrics.dmr == 0.0

    def test_random_scores_give_half_auc(self, rng):
        scores = rng.uniform(0, 1, size=200)
        labels = rng.integers(0, 2, size=200)
        while labels.min() == labels.max():
            labels = rng.integers(0, 2, size=200)
        assert abs(auc(scores, labels) - 0.5) < 0.1

    def test_metrics_in_range(self):
        data = tiny_dataset()
        model = train_plain(data, epochs=60, learning_rate=0.3, seed=0)
        m = defense_metrics(model, data, n_colors=3, seed=5)
        for v in (m.cauc, m.ccauc, m.dmr):
            assert 0.0 <= v <= 1.0
