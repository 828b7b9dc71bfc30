import numpy as np
import pytest

from chromafool.imagecore import (ChannelCountError, ColorFilter, ColorMode,
                                  Image, ImageFormatError, apply_filter,
                                  grayscale, load_image, quantize,
                                  resize_bilinear, save_image, to_working)

from conftest import random_integer_image, uniform_image


class TestImageInvariants:
    def test_rejects_degenerate_raster(self):
        with pytest.raises(ValueError, match="degenerate"):
            Image(np.zeros((4, 16, 3), dtype=np.uint8), ColorMode.INTEGER)

    def test_rejects_wrong_channel_count(self):
        with pytest.raises(ChannelCountError):
            Image(np.zeros((16, 16, 4), dtype=np.uint8), ColorMode.INTEGER)

    def test_rejects_out_of_range_continuous(self):
        bad = np.full((16, 16, 3), 256.0)
        with pytest.raises(ValueError, match="outside"):
            Image(bad, ColorMode.CONTINUOUS)

    def test_rejects_float_array_in_integer_mode(self):
        with pytest.raises(ValueError, match="integer"):
            Image(np.zeros((16, 16, 3)), ColorMode.INTEGER)

    def test_pixels_are_immutable(self):
        img = uniform_image(1, 2, 3)
        with pytest.raises(ValueError):
            img.pixels[0, 0, 0] = 9


class TestGrayscale:
    def test_uniform_pixel(self):
        img = uniform_image(100, 100, 100)
        assert grayscale(img)[0, 0] == pytest.approx(100.0, abs=1e-9)

    def test_pure_red(self):
        img = uniform_image(255, 0, 0)
        assert grayscale(img)[0, 0] == pytest.approx(76.5, abs=1e-9)

    def test_pure_green(self):
        img = uniform_image(0, 255, 0)
        assert grayscale(img)[0, 0] == pytest.approx(150.45, abs=1e-9)

    def test_range_preserved(self, rng):
        for _ in range(20):
            g = grayscale(random_integer_image(rng))
            assert g.min() >= 0.0 and g.max() <= 255.0


class TestApplyFilter:
    def test_unit_filter_grays_the_image(self, rng):
        img = random_integer_image(rng)
        out = apply_filter(img, ColorFilter(1, 1, 1), ColorMode.CONTINUOUS)
        gray = grayscale(img)
        for c in range(3):
            np.testing.assert_allclose(out.pixels[..., c], gray, atol=1e-9)

    def test_integer_mode_floors(self):
        img = uniform_image(101, 101, 101)
        out = apply_filter(img, ColorFilter(0.5, 0, 0), ColorMode.INTEGER)
        assert out.pixels[0, 0, 0] == 50
        assert out.pixels[0, 0, 1] == 0
        assert out.pixels[0, 0, 2] == 0

    def test_continuous_mode_scales(self):
        img = uniform_image(100, 100, 100)
        out = apply_filter(img, ColorFilter(0.3, 0.6, 0.9), ColorMode.CONTINUOUS)
        np.testing.assert_allclose(out.pixels[0, 0], [30.0, 60.0, 90.0],
                                   atol=1e-9)

    def test_rejects_out_of_range_filter(self):
        with pytest.raises(ValueError):
            ColorFilter(1.2, 0.0, 0.0)
        with pytest.raises(ValueError):
            ColorFilter(-0.1, 0.0, 0.0)

    def test_filter_grayscale_commutation(self, rng):
        # grayscale(filtered) equals the scalar-scaled grayscale
        for _ in range(50):
            img = random_integer_image(rng, h=16, w=16)
            f = ColorFilter(*rng.uniform(0, 1, 3))
            lhs = grayscale(apply_filter(img, f, ColorMode.CONTINUOUS))
            k = 0.3 * f.r + 0.59 * f.g + 0.11 * f.b
            rhs = k * grayscale(img)
            np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)

    def test_channel_ratio_law(self, rng):
        img = random_integer_image(rng)
        f = ColorFilter(0.8, 0.4, 0.2)
        out = apply_filter(img, f, ColorMode.CONTINUOUS).pixels
        gray = grayscale(img)
        mask = gray > 0
        ratio = out[..., 0][mask] / out[..., 1][mask]
        np.testing.assert_allclose(ratio, f.r / f.g, rtol=1e-12)

    def test_unit_filter_idempotent_on_gray_image(self, rng):
        img = random_integer_image(rng)
        once = apply_filter(img, ColorFilter(1, 1, 1), ColorMode.CONTINUOUS)
        twice = apply_filter(once, ColorFilter(1, 1, 1), ColorMode.CONTINUOUS)
        np.testing.assert_allclose(twice.pixels, once.pixels, rtol=1e-9)

    def test_integer_and_continuous_differ_below_one(self, rng):
        img = random_integer_image(rng)
        f = ColorFilter(*rng.uniform(0, 1, 3))
        ci = apply_filter(img, f, ColorMode.INTEGER).pixels.astype(np.float64)
        cc = apply_filter(img, f, ColorMode.CONTINUOUS).pixels
        diff = np.abs(cc - ci)
        assert diff.max() < 1.0


class TestQuantize:
    def test_quantize_rounds(self):
        img = uniform_image(10.6, 0.2, 254.5, mode=ColorMode.CONTINUOUS)
        q = quantize(img)
        assert q.mode is ColorMode.INTEGER
        assert tuple(q.pixels[0, 0]) == (11, 0, 254)

    def test_integer_input_passthrough(self):
        img = uniform_image(3, 4, 5)
        assert quantize(img) is img


class TestResize:
    def test_constant_image_stays_constant(self):
        arr = np.full((16, 24), 37.0)
        out = resize_bilinear(arr, 8, 8)
        np.testing.assert_allclose(out, 37.0)

    def test_identity_size(self, rng):
        arr = rng.uniform(0, 255, (16, 16, 3))
        np.testing.assert_array_equal(resize_bilinear(arr, 16, 16), arr)

    def test_to_working_shape(self, rng):
        img = random_integer_image(rng, h=64, w=48)
        out = to_working(img)
        assert (out.height, out.width) == (256, 256)
        assert out.mode is ColorMode.INTEGER


class TestFileRoundTrip:
    def test_png_round_trip_bit_identical(self, rng, tmp_path):
        img = random_integer_image(rng, h=24, w=16)
        path = tmp_path / "x.png"
        save_image(img, path)
        loaded = load_image(path)
        np.testing.assert_array_equal(loaded.pixels, img.pixels)

    def test_ppm_round_trip_bit_identical(self, rng, tmp_path):
        img = random_integer_image(rng, h=16, w=24)
        path = tmp_path / "x.ppm"
        save_image(img, path)
        loaded = load_image(path)
        np.testing.assert_array_equal(loaded.pixels, img.pixels)

    def test_missing_path_raises_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "missing.png")

    def test_single_channel_file_raises_channel_error(self, tmp_path):
        from PIL import Image as PILImage

        path = tmp_path / "gray.png"
        PILImage.fromarray(np.zeros((16, 16), dtype=np.uint8), "L").save(path)
        with pytest.raises(ChannelCountError):
            load_image(path)

    def test_undecodable_file_raises_format_error(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"this is not a png at all")
        with pytest.raises(ImageFormatError):
            load_image(path)

    def test_save_refuses_continuous(self, tmp_path):
        img = uniform_image(1.5, 2.5, 3.5, mode=ColorMode.CONTINUOUS)
        with pytest.raises(ValueError, match="integer"):
            save_image(img, tmp_path / "x.png")
