"""Tests for the resampling, blur, shift, and PPM/PGM helpers."""

import numpy as np
import pytest

from twoview.imgops import (
    ImageFileError,
    bilinear_resize,
    gaussian_blur,
    read_pgm,
    read_ppm,
    scale_about_center,
    shift_image,
    write_pgm,
    write_ppm,
)


class TestBilinearResize:
    def test_identity_is_bitwise(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, (9, 13, 3))
        out = bilinear_resize(img, 9, 13)
        assert np.array_equal(out, img)

    def test_constant_preserved(self):
        img = np.full((8, 8, 3), 0.37)
        out = bilinear_resize(img, 5, 11)
        np.testing.assert_allclose(out, 0.37, atol=1e-12)

    def test_half_pixel_hand_case(self):
        # Column of [0, 1] doubled: sample points -0.25, 0.25, 0.75, 1.25
        # clamp to the edges, giving 0, 0.25, 0.75, 1.
        img = np.array([[0.0], [1.0]])
        out = bilinear_resize(img, 4, 1)
        np.testing.assert_allclose(out[:, 0], [0.0, 0.25, 0.75, 1.0], atol=1e-15)

    def test_output_within_input_range(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(0.2, 0.8, (16, 16, 3))
        out = bilinear_resize(img, 40, 7)
        assert out.min() >= img.min() - 1e-12 and out.max() <= img.max() + 1e-12

    def test_bad_target(self):
        with pytest.raises(ValueError):
            bilinear_resize(np.zeros((4, 4, 3)), 0, 4)


class TestScaleShiftBlur:
    def test_scale_factor_one_identity(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(0, 1, (10, 10, 3))
        assert np.array_equal(scale_about_center(img, 1.0), img)

    def test_scale_constant(self):
        img = np.full((12, 12, 3), 0.5)
        np.testing.assert_allclose(scale_about_center(img, 1.1), 0.5, atol=1e-12)
        np.testing.assert_allclose(scale_about_center(img, 0.9), 0.5, atol=1e-12)

    def test_shift_replicates_edges(self):
        img = np.arange(9.0).reshape(3, 3, 1).repeat(3, axis=2)
        out = shift_image(img, 1, 0)  # content moves down one row
        np.testing.assert_array_equal(out[1:], img[:2])
        np.testing.assert_array_equal(out[0], img[0])

    def test_shift_zero_identity(self):
        rng = np.random.default_rng(3)
        img = rng.uniform(0, 1, (5, 7, 3))
        assert np.array_equal(shift_image(img, 0, 0), img)

    def test_blur_sigma_zero_identity(self):
        rng = np.random.default_rng(4)
        img = rng.uniform(0, 1, (6, 6, 3))
        assert np.array_equal(gaussian_blur(img, 0.0), img)

    def test_blur_constant_preserved(self):
        img = np.full((8, 8, 3), 0.25)
        np.testing.assert_allclose(gaussian_blur(img, 1.5), 0.25, atol=1e-12)

    def test_blur_reduces_variance(self):
        rng = np.random.default_rng(5)
        img = rng.uniform(0, 1, (32, 32, 3))
        out = gaussian_blur(img, 2.0)
        assert out.var() < img.var() * 0.5

    def test_blur_preserves_symmetry(self):
        rng = np.random.default_rng(6)
        half = rng.uniform(0, 1, (8, 4, 3))
        img = np.concatenate([half, half[:, ::-1]], axis=1)
        out = gaussian_blur(img, 1.0)
        np.testing.assert_allclose(out, out[:, ::-1], atol=1e-12)


class TestNetpbm:
    def test_ppm_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        img = np.round(rng.uniform(0, 1, (10, 12, 3)) * 255) / 255.0
        path = tmp_path / "x.ppm"
        write_ppm(path, img)
        back = read_ppm(path)
        assert np.array_equal(back, img)

    def test_all_256_levels_round_trip(self, tmp_path):
        img = (np.arange(256).reshape(16, 16) / 255.0)[:, :, None].repeat(3, axis=2)
        path = tmp_path / "levels.ppm"
        write_ppm(path, img)
        assert np.array_equal(read_ppm(path), img)

    def test_pgm_round_trip(self, tmp_path):
        mask = np.zeros((9, 9), dtype=bool)
        mask[2:5, 3:7] = True
        path = tmp_path / "m.pgm"
        write_pgm(path, mask)
        back = read_pgm(path)
        assert np.array_equal(back > 0.5, mask)

    def test_header_with_comment(self, tmp_path):
        path = tmp_path / "c.ppm"
        payload = bytes(2 * 2 * 3)
        path.write_bytes(b"P6\n# a comment\n2 2\n255\n" + payload)
        img = read_ppm(path)
        assert img.shape == (2, 2, 3)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes(4))
        with pytest.raises(ImageFileError, match="magic"):
            read_ppm(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.ppm"
        path.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
        with pytest.raises(ImageFileError, match="payload"):
            read_ppm(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ImageFileError, match="no such"):
            read_ppm(tmp_path / "absent.ppm")
