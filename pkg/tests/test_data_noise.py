"""Tests for dataset ingestion, the noise model, and image I/O."""

import hashlib

import numpy as np
import pytest

from wipunet.data_noise import (
    RECORD_BYTES,
    RECORDS_PER_FILE,
    TEST_FILES,
    TRAIN_FILES,
    ImageSet,
    add_awgn,
    load_cifar10,
    load_folder,
    load_image,
    resize_bilinear,
    sample_patches,
    save_image,
    write_synthetic_cifar10,
)
from wipunet.engine import Tensor
from wipunet.rng import Rng

# 99th percentile of the chi-square distribution with 15 degrees of freedom
CHI2_CRIT_15DF_P99 = 30.578


class TestCifarLoading:
    def test_limits_and_shapes(self, cifar_root):
        train, test = load_cifar10(cifar_root, limit_train=64, limit_test=16)
        assert len(train) == 64 and len(test) == 16
        assert train.source == "cifar10_train" and test.source == "cifar10_test"
        assert train.names[0] == "train_00000" and test.names[15] == "test_00015"
        for img in train.images[:4]:
            assert img.shape == (1, 3, 32, 32)
            assert img.data.min() >= 0.0 and img.data.max() <= 1.0

    def test_file_record_counts(self, cifar_root):
        for fname in TRAIN_FILES + TEST_FILES:
            size = (cifar_root / fname).stat().st_size
            assert size == RECORD_BYTES * RECORDS_PER_FILE

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_cifar10(tmp_path, limit_train=1, limit_test=1)

    def test_wrong_size_rejected(self, tmp_path):
        for fname in TRAIN_FILES + TEST_FILES:
            (tmp_path / fname).write_bytes(b"\0" * (RECORD_BYTES * RECORDS_PER_FILE))
        (tmp_path / TRAIN_FILES[0]).write_bytes(b"\0" * 100)
        with pytest.raises(ValueError):
            load_cifar10(tmp_path, limit_train=1, limit_test=0)

    def test_pixel_byte_mapping(self, tmp_path):
        """Byte 255 maps to 1.0 and byte 0 to 0.0."""
        rec = np.zeros((RECORDS_PER_FILE, RECORD_BYTES), dtype=np.uint8)
        rec[0, 1] = 255  # first pixel of the red plane
        for fname in TRAIN_FILES + TEST_FILES:
            rec.tofile(tmp_path / fname)
        train, _ = load_cifar10(tmp_path, limit_train=1, limit_test=0)
        img = train.images[0].data
        assert img[0, 0, 0, 0] == 1.0
        assert img[0, 0, 0, 1] == 0.0

    def test_first_test_image_golden_checksum(self, cifar_root):
        """Frozen digest of the first test image; catches corpus drift."""
        _, test = load_cifar10(cifar_root, limit_train=0, limit_test=1)
        digest = hashlib.blake2b(test.images[0].data.tobytes(), digest_size=16).hexdigest()
        assert digest == "cab452718207c1a3c2b1ccf2408d267e"


class TestSyntheticCorpus:
    def test_deterministic_bytes(self, tmp_path, cifar_root):
        write_synthetic_cifar10(tmp_path, seed=1234)
        a = (tmp_path / TEST_FILES[0]).read_bytes()
        b = (cifar_root / TEST_FILES[0]).read_bytes()
        assert a == b

    def test_images_have_structure(self, cifar_root):
        train, _ = load_cifar10(cifar_root, limit_train=256, limit_test=0)
        stack = np.concatenate([img.data for img in train.images])
        assert 0.3 < stack.mean() < 0.7
        # smooth but not constant: per-image spatial variation exists
        per_image_std = stack.reshape(256, -1).std(axis=1)
        assert per_image_std.min() > 0.01


class TestAddAwgn:
    def test_sigma_zero_is_exact(self):
        clean = Tensor(np.random.default_rng(0).random((1, 3, 8, 8), dtype=np.float32))
        pair = add_awgn(clean, 0.0, Rng(1))
        assert np.array_equal(pair.noisy.data, clean.data)

    def test_same_seed_same_noise(self):
        clean = Tensor(np.random.default_rng(0).random((2, 3, 8, 8), dtype=np.float32))
        a = add_awgn(clean, 25.0, Rng(1234))
        b = add_awgn(clean, 25.0, Rng(1234))
        assert np.array_equal(a.noisy.data, b.noisy.data)

    def test_rng_advances_between_calls(self):
        clean = Tensor(np.zeros((1, 3, 8, 8), dtype=np.float32))
        rng = Rng(7)
        assert not np.array_equal(add_awgn(clean, 25.0, rng).noisy.data, add_awgn(clean, 25.0, rng).noisy.data)

    def test_noise_moments(self):
        """Mean and std of 1e6 samples match N(0, (25/255)^2) within CLT bounds."""
        clean = Tensor(np.zeros((4, 3, 290, 290), dtype=np.float32))
        pair = add_awgn(clean, 25.0, Rng(42))
        eps = pair.noisy.data.astype(np.float64)
        level = 25.0 / 255.0
        assert eps.size >= 1_000_000
        assert abs(eps.mean()) < 3.0 * level / 1000.0
        assert abs(eps.std() - level) < 0.01 * level

    def test_noisy_not_clamped(self):
        clean = Tensor(np.random.default_rng(1).random((4, 3, 64, 64), dtype=np.float32))
        pair = add_awgn(clean, 100.0, Rng(2))
        assert pair.noisy.data.min() < 0.0 and pair.noisy.data.max() > 1.0
        # unbiased even at high sigma; a clamp would pull the mean inward
        n = pair.noisy.data.size
        assert abs(pair.noisy.data.mean() - clean.data.mean()) < 3.0 * (100.0 / 255.0) / np.sqrt(n)

    def test_noise_is_signal_independent(self):
        clean = Tensor(np.random.default_rng(3).random((4, 3, 128, 128), dtype=np.float32))
        pair = add_awgn(clean, 50.0, Rng(4))
        eps = (pair.noisy.data - clean.data).ravel().astype(np.float64)
        corr = np.corrcoef(clean.data.ravel().astype(np.float64), eps)[0, 1]
        assert abs(corr) < 0.01

    def test_sigma_map_constant(self):
        clean = Tensor(np.zeros((2, 3, 8, 8), dtype=np.float32))
        pair = add_awgn(clean, 50.0, Rng(5))
        assert pair.sigma_map.shape == (2, 1, 8, 8)
        np.testing.assert_allclose(pair.sigma_map.data, 50.0 / 255.0, rtol=1e-6)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            add_awgn(Tensor.zeros((1, 3, 4, 4)), -5.0, Rng(0))


class TestSamplePatches:
    def _position_coded_set(self, hw):
        """Image whose red channel encodes each pixel's flat position."""
        code = np.arange(hw * hw, dtype=np.float32).reshape(1, 1, hw, hw) / (hw * hw)
        img = np.concatenate([code, np.zeros((1, 2, hw, hw), dtype=np.float32)], axis=1)
        return ImageSet(images=[Tensor(img)], names=["coded"], source="folder")

    def test_full_size_patch_is_image(self, train_subset):
        patches = sample_patches(train_subset, 32, 3, Rng(0))
        assert all(p.shape == (1, 3, 32, 32) for p in patches)

    def test_patch_shapes(self, train_subset):
        patches = sample_patches(train_subset, 17, 5, Rng(1))
        assert all(p.shape == (1, 3, 17, 17) for p in patches)

    def test_small_images_resized_up(self, train_subset):
        patches = sample_patches(train_subset, 48, 2, Rng(2))
        assert all(p.shape == (1, 3, 48, 48) for p in patches)

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            sample_patches(ImageSet([], [], "folder"), 8, 1, Rng(0))

    def test_corner_distribution_uniform(self):
        """Chi-square over a 4x4 grid of corners: 1e4 draws on a 256x256 image."""
        hw, size = 256, 128
        image_set = self._position_coded_set(hw)
        span = hw - size + 1  # 129 possible values per axis
        rng = Rng(314)
        counts = np.zeros((4, 4))
        for _ in range(20):
            for p in sample_patches(image_set, size, 500, rng):
                flat = int(round(float(p.data[0, 0, 0, 0]) * hw * hw))
                top, left = divmod(flat, hw)
                counts[top * 4 // span, left * 4 // span] += 1
        widths = np.array([(np.arange(span) * 4 // span == k).sum() for k in range(4)])
        expected = 10000.0 * np.outer(widths, widths) / (span * span)
        chi2 = ((counts - expected) ** 2 / expected).sum()
        assert chi2 < CHI2_CRIT_15DF_P99


class TestResize:
    def test_same_size_is_identity(self):
        x = np.random.default_rng(0).random((2, 3, 9, 7))
        np.testing.assert_allclose(resize_bilinear(x, 9, 7), x, atol=1e-12)

    def test_constant_preserved(self):
        x = np.full((1, 1, 4, 4), 0.37)
        np.testing.assert_allclose(resize_bilinear(x, 11, 13), 0.37, atol=1e-12)

    def test_values_stay_in_hull(self):
        x = np.random.default_rng(1).random((1, 3, 8, 8))
        y = resize_bilinear(x, 32, 32)
        assert y.min() >= x.min() - 1e-12 and y.max() <= x.max() + 1e-12


class TestImageIO:
    def _quantized_random(self, seed, hw=24):
        rng = np.random.default_rng(seed)
        return Tensor(rng.integers(0, 256, (1, 3, hw, hw)).astype(np.float32) / 255.0)

    @pytest.mark.parametrize("ext", [".png", ".ppm"])
    def test_roundtrip_lossless(self, tmp_path, ext):
        img = self._quantized_random(0)
        path = tmp_path / f"img{ext}"
        save_image(img, path)
        back = load_image(path)
        np.testing.assert_array_equal(back.data, img.data)

    def test_half_rounds_up(self, tmp_path):
        img = Tensor(np.full((1, 3, 2, 2), 0.5, dtype=np.float32))
        path = tmp_path / "half.ppm"
        save_image(img, path)
        raster = load_image(path).data
        np.testing.assert_allclose(raster, 128.0 / 255.0, rtol=1e-6)

    def test_out_of_range_clamped_on_save(self, tmp_path):
        img = Tensor(np.array([-0.5, 0.25, 1.5], dtype=np.float32).reshape(1, 3, 1, 1))
        path = tmp_path / "clamp.ppm"
        save_image(img, path)
        back = load_image(path).data.reshape(-1)
        np.testing.assert_allclose(back, [0.0, 0.25, 1.0], atol=1e-3)

    def test_grayscale_png_rejected_with_path(self, tmp_path):
        from PIL import Image

        path = tmp_path / "gray.png"
        Image.fromarray(np.zeros((4, 4), dtype=np.uint8), mode="L").save(path)
        with pytest.raises(ValueError, match="gray.png"):
            load_image(path)

    def test_unsupported_format_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            save_image(Tensor.zeros((1, 3, 2, 2)), tmp_path / "img.jpg")

    def test_ppm_with_comments(self, tmp_path):
        path = tmp_path / "c.ppm"
        path.write_bytes(b"P6\n# a comment\n2 1\n255\n" + bytes([255, 0, 0, 0, 255, 0]))
        img = load_image(path).data
        assert img.shape == (1, 3, 1, 2)
        assert img[0, 0, 0, 0] == 1.0 and img[0, 1, 0, 1] == 1.0

    def test_load_folder_sorted(self, tmp_path):
        for name in ("b.ppm", "a.ppm", "c.png"):
            save_image(self._quantized_random(hash(name) % 100, hw=8), tmp_path / name)
        got = load_folder(tmp_path)
        assert got.names == ["a", "b", "c"]
        assert got.source == "folder"

    def test_load_empty_folder_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            load_folder(tmp_path)
