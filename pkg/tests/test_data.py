"""Dataset IO, preprocessing, augmentation, synthetic generation."""

import math

import numpy as np
import pytest
from PIL import Image

from sctransnet.data import (Sample, SynthSpec, crop_back, load_dataset,
                             normalize_image, pad_to_multiple, prepare_eval,
                             prepare_train, save_dataset, save_sample,
                             synth_generate)
from sctransnet.errors import ConfigurationError, DataError
from sctransnet.metrics import connected_components


def write_png(path, arr):
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="L").save(path)


def make_dataset(root, ids, size=32):
    (root / "images").mkdir(parents=True)
    (root / "masks").mkdir(parents=True)
    (root / "img_idx").mkdir(parents=True)
    rng = np.random.default_rng(5)
    for sid in ids:
        write_png(root / "images" / f"{sid}.png",
                  rng.integers(0, 256, (size, size)))
        mask = np.zeros((size, size), dtype=np.uint8)
        mask[4:6, 4:6] = 255
        write_png(root / "masks" / f"{sid}.png", mask)
    (root / "img_idx" / "train_t.txt").write_text(
        "".join(i + "\n" for i in ids))


class TestLoading:
    def test_split_order_preserved(self, tmp_path):
        make_dataset(tmp_path, ["c", "a", "b"])
        samples = load_dataset(tmp_path, "train_t.txt")
        assert [s.id for s in samples] == ["c", "a", "b"]

    def test_mask_binarization_boundary(self, tmp_path):
        make_dataset(tmp_path, ["x"])
        write_png(tmp_path / "masks" / "x.png",
                  np.array([[128, 127], [255, 0]]))
        write_png(tmp_path / "images" / "x.png",
                  np.zeros((2, 2), dtype=np.uint8))
        (s,) = load_dataset(tmp_path, "train_t.txt")
        assert s.mask.tolist() == [[1, 0], [1, 0]]

    def test_missing_mask_names_the_id(self, tmp_path):
        make_dataset(tmp_path, ["ok"])
        (tmp_path / "img_idx" / "train_t.txt").write_text("ok\nlost\n")
        write_png(tmp_path / "images" / "lost.png", np.zeros((4, 4), np.uint8))
        with pytest.raises(DataError, match="lost"):
            load_dataset(tmp_path, "train_t.txt")

    def test_missing_split_file(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path, "train_none.txt")

    def test_save_load_roundtrip_pixel_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        img = rng.integers(0, 256, (16, 16)).astype(np.float32) / 255.0
        mask = (rng.random((16, 16)) > 0.9).astype(np.uint8)
        sample = Sample("rt", img, mask)
        save_sample(sample, tmp_path)
        (tmp_path / "img_idx").mkdir()
        (tmp_path / "img_idx" / "train_t.txt").write_text("rt\n")
        (back,) = load_dataset(tmp_path, "train_t.txt")
        assert np.array_equal(back.image, img)
        assert np.array_equal(back.mask, mask)

    def test_extent_mismatch_rejected(self):
        with pytest.raises(DataError):
            Sample("bad", np.zeros((4, 4)), np.zeros((5, 4), np.uint8))


class TestPrepareTrain:
    def sample(self, h=512, w=512, seed=0):
        rng = np.random.default_rng(seed)
        img = rng.random((h, w)).astype(np.float32)
        mask = (rng.random((h, w)) > 0.995).astype(np.uint8)
        return Sample("s", img, mask)

    def test_crop_shape(self):
        img, mask = prepare_train(self.sample(), 256,
                                  np.random.default_rng(1))
        assert img.shape == (256, 256)
        assert mask.shape == (256, 256)

    def test_same_seed_bitwise_identical(self):
        s = self.sample()
        a = prepare_train(s, 256, np.random.default_rng(7))
        b = prepare_train(s, 256, np.random.default_rng(7))
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1])

    def test_mask_values_stay_binary_and_counts_survive_augment(self):
        s = self.sample(64, 64, seed=3)
        base_count = None
        for trial in range(100):
            rng = np.random.default_rng(trial)
            img, mask = prepare_train(s, 64, rng)  # crop == extent: no loss
            assert set(np.unique(mask)).issubset({0.0, 1.0})
            count = int(mask.sum())
            if base_count is None:
                base_count = count
            assert count == base_count

    def test_component_count_survives_rotations(self):
        s = self.sample(64, 64, seed=4)
        n_base = len(connected_components(s.mask))
        for trial in range(20):
            _, mask = prepare_train(s, 64, np.random.default_rng(trial))
            assert len(connected_components(mask.astype(int))) == n_base

    def test_small_images_reflect_padded_to_crop(self):
        s = self.sample(40, 40)
        img, mask = prepare_train(s, 64, np.random.default_rng(0),
                                  augment=False)
        assert img.shape == (64, 64)

    def test_normalization_range(self):
        img, _ = prepare_train(self.sample(), 256, np.random.default_rng(0))
        assert img.min() >= -1.0 and img.max() <= 1.0


class TestPrepareEval:
    def test_pad_and_crop_back_arithmetic(self):
        rng = np.random.default_rng(2)
        s = Sample("e", rng.random((250, 333)).astype(np.float32),
                   np.zeros((250, 333), np.uint8))
        x, orig = prepare_eval(s)
        assert x.shape == (1, 1, 256, 336)
        assert orig == (250, 333)
        restored = crop_back(x[0, 0], orig)
        assert restored.shape == (250, 333)
        assert np.array_equal(restored, normalize_image(s.image))

    def test_divisible_input_untouched_bitwise(self):
        rng = np.random.default_rng(2)
        img = rng.random((64, 128)).astype(np.float32)
        padded, orig = pad_to_multiple(img)
        assert padded is img
        assert orig == (64, 128)

    def test_pad_region_mirrors_content(self):
        img = np.arange(20.0, dtype=np.float32).reshape(4, 5)
        padded, _ = pad_to_multiple(img, 8)
        assert padded.shape == (8, 8)
        assert np.array_equal(padded[:4, :5], img)
        assert padded[4, 0] == img[2, 0]  # reflect, not zero


class TestSynth:
    def test_single_sigma1_target_halfmax_disk(self):
        spec = SynthSpec(count=3, targets=(1, 1), sigma=(1.0, 1.0),
                         amplitude=(1.0, 1.0), seed=11)
        for s in synth_generate(spec):
            n = int(s.mask.sum())
            assert 5 <= n <= 13
            # integer-center sigma=1 disk is exactly the 5-pixel plus sign
            assert n == 5

    def test_zero_targets_empty_mask(self):
        spec = SynthSpec(count=2, targets=(0, 0), seed=1)
        for s in synth_generate(spec):
            assert s.mask.sum() == 0

    def test_same_seed_bitwise_identical(self):
        a = synth_generate(SynthSpec(count=4, seed=5))
        b = synth_generate(SynthSpec(count=4, seed=5))
        for sa, sb in zip(a, b):
            assert sa.id == sb.id
            assert np.array_equal(sa.image, sb.image)
            assert np.array_equal(sa.mask, sb.mask)

    def test_images_in_unit_range_with_binary_masks(self):
        for s in synth_generate(SynthSpec(count=4, seed=2)):
            assert s.image.min() >= 0.0 and s.image.max() <= 1.0
            assert set(np.unique(s.mask)).issubset({0, 1})

    def test_target_count_matches_components(self):
        spec = SynthSpec(count=6, targets=(2, 2), sigma=(1.0, 2.0), seed=3)
        for s in synth_generate(spec):
            assert len(connected_components(s.mask)) == 2

    def test_infeasible_placement_raises(self):
        spec = SynthSpec(height=24, width=24, count=1, targets=(30, 30),
                         sigma=(2.5, 3.0), seed=0)
        with pytest.raises(DataError):
            synth_generate(spec)

    def test_save_dataset_layout(self, tmp_path):
        samples = synth_generate(SynthSpec(count=4, seed=8))
        train_path, test_path = save_dataset(samples, tmp_path, "toy")
        assert (tmp_path / "images").is_dir()
        assert (tmp_path / "masks").is_dir()
        train_ids = train_path.read_text().split()
        test_ids = test_path.read_text().split()
        assert len(train_ids) + len(test_ids) == 4
        back = load_dataset(tmp_path, "train_toy.txt")
        assert [s.id for s in back] == train_ids
        for orig, rt in zip(samples, back):
            assert np.array_equal(orig.image, rt.image)
            assert np.array_equal(orig.mask, rt.mask)
