import numpy as np
import pytest
import torch

from cloudgan.data import (
    ImagePair,
    SplitSpec,
    augment,
    build_manifest,
    from_model_range,
    load_manifest,
    load_pair,
    load_raster,
    save_manifest,
    save_raster,
    split_manifest,
    to_model_range,
    validate_raster,
)
from cloudgan.errors import ConfigError, MissingDataError

from synth import write_dataset


def random_raster(seed, h=16, w=16, c=3):
    return np.random.default_rng(seed).random((h, w, c)).astype(np.float32)


class TestRasterIO:
    def test_load_8bit_rgb(self, tmp_path):
        raster = random_raster(0, 512, 512)
        save_raster(raster, tmp_path / "a.png", bit_depth=8)
        loaded = load_raster(tmp_path / "a.png")
        assert loaded.shape == (512, 512, 3)
        assert loaded.max() <= 1.0

    def test_single_black_pixel(self, tmp_path):
        save_raster(np.zeros((1, 1, 1), np.float32), tmp_path / "b.png")
        assert load_raster(tmp_path / "b.png").item() == 0.0

    def test_16bit_scaling_is_value_over_65535(self, tmp_path):
        import cv2

        cv2.imwrite(str(tmp_path / "c.png"), np.full((4, 4), 32768, np.uint16))
        loaded = load_raster(tmp_path / "c.png")
        assert np.allclose(loaded, 32768 / 65535, atol=0)

    def test_roundtrip_8bit_quantization_bound(self, tmp_path):
        raster = random_raster(1)
        save_raster(raster, tmp_path / "d.png", bit_depth=8)
        assert np.abs(load_raster(tmp_path / "d.png") - raster).max() <= 1 / 255 / 2 + 1e-9

    def test_roundtrip_zeros_exact(self, tmp_path):
        raster = np.zeros((8, 8, 3), np.float32)
        save_raster(raster, tmp_path / "e.png")
        assert np.array_equal(load_raster(tmp_path / "e.png"), raster)

    def test_roundtrip_16bit_quantization_bound(self, tmp_path):
        raster = random_raster(2)
        save_raster(raster, tmp_path / "f.png", bit_depth=16)
        assert np.abs(load_raster(tmp_path / "f.png") - raster).max() <= 1 / 65535

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingDataError):
            load_raster(tmp_path / "nope.png")

    def test_corrupt_file(self, tmp_path):
        (tmp_path / "bad.png").write_bytes(b"not an image")
        with pytest.raises(MissingDataError):
            load_raster(tmp_path / "bad.png")

    def test_validate_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            validate_raster(np.full((2, 2, 1), 1.5, np.float32))
        with pytest.raises(ValueError):
            validate_raster(np.full((2, 2, 1), np.nan, np.float32))


class TestManifest:
    def test_matched_pairs(self, tmp_path):
        write_dataset(tmp_path / "d", n_pairs=5, size=16)
        manifest = build_manifest(tmp_path / "d")
        assert manifest.pair_ids == [f"s{i:02d}" for i in range(5)]
        assert manifest.split == {}
        assert manifest.warnings == []

    def test_empty_directories(self, tmp_path):
        (tmp_path / "d" / "cloud").mkdir(parents=True)
        (tmp_path / "d" / "label").mkdir()
        assert build_manifest(tmp_path / "d").pair_ids == []

    def test_unmatched_stem_warns_but_keeps_matched(self, tmp_path):
        root = write_dataset(tmp_path / "d", n_pairs=3, size=16)
        extra = root / "cloud" / "zzz.png"
        extra.write_bytes((root / "cloud" / "s00.png").read_bytes())
        manifest = build_manifest(root)
        assert len(manifest.pair_ids) == 3
        assert len(manifest.warnings) == 1
        assert "zzz" in manifest.warnings[0]

    def test_missing_subdirectory(self, tmp_path):
        (tmp_path / "d" / "cloud").mkdir(parents=True)
        with pytest.raises(MissingDataError):
            build_manifest(tmp_path / "d")

    def test_dataset_scale_500_pairs(self, tmp_path):
        # full RICE1-sized manifest (pairing only reads filenames)
        root = tmp_path / "d"
        (root / "cloud").mkdir(parents=True)
        (root / "label").mkdir()
        save_raster(np.zeros((1, 1, 1), np.float32), root / "cloud" / "seed.png")
        blob = (root / "cloud" / "seed.png").read_bytes()
        for i in range(500):
            (root / "cloud" / f"r{i:03d}.png").write_bytes(blob)
            (root / "label" / f"r{i:03d}.png").write_bytes(blob)
        (root / "cloud" / "seed.png").unlink()
        manifest = build_manifest(root)
        assert len(manifest.pair_ids) == 500
        split = split_manifest(manifest, SplitSpec(320, 80, 0), pool=400)
        assert len(split.ids_for("train")) == 320
        assert len(split.ids_for("val")) == 80

    def test_json_roundtrip(self, tmp_path):
        root = write_dataset(tmp_path / "d", n_pairs=4, size=16)
        manifest = split_manifest(build_manifest(root), SplitSpec(2, 1, 5))
        save_manifest(manifest, tmp_path / "m.json")
        loaded = load_manifest(tmp_path / "m.json")
        assert loaded.pair_ids == manifest.pair_ids
        assert loaded.split == manifest.split
        assert str(loaded.root) == str(manifest.root)


class TestSplit:
    def _manifest(self, tmp_path, n=10):
        return build_manifest(write_dataset(tmp_path / "d", n_pairs=n, size=16))

    def test_counts_and_disjointness(self, tmp_path):
        manifest = self._manifest(tmp_path)
        split = split_manifest(manifest, SplitSpec(6, 3, 1))
        train, val = set(split.ids_for("train")), set(split.ids_for("val"))
        assert len(train) == 6 and len(val) == 3
        assert train & val == set()
        assert (train | val) <= set(manifest.pair_ids)

    def test_all_train(self, tmp_path):
        split = split_manifest(self._manifest(tmp_path), SplitSpec(10, 0, 1))
        assert len(split.ids_for("train")) == 10
        assert split.ids_for("val") == []

    def test_same_seed_identical(self, tmp_path):
        manifest = self._manifest(tmp_path)
        a = split_manifest(manifest, SplitSpec(5, 3, 42))
        b = split_manifest(manifest, SplitSpec(5, 3, 42))
        assert a.split == b.split

    def test_different_seed_differs(self, tmp_path):
        manifest = self._manifest(tmp_path)
        a = split_manifest(manifest, SplitSpec(5, 3, 1))
        b = split_manifest(manifest, SplitSpec(5, 3, 2))
        assert a.split != b.split

    def test_counts_exceeding_pairs(self, tmp_path):
        with pytest.raises(ConfigError):
            split_manifest(self._manifest(tmp_path), SplitSpec(9, 2, 0))

    def test_pool_limits_candidates(self, tmp_path):
        manifest = self._manifest(tmp_path)
        split = split_manifest(manifest, SplitSpec(3, 1, 0), pool=4)
        assigned = set(split.ids_for("train")) | set(split.ids_for("val"))
        assert assigned == set(sorted(manifest.pair_ids)[:4])

    def test_load_pair(self, tmp_path):
        root = write_dataset(tmp_path / "d", n_pairs=2, size=16)
        pair = load_pair(build_manifest(root), "s00")
        assert pair.cloudy.shape == pair.clean.shape == (16, 16, 3)


class TestAugment:
    def _pair(self, seed=0, h=32, w=32):
        return ImagePair("p", random_raster(seed, h, w), random_raster(seed + 1, h, w))

    def test_full_crop_no_flip_is_identity(self):
        pair = self._pair()
        out = augment(pair, 32, seed=5, hflip=False)
        assert np.array_equal(out.cloudy, pair.cloudy)
        assert np.array_equal(out.clean, pair.clean)

    def test_crop_shape_and_alignment(self):
        raster = random_raster(3)
        pair = ImagePair("p", raster, raster.copy())
        out = augment(pair, 8, seed=9)
        assert out.cloudy.shape == (8, 8, 3)
        # cloudy == clean in, so the identical transform keeps them equal
        assert np.array_equal(out.cloudy, out.clean)

    def test_crop_window_content_matches_source(self):
        pair = self._pair()
        out = augment(pair, 16, seed=11, hflip=False)
        found = False
        for oy in range(17):
            for ox in range(17):
                if np.array_equal(pair.cloudy[oy : oy + 16, ox : ox + 16], out.cloudy):
                    found = True
                    assert np.array_equal(pair.clean[oy : oy + 16, ox : ox + 16], out.clean)
        assert found

    def test_same_seed_identical(self):
        pair = self._pair()
        a = augment(pair, 16, seed=123)
        b = augment(pair, 16, seed=123)
        assert np.array_equal(a.cloudy, b.cloudy)
        assert np.array_equal(a.clean, b.clean)

    def test_crop_too_large(self):
        with pytest.raises(ConfigError):
            augment(self._pair(), 64, seed=0)


class TestModelRange:
    def test_midpoint(self):
        t = to_model_range(np.full((2, 2, 1), 0.5, np.float32))
        assert torch.all(t == 0.0)

    def test_zero_maps_to_minus_one_and_back(self):
        raster = np.zeros((2, 2, 3), np.float32)
        t = to_model_range(raster)
        assert torch.all(t == -1.0)
        assert np.array_equal(from_model_range(t), raster)

    def test_out_of_range_clamps(self):
        t = torch.full((3, 2, 2), 1.4)
        assert from_model_range(t).max() == 1.0

    def test_roundtrip_close(self):
        raster = random_raster(7)
        back = from_model_range(to_model_range(raster))
        assert np.abs(back - raster).max() <= 1e-7

    def test_tensor_layout(self):
        raster = random_raster(8, 4, 6, 3)
        t = to_model_range(raster)
        assert t.shape == (3, 4, 6)
        assert t.dtype == torch.float32
