import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cloudgan.clouddetect import (
    BandStack,
    CloudMask,
    FilesystemTileSource,
    Rule,
    TileRequest,
    detect_multiband,
    detect_rgb,
    detect_series,
    load_band_stack,
    mask_stats,
    overlay,
    save_band_stack,
)
from cloudgan.errors import ConfigError, MissingDataError

from synth import make_scene


def rgb_stack(data: np.ndarray, timestamp=None) -> BandStack:
    return BandStack(data=data, band_names=["R", "G", "B"], timestamp=timestamp)


def const_stack(value: float, shape=(8, 8)) -> BandStack:
    return rgb_stack(np.full((*shape, 3), value, np.float32))


class TestDetectRgb:
    def test_black_image_has_zero_probability(self):
        mask = detect_rgb(const_stack(0.0))
        assert np.all(mask.prob == 0)
        assert mask_stats(mask)["fraction"] == 0.0

    def test_white_image_fully_flagged(self):
        mask = detect_rgb(const_stack(1.0))
        assert np.all(mask.prob == 1.0)
        assert mask_stats(mask)["fraction"] == 1.0

    def test_uniform_gray_plug_in(self):
        mask = detect_rgb(const_stack(0.8))
        assert np.allclose(mask.prob, 0.8)
        assert np.all(mask.mask == 1)  # 0.8 >= 0.65

    def test_matches_scalar_loop(self):
        data = np.random.default_rng(0).random((5, 6, 3)).astype(np.float32)
        mask = detect_rgb(rgb_stack(data))
        for y in range(5):
            for x in range(6):
                r, g, b = (float(v) for v in data[y, x])
                expected = ((r + g + b) / 3) * (1 - (max(r, g, b) - min(r, g, b)))
                assert mask.prob[y, x] == pytest.approx(max(0.0, min(1.0, expected)), abs=1e-6)

    @given(st.integers(min_value=0, max_value=2**16))
    def test_invariant_under_channel_permutation(self, seed):
        r = np.random.default_rng(seed)
        data = r.random((4, 4, 3)).astype(np.float32)
        perm = r.permutation(3)
        direct = detect_rgb(rgb_stack(data))
        permuted = detect_rgb(rgb_stack(data[:, :, perm]))
        assert np.array_equal(direct.prob, permuted.prob)

    def test_missing_band_rejected(self):
        stack = BandStack(np.zeros((4, 4, 2), np.float32), ["R", "G"])
        with pytest.raises(MissingDataError):
            detect_rgb(stack)

    def test_mask_consistent_with_threshold(self):
        data = np.random.default_rng(1).random((16, 16, 3)).astype(np.float32)
        mask = detect_rgb(rgb_stack(data), threshold=0.4)
        assert np.array_equal(mask.mask, (mask.prob >= 0.4).astype(np.uint8))


class TestDetectMultiband:
    def _stack_with_cirrus(self, prob_target=0.5, cirrus=0.05):
        # gray value v gives prob v (whiteness 1)
        data = np.full((4, 4, 4), prob_target, np.float32)
        data[:, :, 3] = cirrus
        return BandStack(data, ["R", "G", "B", "B10"])

    def test_empty_rules_reduce_to_rgb_bitwise(self):
        data = np.random.default_rng(2).random((6, 6, 3)).astype(np.float32)
        stack = rgb_stack(data)
        assert np.array_equal(detect_multiband(stack, []).prob, detect_rgb(stack).prob)

    def test_cirrus_boost_plug_in(self):
        stack = self._stack_with_cirrus()
        mask = detect_multiband(stack, [Rule("B10", 0.01, 0.3)])
        assert np.allclose(mask.prob, 0.8, atol=1e-6)

    def test_boost_not_applied_below_min_value(self):
        stack = self._stack_with_cirrus(cirrus=0.005)
        mask = detect_multiband(stack, [Rule("B10", 0.01, 0.3)])
        assert np.allclose(mask.prob, 0.5, atol=1e-6)

    def test_negative_weight_penalizes_dark_band(self):
        data = np.full((4, 4, 4), 0.7, np.float32)
        data[:, :, 3] = 0.01  # dark NIR: water-like
        stack = BandStack(data, ["R", "G", "B", "B08"])
        mask = detect_multiband(stack, [Rule("B08", 0.06, -0.25)])
        assert np.allclose(mask.prob, 0.45, atol=1e-6)

    def test_probability_clamped(self):
        stack = self._stack_with_cirrus(prob_target=0.9)
        mask = detect_multiband(stack, [Rule("B10", 0.01, 0.5)])
        assert np.all(mask.prob <= 1.0)

    def test_rule_on_absent_band_rejected(self):
        with pytest.raises(MissingDataError):
            detect_multiband(const_stack(0.5), [Rule("B10", 0.01, 0.3)])

    def test_rule_dicts_accepted(self):
        stack = self._stack_with_cirrus()
        mask = detect_multiband(stack, [{"band": "B10", "min_value": 0.01, "weight": 0.3}])
        assert np.allclose(mask.prob, 0.8, atol=1e-6)


class TestDetectSeries:
    def _series_with_static_roof(self, frames=4, size=16):
        base = np.full((size, size, 3), 0.3, np.float32)
        base[2:6, 2:6] = 0.9  # static bright white roof, above threshold
        return [rgb_stack(base.copy(), timestamp=f"2024-01-0{i+1}") for i in range(frames)]

    def test_static_bright_surface_suppressed(self):
        masks = detect_series(self._series_with_static_roof())
        assert all(mask_stats(m)["fraction"] == 0.0 for m in masks)

    def test_transient_blob_flagged_only_in_its_frame(self):
        stacks = self._series_with_static_roof()
        cloudy = stacks[2].data.copy()
        cloudy[8:13, 8:13] = 0.97  # transient cloud
        stacks[2] = rgb_stack(cloudy, timestamp=stacks[2].timestamp)
        masks = detect_series(stacks)
        assert mask_stats(masks[2])["fraction"] > 0
        for i in (0, 1, 3):
            assert mask_stats(masks[i])["fraction"] == 0.0
        assert np.all(masks[2].mask[2:6, 2:6] == 0)  # roof still suppressed

    def test_series_masks_pointwise_below_single_frame(self):
        r = np.random.default_rng(3)
        stacks = [rgb_stack(r.random((12, 12, 3)).astype(np.float32)) for _ in range(5)]
        series = detect_series(stacks, threshold=0.3, delta=0.05)
        for stack, series_mask in zip(stacks, series):
            single = detect_rgb(stack, threshold=0.3)
            assert np.all(series_mask.mask <= single.mask)

    def test_single_frame_rejected(self):
        with pytest.raises(ConfigError):
            detect_series([const_stack(0.5)])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            detect_series([const_stack(0.5, (8, 8)), const_stack(0.5, (9, 8))])


class TestOverlay:
    def test_empty_mask_is_identity(self):
        image = np.random.default_rng(4).random((6, 6, 3)).astype(np.float32)
        mask = CloudMask.from_prob(np.zeros((6, 6), np.float32), 0.5)
        assert np.array_equal(overlay(image, mask), image)

    def test_full_mask_full_opacity_is_tint(self):
        image = np.random.default_rng(5).random((4, 4, 3)).astype(np.float32)
        mask = CloudMask.from_prob(np.ones((4, 4), np.float32), 0.5)
        out = overlay(image, mask, tint=(1.0, 0.0, 0.0), opacity=1.0)
        assert np.allclose(out, np.array([1.0, 0.0, 0.0]))

    def test_half_plane_mask_leaves_unmasked_half_untouched(self):
        image = np.random.default_rng(6).random((4, 8, 3)).astype(np.float32)
        prob = np.zeros((4, 8), np.float32)
        prob[:, 4:] = 1.0
        out = overlay(image, CloudMask.from_prob(prob, 0.5))
        assert np.array_equal(out[:, :4], image[:, :4])
        assert not np.array_equal(out[:, 4:], image[:, 4:])

    def test_shape_mismatch_rejected(self):
        image = np.zeros((4, 4, 3), np.float32)
        mask = CloudMask.from_prob(np.zeros((5, 5), np.float32), 0.5)
        with pytest.raises(ValueError):
            overlay(image, mask)


class TestMaskStats:
    def test_extremes_and_checkerboard(self):
        zero = CloudMask.from_prob(np.zeros((4, 4), np.float32), 0.5)
        one = CloudMask.from_prob(np.ones((4, 4), np.float32), 0.5)
        checker = np.indices((4, 4)).sum(axis=0) % 2
        half = CloudMask.from_prob(checker.astype(np.float32), 0.5)
        assert mask_stats(zero)["fraction"] == 0.0
        assert mask_stats(one)["fraction"] == 1.0
        assert mask_stats(half)["fraction"] == 0.5


class TestBandStackIO:
    def _stack(self, seed=0):
        data = np.random.default_rng(seed).random((6, 5, 4)).astype(np.float32)
        return BandStack(data, ["R", "G", "B", "B10"], timestamp="2024-03-01T10:00:00")

    def test_roundtrip_bit_exact(self, tmp_path):
        stack = self._stack()
        save_band_stack(stack, tmp_path / "t0")
        loaded = load_band_stack(tmp_path / "t0")
        assert np.array_equal(loaded.data, stack.data)
        assert loaded.band_names == stack.band_names
        assert loaded.timestamp == stack.timestamp

    def test_missing_plane_rejected(self, tmp_path):
        save_band_stack(self._stack(), tmp_path / "t0")
        (tmp_path / "t0" / "B10.f32").unlink()
        with pytest.raises(MissingDataError):
            load_band_stack(tmp_path / "t0")

    def test_tile_source_sorts_and_filters(self, tmp_path):
        for i, ts in enumerate(["2024-01-03", "2024-01-01", "2024-01-02"]):
            stack = BandStack(
                np.full((4, 4, 3), 0.1 * (i + 1), np.float32),
                ["R", "G", "B"],
                timestamp=ts,
            )
            save_band_stack(stack, tmp_path / f"dir{i}")
        source = FilesystemTileSource(tmp_path)
        stacks = source.fetch(TileRequest())
        assert [s.timestamp for s in stacks] == ["2024-01-01", "2024-01-02", "2024-01-03"]
        ranged = source.fetch(TileRequest(start="2024-01-02", end="2024-01-03"))
        assert len(ranged) == 2

    def test_tile_source_band_selection_and_bbox(self, tmp_path):
        save_band_stack(self._stack(), tmp_path / "t0")
        source = FilesystemTileSource(tmp_path)
        stacks = source.fetch(TileRequest(bands=["B10", "R"], bbox=(1, 2, 4, 5)))
        assert stacks[0].band_names == ["B10", "R"]
        assert stacks[0].data.shape == (3, 3, 2)

    def test_tile_source_missing_band_rejected(self, tmp_path):
        save_band_stack(self._stack(), tmp_path / "t0")
        with pytest.raises(MissingDataError):
            FilesystemTileSource(tmp_path).fetch(TileRequest(bands=["B99"]))


class TestSyntheticComposite:
    def test_rgb_detection_iou_on_opaque_blobs(self):
        cloudy, _, truth = make_scene(
            42, size=128, alpha_range=(1.0, 1.0), soft_edges=False
        )
        mask = detect_rgb(rgb_stack(cloudy))
        inter = np.logical_and(mask.mask, truth).sum()
        union = np.logical_or(mask.mask, truth).sum()
        assert inter / union >= 0.8
