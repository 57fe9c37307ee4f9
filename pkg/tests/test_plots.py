import numpy as np
import pytest

from cloudgan.data import load_raster
from cloudgan.errors import MissingDataError
from cloudgan.plots import PlotSample, attention_overlay, emit_plots, triptych
from cloudgan.training import TrainLog, TrainLogRow


def log_with(n_rows):
    rows = [
        TrainLogRow(e + 1, 1.0 / (e + 1), 0.5, 0.2 / (e + 1), 0.1, 20.0 + e, 0.8, 1.0)
        for e in range(n_rows)
    ]
    return TrainLog(rows)


def solid(color, size=24):
    return np.tile(np.asarray(color, np.float32), (size, size, 1))


def sample(i="s0"):
    return PlotSample(
        id=i,
        cloudy=solid((1.0, 0.0, 0.0)),
        generated=solid((0.0, 1.0, 0.0)),
        clean=solid((0.0, 0.0, 1.0)),
        attention_maps=[np.full((24, 24, 1), 0.7, np.float32)],
    )


def test_single_epoch_curves_exist(tmp_path):
    written = emit_plots(log_with(1), [], tmp_path)
    names = {p.name for p in written}
    assert names == {"loss_curves.png", "val_metrics.png"}
    assert all(p.stat().st_size > 0 for p in written)


def test_three_samples_three_triptychs(tmp_path):
    samples = [sample(f"s{i}") for i in range(3)]
    written = emit_plots(log_with(2), samples, tmp_path, tag="cafe01")
    triptychs = [p for p in written if "triptych" in p.name]
    assert len(triptychs) == 3
    assert all("cafe01" in p.name for p in written)


def test_triptych_panel_order_left_to_right(tmp_path):
    # cloudy red | generated green | clean blue
    written = emit_plots(log_with(1), [sample()], tmp_path)
    trip_path = next(p for p in written if "triptych" in p.name)
    img = load_raster(trip_path)
    h, w, _ = img.shape
    left = img[:, : 24 // 2]
    mid = img[:, w // 2 - 6 : w // 2 + 6]
    right = img[:, -12:]
    assert left[:, :, 0].mean() > 0.9 and left[:, :, 1].mean() < 0.1
    assert mid[:, :, 1].mean() > 0.9 and mid[:, :, 0].mean() < 0.1
    assert right[:, :, 2].mean() > 0.9 and right[:, :, 1].mean() < 0.1


def test_attention_overlay_files(tmp_path):
    written = emit_plots(log_with(1), [sample()], tmp_path)
    assert any("attention" in p.name for p in written)


def test_attention_overlay_blend_bounds():
    out = attention_overlay(solid((0.5, 0.5, 0.5)), np.ones((24, 24, 1), np.float32))
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_triptych_geometry():
    strip = triptych(sample(), gap=4)
    assert strip.shape == (24, 24 * 3 + 8, 3)


def test_empty_log_rejected(tmp_path):
    with pytest.raises(MissingDataError):
        emit_plots(TrainLog([]), [], tmp_path)
