"""Training curves, before/after triptychs, and attention-map overlays.

Triptychs and overlays are assembled as plain rasters (panel order fixed
left-to-right: cloudy, generated, ground truth) so their layout is pixel-
exact; curve figures go through matplotlib's Agg backend.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import save_raster
from .errors import MissingDataError
from .training import TrainLog


@dataclass
class PlotSample:
    id: str
    cloudy: np.ndarray
    generated: np.ndarray
    clean: np.ndarray
    attention_maps: list[np.ndarray] = field(default_factory=list)


def triptych(sample: PlotSample, gap: int = 4) -> np.ndarray:
    """Concatenate cloudy | generated | clean with a thin white gap."""
    h, _, c = sample.cloudy.shape
    spacer = np.ones((h, gap, c), dtype=np.float32)
    panels = [sample.cloudy, spacer, sample.generated, spacer, sample.clean]
    return np.concatenate(panels, axis=1)


def attention_overlay(
    image: np.ndarray, attention: np.ndarray, alpha: float = 0.55
) -> np.ndarray:
    """Blend a (H, W, 1) attention map over an image as a magma heatmap."""
    heat = plt.get_cmap("magma")(attention[:, :, 0])[:, :, :3].astype(np.float32)
    return np.clip((1.0 - alpha) * image + alpha * heat, 0.0, 1.0)


def emit_plots(
    log: TrainLog,
    samples: list[PlotSample],
    out_dir: str | Path,
    tag: str = "",
) -> list[Path]:
    """Write loss/metric curves and per-sample panels; returns written paths.

    ``tag`` (typically the short config hash) is appended to every filename
    so plots stay traceable to the config that produced them.
    """
    if not log.rows:
        raise MissingDataError("cannot plot an empty training log")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = f"_{tag}" if tag else ""
    written: list[Path] = []

    epochs = [r.epoch for r in log.rows]
    fig, (ax_adv, ax_rec) = plt.subplots(1, 2, figsize=(10, 4))
    ax_adv.plot(epochs, [r.g_adv for r in log.rows], label="g_adv", marker=".")
    ax_adv.plot(epochs, [r.d_adv for r in log.rows], label="d_adv", marker=".")
    ax_adv.set_xlabel("epoch")
    ax_adv.set_title("adversarial losses")
    ax_adv.legend()
    ax_rec.plot(epochs, [r.l1 for r in log.rows], label="l1", marker=".")
    ax_rec.plot(epochs, [r.att for r in log.rows], label="attention", marker=".")
    ax_rec.set_xlabel("epoch")
    ax_rec.set_title("reconstruction losses")
    ax_rec.legend()
    fig.tight_layout()
    loss_path = out_dir / f"loss_curves{suffix}.png"
    fig.savefig(loss_path, dpi=110)
    plt.close(fig)
    written.append(loss_path)

    fig, (ax_psnr, ax_ssim) = plt.subplots(1, 2, figsize=(10, 4))
    ax_psnr.plot(epochs, [r.val_psnr for r in log.rows], marker=".")
    ax_psnr.set_xlabel("epoch")
    ax_psnr.set_title("validation PSNR (dB)")
    ax_ssim.plot(epochs, [r.val_ssim for r in log.rows], marker=".")
    ax_ssim.set_xlabel("epoch")
    ax_ssim.set_title("validation SSIM")
    fig.tight_layout()
    metrics_path = out_dir / f"val_metrics{suffix}.png"
    fig.savefig(metrics_path, dpi=110)
    plt.close(fig)
    written.append(metrics_path)

    for sample in samples:
        trip_path = out_dir / f"sample_{sample.id}_triptych{suffix}.png"
        save_raster(triptych(sample), trip_path)
        written.append(trip_path)
        if sample.attention_maps:
            overlays = [
                attention_overlay(sample.cloudy, att) for att in sample.attention_maps
            ]
            h, _, c = sample.cloudy.shape
            spacer = np.ones((h, 4, c), dtype=np.float32)
            strip = overlays[0]
            for overlay_img in overlays[1:]:
                strip = np.concatenate([strip, spacer, overlay_img], axis=1)
            att_path = out_dir / f"sample_{sample.id}_attention{suffix}.png"
            save_raster(strip, att_path)
            written.append(att_path)
    return written
