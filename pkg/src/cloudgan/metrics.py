"""PSNR and SSIM on [0, 1] rasters, plus per-split evaluation reports.

Exact conventions (the test-suite oracles restate these independently):

* PSNR: ``10 * log10(1 / MSE)`` with peak 1.0; zero MSE yields +infinity,
  rendered as the string ``"inf"`` in reports and excluded from means (with
  a count flag) only when present.
* SSIM: single scale, 11x11 Gaussian window (sigma 1.5, normalized to unit
  sum), K1=0.01, K2=0.03, L=1. Statistics are windowed means/variances/
  covariance over the *valid* region (no padding); the SSIM map mean is taken
  per channel, then averaged across channels. Requires min(H, W) >= 11.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB between two [0, 1] rasters."""
    _check_pair(a, b)
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Unit-sum 2D Gaussian window used by both SSIM routes."""
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()


def _window_stats(plane: np.ndarray, window: np.ndarray) -> np.ndarray:
    # filter2D correlates full-size; cropping the border leaves exactly the
    # valid-window region
    half = window.shape[0] // 2
    filtered = cv2.filter2D(plane, -1, window, borderType=cv2.BORDER_CONSTANT)
    return filtered[half:-half, half:-half]


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity between two [0, 1] rasters."""
    _check_pair(a, b)
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    window = gaussian_window()
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    channel_means = []
    for ch in range(a.shape[2]):
        x = a[:, :, ch].astype(np.float64)
        y = b[:, :, ch].astype(np.float64)
        mu_x = _window_stats(x, window)
        mu_y = _window_stats(y, window)
        var_x = _window_stats(x * x, window) - mu_x**2
        var_y = _window_stats(y * y, window) - mu_y**2
        cov = _window_stats(x * y, window) - mu_x * mu_y
        ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
            (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        )
        channel_means.append(float(ssim_map.mean()))
    return float(np.mean(channel_means))


@dataclass
class MetricRow:
    id: str
    psnr_db: float
    ssim: float


@dataclass
class MetricReport:
    """Per-image and aggregate PSNR/SSIM for one model on one split."""

    per_image: list[MetricRow]
    mean_psnr_db: float
    mean_ssim: float
    n_psnr_inf: int = 0
    failed: list[str] = field(default_factory=list)
    config_hash: str = ""

    @classmethod
    def from_rows(
        cls, rows: list[MetricRow], failed: list[str] | None = None, config_hash: str = ""
    ) -> "MetricReport":
        finite = [r.psnr_db for r in rows if math.isfinite(r.psnr_db)]
        n_inf = sum(1 for r in rows if math.isinf(r.psnr_db))
        mean_psnr = float(np.mean(finite)) if finite else math.inf if n_inf else math.nan
        mean_ssim = float(np.mean([r.ssim for r in rows])) if rows else math.nan
        return cls(
            per_image=rows,
            mean_psnr_db=mean_psnr,
            mean_ssim=mean_ssim,
            n_psnr_inf=n_inf,
            failed=list(failed or []),
            config_hash=config_hash,
        )

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "psnr_db", "ssim"])
            for row in self.per_image:
                rendered = "inf" if math.isinf(row.psnr_db) else f"{row.psnr_db:.6f}"
                writer.writerow([row.id, rendered, f"{row.ssim:.6f}"])

    def write_summary(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        mean_psnr = "inf" if math.isinf(self.mean_psnr_db) else self.mean_psnr_db
        doc = {
            "mean_psnr_db": mean_psnr,
            "mean_ssim": self.mean_ssim,
            "n": len(self.per_image),
            "n_psnr_inf": self.n_psnr_inf,
            "failed": self.failed,
            "config_hash": self.config_hash,
        }
        path.write_text(json.dumps(doc, indent=2))


def evaluate(
    generator,
    manifest,
    split: str = "val",
    config_hash: str = "",
) -> MetricReport:
    """Full-resolution PSNR/SSIM of generator outputs against clean images.

    Pairs are processed in sorted id order (deterministic reduction). Ids
    whose model output contains non-finite values are reported in ``failed``
    and excluded from the means rather than aborting the whole evaluation.
    """
    import torch

    from .data import from_model_range, load_pair, to_model_range
    from .errors import MissingDataError

    ids = sorted(manifest.ids_for(split))
    if not ids:
        raise MissingDataError(f"manifest has no ids in split {split!r}")
    rows: list[MetricRow] = []
    failed: list[str] = []
    was_training = generator.training
    generator.eval()
    try:
        with torch.no_grad():
            for pair_id in ids:
                pair = load_pair(manifest, pair_id)
                output = generator(to_model_range(pair.cloudy).unsqueeze(0))
                image = output.image[0]
                if not torch.isfinite(image).all():
                    failed.append(pair_id)
                    continue
                restored = from_model_range(image)
                rows.append(
                    MetricRow(pair_id, psnr(restored, pair.clean), ssim(restored, pair.clean))
                )
    finally:
        generator.train(was_training)
    return MetricReport.from_rows(rows, failed=failed, config_hash=config_hash)
