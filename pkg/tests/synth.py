"""Synthetic RICE-style fixtures: smooth terrain + white cloud blobs."""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from cloudgan.data import SplitSpec, build_manifest, save_manifest, split_manifest


def make_scene(
    seed: int,
    size: int = 128,
    n_blobs: tuple[int, int] = (2, 5),
    alpha_range: tuple[float, float] = (0.75, 0.95),
    cloud_white: float = 0.97,
    soft_edges: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (cloudy, clean, mask): a terrain scene with elliptical clouds.

    ``mask`` is the ground-truth cloud mask (alpha > 0.5). ``soft_edges=False``
    with ``alpha_range=(1, 1)`` gives fully opaque, hard-edged blobs.
    """
    r = np.random.default_rng(seed)
    base = r.random((6, 6, 3)).astype(np.float32)
    clean = cv2.resize(base, (size, size), interpolation=cv2.INTER_CUBIC)
    clean = np.clip(clean, 0.0, 1.0)
    # green-dominant, moderate brightness: low cloud-probability background
    clean = clean * np.array([0.35, 0.5, 0.3], np.float32) + np.array(
        [0.08, 0.15, 0.05], np.float32
    )
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    alpha = np.zeros((size, size), np.float32)
    for _ in range(int(r.integers(n_blobs[0], n_blobs[1] + 1))):
        cy, cx = r.uniform(0.1, 0.9, 2) * size
        ry, rx = r.uniform(0.08, 0.22, 2) * size
        a = r.uniform(*alpha_range)
        blob = (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2) <= 1.0
        alpha = np.maximum(alpha, blob.astype(np.float32) * a)
    if soft_edges:
        alpha = cv2.GaussianBlur(alpha, (7, 7), 2.0)
    cloudy = clean * (1.0 - alpha[:, :, None]) + alpha[:, :, None] * cloud_white
    return (
        np.clip(cloudy, 0.0, 1.0).astype(np.float32),
        np.clip(clean, 0.0, 1.0).astype(np.float32),
        (alpha > 0.5).astype(np.uint8),
    )


def write_dataset(
    root: Path,
    n_pairs: int,
    size: int = 128,
    seed0: int = 5000,
    **scene_kwargs,
) -> Path:
    """Write n synthetic pairs under root/{cloud,label}/sNN.png."""
    (root / "cloud").mkdir(parents=True, exist_ok=True)
    (root / "label").mkdir(parents=True, exist_ok=True)
    for i in range(n_pairs):
        cloudy, clean, _ = make_scene(seed0 + i, size=size, **scene_kwargs)
        for sub, img in (("cloud", cloudy), ("label", clean)):
            bgr = cv2.cvtColor((img * 255.0 + 0.5).astype(np.uint8), cv2.COLOR_RGB2BGR)
            cv2.imwrite(str(root / sub / f"s{i:02d}.png"), bgr)
    return root


def split_dataset(root: Path, train: int, val: int, seed: int = 7):
    manifest = split_manifest(build_manifest(root), SplitSpec(train, val, seed))
    save_manifest(manifest, root / "manifest.json")
    return manifest
