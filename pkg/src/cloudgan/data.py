"""Paired-dataset pipeline: raster IO, manifests, splits, and augmentation.

Conventions used everywhere else in the toolkit:

* a *raster* is a ``float32`` array of shape (H, W, C) with values in [0, 1];
* the dataset root contains ``cloud/<id>.png`` and ``label/<id>.png`` pairs
  (TIFF/JPEG/BMP stems pair the same way);
* model tensors are ``float32`` (C, H, W) in [-1, 1] (see
  :func:`to_model_range` / :func:`from_model_range`);
* manifests serialize as JSON ``{"root": ..., "pairs": [{"id", "split"}]}``
  with ``split`` one of ``"train"``, ``"val"`` or ``null``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
import torch

from .errors import ConfigError, IOFailure, MissingDataError
from .rng import SplitMix64

logger = logging.getLogger(__name__)

RASTER_EXTENSIONS = (".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp")

TRAIN = "train"
VAL = "val"


def validate_raster(arr: np.ndarray, name: str = "raster") -> np.ndarray:
    """Check raster invariants: (H, W, C) float array, finite, in [0, 1]."""
    if arr.ndim != 3:
        raise ValueError(f"{name}: expected (H, W, C) array, got shape {arr.shape}")
    h, w, c = arr.shape
    if h < 1 or w < 1 or c < 1:
        raise ValueError(f"{name}: degenerate shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name}: contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name}: values outside [0, 1]")
    return arr


@dataclass
class ImagePair:
    """Aligned cloudy/clean raster pair with a stable identifier."""

    id: str
    cloudy: np.ndarray
    clean: np.ndarray

    def __post_init__(self):
        if self.cloudy.shape != self.clean.shape:
            raise ValueError(
                f"pair {self.id}: cloudy {self.cloudy.shape} != clean {self.clean.shape}"
            )


@dataclass
class DatasetManifest:
    """Ordered pair ids under a dataset root plus an optional split map."""

    root: Path
    pair_ids: list[str]
    split: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def ids_for(self, split: str) -> list[str]:
        return [i for i in self.pair_ids if self.split.get(i) == split]


@dataclass
class SplitSpec:
    train_count: int
    val_count: int
    seed: int

    def __post_init__(self):
        if self.train_count < 0 or self.val_count < 0:
            raise ConfigError("split counts must be non-negative")


def load_raster(path: str | Path) -> np.ndarray:
    """Load an 8- or 16-bit image as a float32 (H, W, C) raster in [0, 1].

    Intensities are scaled by the bit-depth maximum (255 or 65535); channel
    order is RGB(A); single-channel files come back as (H, W, 1).
    """
    path = Path(path)
    if not path.exists():
        raise MissingDataError(f"raster not found: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise MissingDataError(f"unreadable or corrupt image: {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise MissingDataError(f"unsupported bit depth {raw.dtype} in {path}")
    if raw.ndim == 2:
        raw = raw[:, :, None]
    elif raw.shape[2] == 3:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    elif raw.shape[2] == 4:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGRA2RGBA)
    arr = raw.astype(np.float32) / scale
    return validate_raster(arr, str(path))


def save_raster(raster: np.ndarray, path: str | Path, bit_depth: int = 8) -> None:
    """Write a raster as an 8- or 16-bit image (format from the extension).

    Round-trip error through :func:`load_raster` is bounded by the
    quantization step ``1 / (2**bit_depth - 1)``.
    """
    validate_raster(raster)
    if bit_depth == 8:
        peak, dtype = 255.0, np.uint8
    elif bit_depth == 16:
        peak, dtype = 65535.0, np.uint16
    else:
        raise ConfigError(f"unsupported bit depth {bit_depth}")
    arr = np.rint(raster.astype(np.float64) * peak).astype(dtype)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    elif arr.shape[2] == 3:
        arr = cv2.cvtColor(arr, cv2.COLOR_RGB2BGR)
    elif arr.shape[2] == 4:
        arr = cv2.cvtColor(arr, cv2.COLOR_RGBA2BGRA)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), arr):
        raise IOFailure(f"could not write raster to {path}")


def _stems(directory: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for entry in sorted(directory.iterdir()):
        if entry.suffix.lower() in RASTER_EXTENSIONS and entry.is_file():
            out[entry.stem] = entry.name
    return out


def build_manifest(root: str | Path) -> DatasetManifest:
    """Pair filename stems present in both ``cloud/`` and ``label/``.

    Stems present on only one side are skipped with a warning record rather
    than failing, so partial datasets stay usable. The split map starts empty.
    """
    root = Path(root)
    cloud_dir, label_dir = root / "cloud", root / "label"
    for d in (cloud_dir, label_dir):
        if not d.is_dir():
            raise MissingDataError(f"dataset root is missing subdirectory: {d}")
    cloud, label = _stems(cloud_dir), _stems(label_dir)
    pair_ids = sorted(set(cloud) & set(label))
    warnings = [
        f"unmatched stem {stem!r} present only in {side}/"
        for side, only in (("cloud", set(cloud) - set(label)), ("label", set(label) - set(cloud)))
        for stem in sorted(only)
    ]
    for msg in warnings:
        logger.warning("%s: %s", root, msg)
    return DatasetManifest(root=root, pair_ids=pair_ids, warnings=warnings)


def pair_paths(manifest: DatasetManifest, pair_id: str) -> tuple[Path, Path]:
    """Resolve the on-disk cloudy/clean file paths for a pair id."""
    for ext in RASTER_EXTENSIONS:
        cloudy = manifest.root / "cloud" / f"{pair_id}{ext}"
        clean = manifest.root / "label" / f"{pair_id}{ext}"
        if cloudy.exists() and clean.exists():
            return cloudy, clean
    raise MissingDataError(f"no raster files for pair id {pair_id!r} under {manifest.root}")


def load_pair(manifest: DatasetManifest, pair_id: str) -> ImagePair:
    cloudy_path, clean_path = pair_paths(manifest, pair_id)
    return ImagePair(pair_id, load_raster(cloudy_path), load_raster(clean_path))


def split_manifest(
    manifest: DatasetManifest, spec: SplitSpec, pool: int | None = None
) -> DatasetManifest:
    """Assign train/val splits by a deterministic SplitMix64 Fisher–Yates shuffle.

    The candidate pool is the first ``pool`` pair ids in sorted order (all of
    them when ``pool`` is None). After shuffling, the first ``train_count``
    ids go to TRAIN, the next ``val_count`` to VAL; the rest stay unassigned.
    Equal (manifest, spec, pool) always produce byte-identical splits.
    """
    candidates = sorted(manifest.pair_ids)
    if pool is not None:
        if pool < 1:
            raise ConfigError("pool must be >= 1")
        candidates = candidates[:pool]
    if spec.train_count + spec.val_count > len(candidates):
        raise ConfigError(
            f"split needs {spec.train_count + spec.val_count} pairs "
            f"but only {len(candidates)} are available"
        )
    SplitMix64(spec.seed).shuffle(candidates)
    split: dict[str, str] = {}
    for pair_id in candidates[: spec.train_count]:
        split[pair_id] = TRAIN
    for pair_id in candidates[spec.train_count : spec.train_count + spec.val_count]:
        split[pair_id] = VAL
    return DatasetManifest(
        root=manifest.root,
        pair_ids=list(manifest.pair_ids),
        split=split,
        warnings=list(manifest.warnings),
    )


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    doc = {
        "root": str(manifest.root),
        "pairs": [
            {"id": pair_id, "split": manifest.split.get(pair_id)}
            for pair_id in manifest.pair_ids
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2))


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise MissingDataError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
        pairs = doc["pairs"]
        manifest = DatasetManifest(
            root=Path(doc["root"]),
            pair_ids=[p["id"] for p in pairs],
            split={p["id"]: p["split"] for p in pairs if p.get("split")},
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise IOFailure(f"malformed manifest {path}: {exc}") from exc
    return manifest


def augment(pair: ImagePair, crop: int, seed: int, hflip: bool = True) -> ImagePair:
    """Random crop + horizontal flip, identically applied to both images.

    Draw order from SplitMix64(seed): crop row offset, crop column offset,
    flip bit. ``crop == H == W`` with ``hflip=False`` is the identity.
    """
    h, w, _ = pair.cloudy.shape
    if crop > min(h, w):
        raise ConfigError(f"crop {crop} exceeds image size {h}x{w}")
    rng = SplitMix64(seed)
    oy = rng.below(h - crop + 1)
    ox = rng.below(w - crop + 1)
    flip = hflip and rng.below(2) == 1
    cloudy = pair.cloudy[oy : oy + crop, ox : ox + crop]
    clean = pair.clean[oy : oy + crop, ox : ox + crop]
    if flip:
        cloudy = cloudy[:, ::-1]
        clean = clean[:, ::-1]
    return ImagePair(pair.id, np.ascontiguousarray(cloudy), np.ascontiguousarray(clean))


def to_model_range(raster: np.ndarray) -> torch.Tensor:
    """Map a [0, 1] (H, W, C) raster to a [-1, 1] float32 (C, H, W) tensor."""
    validate_raster(raster)
    tensor = torch.from_numpy(np.ascontiguousarray(raster.transpose(2, 0, 1)))
    return tensor.float() * 2.0 - 1.0


def from_model_range(tensor: torch.Tensor) -> np.ndarray:
    """Invert :func:`to_model_range`, clamping back into [0, 1]."""
    if tensor.ndim != 3:
        raise ValueError(f"expected (C, H, W) tensor, got shape {tuple(tensor.shape)}")
    arr = ((tensor.detach().float() + 1.0) * 0.5).clamp_(0.0, 1.0)
    return np.ascontiguousarray(arr.cpu().numpy().transpose(1, 2, 0))
