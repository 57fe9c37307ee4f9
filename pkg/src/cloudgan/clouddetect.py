"""Heuristic cloud-mask detection over RGB and multi-band stacks.

A transparent brightness-times-whiteness score replaces any learned detector:
clouds are bright and spectrally flat, so ``prob = mean(R,G,B) *
(1 - (max(R,G,B) - min(R,G,B)))``. Multi-band rules and a temporal-median
filter refine it:

* rule ``{band, min_value, weight}`` with ``weight >= 0`` adds
  ``weight * 1[value >= min_value]`` (e.g. a cirrus-band boost);
* ``weight < 0`` adds ``weight * 1[value < min_value]`` — a darkness penalty
  (e.g. suppress water, which is dark in the NIR band);
* across a time series, a pixel keeps its single-frame probability only where
  its brightness exceeds the per-pixel temporal median by ``delta``, which
  suppresses static bright surfaces.

Band stacks live on disk as one raw little-endian float32 plane per band
(row-major H x W, ``<band>.f32``) plus a ``meta.json`` sidecar
``{"width", "height", "bands": [...], "timestamp"}``, one directory per
timestamp under the tile root.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import validate_raster
from .errors import ConfigError, IOFailure, MissingDataError

DEFAULT_THRESHOLD = 0.65
DEFAULT_SERIES_DELTA = 0.15
RGB_BANDS = ("R", "G", "B")

#: Illustrative defaults: cirrus-band boost + NIR water-darkness penalty.
DEFAULT_RULES = (
    {"band": "B10", "min_value": 0.01, "weight": 0.3},
    {"band": "B08", "min_value": 0.06, "weight": -0.25},
)


@dataclass
class BandStack:
    """(H, W, B) multi-band raster in [0, 1] with unique band names."""

    data: np.ndarray
    band_names: list[str]
    timestamp: str | None = None

    def __post_init__(self):
        validate_raster(self.data, "band stack")
        if len(self.band_names) != self.data.shape[2]:
            raise ValueError(
                f"{len(self.band_names)} band names for {self.data.shape[2]} planes"
            )
        if len(set(self.band_names)) != len(self.band_names):
            raise ValueError("band names must be unique")

    def band(self, name: str) -> np.ndarray:
        try:
            return self.data[:, :, self.band_names.index(name)]
        except ValueError:
            raise MissingDataError(
                f"band {name!r} not in stack (has {self.band_names})"
            ) from None

    def has_bands(self, names: tuple[str, ...]) -> bool:
        return all(n in self.band_names for n in names)


@dataclass
class CloudMask:
    """Per-pixel cloud probability plus its thresholded binary mask."""

    prob: np.ndarray
    mask: np.ndarray
    threshold: float

    @classmethod
    def from_prob(cls, prob: np.ndarray, threshold: float) -> "CloudMask":
        prob = np.clip(prob.astype(np.float32), 0.0, 1.0)
        return cls(prob=prob, mask=(prob >= threshold).astype(np.uint8),
                   threshold=threshold)


@dataclass
class Rule:
    band: str
    min_value: float
    weight: float

    @classmethod
    def from_dict(cls, doc: dict) -> "Rule":
        try:
            return cls(band=doc["band"], min_value=float(doc["min_value"]),
                       weight=float(doc["weight"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed rule {doc!r}: {exc}") from exc


def rgb_cloud_probability(
    stack: BandStack, bands: tuple[str, str, str] = RGB_BANDS
) -> np.ndarray:
    rgb = np.stack([stack.band(b) for b in bands], axis=2).astype(np.float32)
    # sorting fixes the summation order, so the symmetric formula is
    # bit-identical under any permutation of the three bands
    ordered = np.sort(rgb, axis=2)
    brightness = (ordered[:, :, 0] + ordered[:, :, 1] + ordered[:, :, 2]) / 3.0
    whiteness = 1.0 - (ordered[:, :, 2] - ordered[:, :, 0])
    return np.clip(brightness * whiteness, 0.0, 1.0)


def detect_rgb(
    stack: BandStack,
    threshold: float = DEFAULT_THRESHOLD,
    bands: tuple[str, str, str] = RGB_BANDS,
) -> CloudMask:
    """Brightness x whiteness cloud probability, thresholded into a mask."""
    return CloudMask.from_prob(rgb_cloud_probability(stack, bands), threshold)


def detect_multiband(
    stack: BandStack,
    rules: list[Rule | dict],
    threshold: float = DEFAULT_THRESHOLD,
    bands: tuple[str, str, str] = RGB_BANDS,
) -> CloudMask:
    """RGB probability modulated by per-band threshold rules.

    An empty rule list reduces bitwise to :func:`detect_rgb`.
    """
    prob = rgb_cloud_probability(stack, bands)
    for rule in rules:
        if isinstance(rule, dict):
            rule = Rule.from_dict(rule)
        plane = stack.band(rule.band)
        if rule.weight >= 0:
            prob = prob + rule.weight * (plane >= rule.min_value)
        else:
            prob = prob + rule.weight * (plane < rule.min_value)
    return CloudMask.from_prob(prob, threshold)


def detect_series(
    stacks: list[BandStack],
    threshold: float = DEFAULT_THRESHOLD,
    delta: float = DEFAULT_SERIES_DELTA,
    bands: tuple[str, str, str] = RGB_BANDS,
) -> list[CloudMask]:
    """Temporal-median filtering over a co-registered time series.

    A pixel keeps its single-frame probability at time t only if its
    brightness exceeds its temporal median by ``delta``; elsewhere the
    probability drops to zero, so series masks are pointwise <= the
    single-frame masks.
    """
    if len(stacks) < 2:
        raise ConfigError("detect_series needs at least 2 stacks")
    shapes = {s.data.shape[:2] for s in stacks}
    if len(shapes) != 1:
        raise ConfigError(f"series stacks are not co-registered: shapes {sorted(shapes)}")
    brightness = np.stack(
        [np.stack([s.band(b) for b in bands], axis=2).mean(axis=2) for s in stacks]
    )
    median = np.median(brightness, axis=0)
    masks = []
    for t, stack in enumerate(stacks):
        prob = rgb_cloud_probability(stack, bands)
        transient = brightness[t] > median + delta
        masks.append(CloudMask.from_prob(np.where(transient, prob, 0.0), threshold))
    return masks


def overlay(
    image: np.ndarray,
    mask: CloudMask,
    tint: tuple[float, float, float] = (1.0, 0.1, 0.1),
    opacity: float = 0.5,
) -> np.ndarray:
    """Alpha-blend the tint over masked pixels; unmasked pixels pass through."""
    validate_raster(image)
    if mask.mask.shape != image.shape[:2]:
        raise ValueError(
            f"mask {mask.mask.shape} does not match image {image.shape[:2]}"
        )
    tint_arr = np.asarray(tint, dtype=np.float32).reshape(1, 1, -1)
    if tint_arr.shape[2] != image.shape[2]:
        raise ValueError(f"tint has {tint_arr.shape[2]} channels, image {image.shape[2]}")
    blended = (1.0 - opacity) * image + opacity * tint_arr
    selected = mask.mask.astype(bool)[:, :, None]
    return np.where(selected, blended, image).astype(np.float32)


def mask_stats(mask: CloudMask) -> dict[str, float]:
    return {"fraction": float(mask.mask.mean())}


@dataclass
class TileRequest:
    """Filesystem tile query: optional pixel bbox, ISO time range, band subset."""

    bbox: tuple[int, int, int, int] | None = None  # (x0, y0, x1, y1), half-open
    start: str | None = None
    end: str | None = None
    bands: list[str] | None = None


class TileSource:
    """Interface: fetch(request) -> time-sorted list of BandStack."""

    def fetch(self, request: TileRequest) -> list[BandStack]:
        raise NotImplementedError


def save_band_stack(stack: BandStack, directory: str | Path) -> None:
    """Write one ``<band>.f32`` plane per band plus the meta.json sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    h, w, _ = stack.data.shape
    meta = {
        "width": w,
        "height": h,
        "bands": list(stack.band_names),
        "timestamp": stack.timestamp,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2))
    for i, name in enumerate(stack.band_names):
        plane = np.ascontiguousarray(stack.data[:, :, i], dtype="<f4")
        plane.tofile(directory / f"{name}.f32")


def load_band_stack(directory: str | Path) -> BandStack:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise MissingDataError(f"no meta.json in {directory}")
    try:
        meta = json.loads(meta_path.read_text())
        w, h, names = int(meta["width"]), int(meta["height"]), list(meta["bands"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise IOFailure(f"malformed sidecar {meta_path}: {exc}") from exc
    planes = []
    for name in names:
        plane_path = directory / f"{name}.f32"
        if not plane_path.exists():
            raise MissingDataError(f"band plane missing: {plane_path}")
        plane = np.fromfile(plane_path, dtype="<f4")
        if plane.size != h * w:
            raise IOFailure(
                f"band plane {plane_path} has {plane.size} values, expected {h * w}"
            )
        planes.append(plane.reshape(h, w))
    return BandStack(
        data=np.stack(planes, axis=2),
        band_names=names,
        timestamp=meta.get("timestamp"),
    )


class FilesystemTileSource(TileSource):
    """Reads ``<root>/<timestamp>/<band>.f32`` + ``meta.json`` directories."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise MissingDataError(f"tile root not found: {self.root}")

    def fetch(self, request: TileRequest) -> list[BandStack]:
        stacks = []
        for entry in sorted(self.root.iterdir()):
            if not (entry / "meta.json").exists():
                continue
            stack = load_band_stack(entry)
            ts = stack.timestamp or entry.name
            if request.start is not None and ts < request.start:
                continue
            if request.end is not None and ts > request.end:
                continue
            if request.bands is not None:
                indices = [
                    stack.band_names.index(b)
                    for b in request.bands
                    if b in stack.band_names
                ]
                if len(indices) != len(request.bands):
                    missing = set(request.bands) - set(stack.band_names)
                    raise MissingDataError(
                        f"stack {entry.name} lacks requested bands {sorted(missing)}"
                    )
                stack = BandStack(
                    data=stack.data[:, :, indices],
                    band_names=list(request.bands),
                    timestamp=stack.timestamp,
                )
            if request.bbox is not None:
                x0, y0, x1, y1 = request.bbox
                h, w, _ = stack.data.shape
                if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
                    raise ConfigError(f"bbox {request.bbox} out of bounds for {w}x{h}")
                stack = BandStack(
                    data=np.ascontiguousarray(stack.data[y0:y1, x0:x1]),
                    band_names=list(stack.band_names),
                    timestamp=stack.timestamp,
                )
            stacks.append(stack)
        stacks.sort(key=lambda s: s.timestamp or "")
        return stacks
