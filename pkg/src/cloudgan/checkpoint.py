"""Single-file checkpoint container: JSON header + raw float32 payloads.

Layout (language-neutral, bit-exact):

* bytes 0..7: magic ``b"CGNCKPT1"``
* bytes 8..15: header length, unsigned 64-bit little-endian
* header: UTF-8 JSON ``{"epoch", "config_hash", "metrics", "extra",
  "tensors": [{"name", "shape", "dtype", "offset", "nbytes"}]}``
* payload: concatenated raw little-endian float32 buffers, C order,
  ``offset`` relative to the payload start.

Optimizer scalar state (Adam step counts) is stored as 0-d float32 tensors,
which is exact below 2**24 steps.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IOFailure, MissingDataError

MAGIC = b"CGNCKPT1"


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    epoch: int = 0
    config_hash: str = ""
    metrics: dict | None = None
    extra: dict = field(default_factory=dict)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Atomically write the container (temp file + rename)."""
    entries = []
    payloads = []
    offset = 0
    for name in sorted(ckpt.tensors):
        arr = np.asarray(ckpt.tensors[name], dtype="<f4")  # keeps 0-d shapes
        raw = np.ascontiguousarray(arr).tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": "float32",
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps(
        {
            "epoch": ckpt.epoch,
            "config_hash": ckpt.config_hash,
            "metrics": ckpt.metrics,
            "extra": ckpt.extra,
            "tensors": entries,
        }
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            for raw in payloads:
                fh.write(raw)
        os.replace(tmp_name, path)
    except OSError as exc:
        raise IOFailure(f"could not write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise MissingDataError(f"checkpoint not found: {path}")
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IOFailure(f"could not read checkpoint {path}: {exc}") from exc
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise IOFailure(f"not a checkpoint container: {path}")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    header_end = 16 + header_len
    if len(blob) < header_end:
        raise IOFailure(f"truncated checkpoint header: {path}")
    try:
        header = json.loads(blob[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IOFailure(f"corrupt checkpoint header in {path}: {exc}") from exc
    payload = blob[header_end:]
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise IOFailure(f"truncated checkpoint payload in {path}")
        arr = np.frombuffer(payload[start : start + nbytes], dtype="<f4")
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return Checkpoint(
        tensors=tensors,
        epoch=header.get("epoch", 0),
        config_hash=header.get("config_hash", ""),
        metrics=header.get("metrics"),
        extra=header.get("extra", {}),
    )
