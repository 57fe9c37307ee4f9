"""Adversarial training loop, checkpoint round trips, inference, comparison.

Determinism contract: given (seed, platform), data order, augmentation, and
weight init all derive from the seed alone, so two runs produce identical
loss rows (wall-clock timing aside) and resuming from epoch k reproduces the
uninterrupted run within float accumulation error.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (
    TRAIN,
    VAL,
    DatasetManifest,
    augment,
    from_model_range,
    load_pair,
    to_model_range,
)
from .errors import ConfigError, MissingDataError, NumericError
from .losses import (
    LossWeights,
    attention_loss,
    attention_target,
    discriminator_adversarial_loss,
    generator_adversarial_loss,
    l1_loss,
)
from .metrics import MetricReport, MetricRow, evaluate, psnr, ssim
from .networks import (
    CloudRemovalGenerator,
    DiscriminatorConfig,
    GeneratorConfig,
    PatchDiscriminator,
)
from .rng import SplitMix64, derive_seed

logger = logging.getLogger(__name__)

# seed-derivation context tags
_TAG_INIT = 1
_TAG_ORDER = 2
_TAG_AUG = 3


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 2
    lr: float = 2e-4
    adam_betas: tuple[float, float] = (0.5, 0.999)
    weights: LossWeights = field(default_factory=LossWeights)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    seed: int = 0
    crop: int = 256
    grad_clip: float | None = None
    hflip: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        self.adam_betas = tuple(self.adam_betas)

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "adam_betas": list(self.adam_betas),
            "weights": self.weights.to_dict(),
            "generator": self.generator.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "seed": self.seed,
            "crop": self.crop,
            "grad_clip": self.grad_clip,
            "hflip": self.hflip,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        doc["weights"] = LossWeights.from_dict(doc["weights"])
        doc["generator"] = GeneratorConfig.from_dict(doc["generator"])
        doc["discriminator"] = DiscriminatorConfig.from_dict(doc["discriminator"])
        return cls(**doc)


@dataclass
class TrainLogRow:
    epoch: int
    g_adv: float
    d_adv: float
    l1: float
    att: float
    val_psnr: float
    val_ssim: float
    wall_seconds: float

    _FIELDS = ("epoch", "g_adv", "d_adv", "l1", "att", "val_psnr", "val_ssim", "wall_seconds")

    def deterministic_fields(self) -> tuple:
        """Everything except wall-clock time (the reproducible part of a row)."""
        return (self.epoch, self.g_adv, self.d_adv, self.l1, self.att,
                self.val_psnr, self.val_ssim)


@dataclass
class TrainLog:
    rows: list[TrainLogRow] = field(default_factory=list)

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TrainLogRow._FIELDS)
            for row in self.rows:
                writer.writerow([getattr(row, name) for name in TrainLogRow._FIELDS])

    @classmethod
    def read_csv(cls, path: str | Path) -> "TrainLog":
        path = Path(path)
        if not path.exists():
            raise MissingDataError(f"training log not found: {path}")
        rows = []
        with path.open(newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append(
                    TrainLogRow(
                        epoch=int(rec["epoch"]),
                        **{k: float(rec[k]) for k in TrainLogRow._FIELDS[1:]},
                    )
                )
        return cls(rows)


def run_layout(run_dir: str | Path) -> dict[str, Path]:
    """Create the standard run directory tree and return its paths."""
    run_dir = Path(run_dir)
    layout = {name: run_dir / name for name in
              ("checkpoints", "logs", "reports", "plots", "samples")}
    for p in layout.values():
        p.mkdir(parents=True, exist_ok=True)
    layout["run"] = run_dir
    return layout


def _module_tensors(module: nn.Module, prefix: str) -> dict[str, np.ndarray]:
    return {
        f"{prefix}.{name}": p.detach().cpu().numpy().astype(np.float32)
        for name, p in module.named_parameters()
    }


def _optimizer_tensors(
    opt: torch.optim.Optimizer, module: nn.Module, prefix: str
) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for name, p in module.named_parameters():
        state = opt.state.get(p)
        if not state:
            continue
        out[f"{prefix}.{name}.exp_avg"] = state["exp_avg"].cpu().numpy().astype(np.float32)
        out[f"{prefix}.{name}.exp_avg_sq"] = state["exp_avg_sq"].cpu().numpy().astype(np.float32)
        out[f"{prefix}.{name}.step"] = np.float32(float(state["step"]))
    return out


def _restore_module(module: nn.Module, tensors: dict[str, np.ndarray], prefix: str) -> None:
    with torch.no_grad():
        for name, p in module.named_parameters():
            key = f"{prefix}.{name}"
            if key not in tensors:
                raise ConfigError(f"checkpoint is missing tensor {key!r}")
            arr = tensors[key]
            if tuple(arr.shape) != tuple(p.shape):
                raise ConfigError(
                    f"checkpoint tensor {key!r} has shape {arr.shape}, "
                    f"expected {tuple(p.shape)}"
                )
            p.copy_(torch.from_numpy(arr))


def _restore_optimizer(
    opt: torch.optim.Optimizer,
    module: nn.Module,
    tensors: dict[str, np.ndarray],
    prefix: str,
) -> None:
    for name, p in module.named_parameters():
        key = f"{prefix}.{name}"
        if f"{key}.exp_avg" not in tensors:
            continue
        opt.state[p] = {
            "step": torch.tensor(float(tensors[f"{key}.step"])),
            "exp_avg": torch.from_numpy(tensors[f"{key}.exp_avg"].copy()),
            "exp_avg_sq": torch.from_numpy(tensors[f"{key}.exp_avg_sq"].copy()),
        }


def capture_checkpoint(
    generator: CloudRemovalGenerator,
    discriminator: PatchDiscriminator,
    opt_g: torch.optim.Optimizer,
    opt_d: torch.optim.Optimizer,
    cfg: TrainConfig,
    epoch: int,
    config_hash: str,
    metrics: dict | None = None,
) -> Checkpoint:
    tensors: dict[str, np.ndarray] = {}
    tensors.update(_module_tensors(generator, "g"))
    tensors.update(_module_tensors(discriminator, "d"))
    tensors.update(_optimizer_tensors(opt_g, generator, "opt_g"))
    tensors.update(_optimizer_tensors(opt_d, discriminator, "opt_d"))
    return Checkpoint(
        tensors=tensors,
        epoch=epoch,
        config_hash=config_hash,
        metrics=metrics,
        extra={"train_config": cfg.to_dict()},
    )


def generator_from_checkpoint(ckpt: Checkpoint) -> CloudRemovalGenerator:
    """Rebuild the generator stored in a checkpoint (eval mode)."""
    try:
        cfg = GeneratorConfig.from_dict(ckpt.extra["train_config"]["generator"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"checkpoint lacks a generator config: {exc}") from exc
    with torch.random.fork_rng():
        generator = CloudRemovalGenerator(cfg)
    _restore_module(generator, ckpt.tensors, "g")
    return generator.eval()


def _batched(ids: list[str], size: int) -> list[list[str]]:
    return [ids[i : i + size] for i in range(0, len(ids), size)]


def _build_batch(
    manifest: DatasetManifest,
    batch_ids: list[str],
    cfg: TrainConfig,
    epoch: int,
    base_index: int,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    cloudy, clean, targets = [], [], []
    for j, pair_id in enumerate(batch_ids):
        pair = load_pair(manifest, pair_id)
        aug_seed = derive_seed(cfg.seed, _TAG_AUG, epoch, base_index + j)
        pair = augment(pair, cfg.crop, aug_seed, hflip=cfg.hflip)
        cloudy.append(to_model_range(pair.cloudy))
        clean.append(to_model_range(pair.clean))
        mask = attention_target(pair, cfg.weights.attention_tau)
        targets.append(torch.from_numpy(mask.transpose(2, 0, 1)))
    return torch.stack(cloudy), torch.stack(clean), torch.stack(targets)


def train(
    cfg: TrainConfig,
    manifest: DatasetManifest,
    run_dir: str | Path,
    config_hash: str = "",
    resume_from: str | Path | None = None,
) -> tuple[Checkpoint, TrainLog]:
    """Run (or resume) adversarial training; returns the final checkpoint and log.

    Per step: one discriminator update, then one generator update. Per epoch:
    evaluate on VAL, append a log row, write ``checkpoints/last.ckpt`` (and
    ``best.ckpt`` on a new best validation PSNR). A non-finite loss aborts
    with a diagnostic record, leaving the last good checkpoint on disk.
    """
    train_ids = manifest.ids_for(TRAIN)
    val_ids = manifest.ids_for(VAL)
    if not train_ids:
        raise MissingDataError("manifest has no TRAIN split (run `dataset split` first)")
    layout = run_layout(run_dir)
    log_path = layout["logs"] / "train_log.csv"
    last_path = layout["checkpoints"] / "last.ckpt"
    best_path = layout["checkpoints"] / "best.ckpt"

    torch.manual_seed(derive_seed(cfg.seed, _TAG_INIT))
    generator = CloudRemovalGenerator(cfg.generator)
    discriminator = PatchDiscriminator(cfg.discriminator)
    opt_g = torch.optim.Adam(generator.parameters(), lr=cfg.lr, betas=cfg.adam_betas)
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=cfg.lr, betas=cfg.adam_betas)

    log = TrainLog()
    start_epoch = 0
    best_psnr = -math.inf
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if config_hash and ckpt.config_hash and ckpt.config_hash != config_hash:
            raise ConfigError(
                f"checkpoint config hash {ckpt.config_hash[:12]} does not match "
                f"current config {config_hash[:12]}; refusing to resume"
            )
        _restore_module(generator, ckpt.tensors, "g")
        _restore_module(discriminator, ckpt.tensors, "d")
        _restore_optimizer(opt_g, generator, ckpt.tensors, "opt_g")
        _restore_optimizer(opt_d, discriminator, ckpt.tensors, "opt_d")
        start_epoch = ckpt.epoch
        if log_path.exists():
            log = TrainLog.read_csv(log_path)
            log.rows = [r for r in log.rows if r.epoch <= start_epoch]
        if ckpt.metrics and "best_psnr" in ckpt.metrics:
            best_psnr = ckpt.metrics["best_psnr"]
        if start_epoch >= cfg.epochs:
            logger.info("checkpoint already at epoch %d >= %d; nothing to do",
                        start_epoch, cfg.epochs)
            return ckpt, log
    ckpt = None

    for epoch in range(start_epoch + 1, cfg.epochs + 1):
        t0 = time.monotonic()
        order = sorted(train_ids)
        SplitMix64(derive_seed(cfg.seed, _TAG_ORDER, epoch)).shuffle(order)
        sums = {"g_adv": 0.0, "d_adv": 0.0, "l1": 0.0, "att": 0.0}
        steps = 0
        for base_index, batch_ids in (
            (i * cfg.batch_size, b) for i, b in enumerate(_batched(order, cfg.batch_size))
        ):
            cloudy, clean, target = _build_batch(manifest, batch_ids, cfg, epoch, base_index)

            fake, maps = generator(cloudy)

            loss_d = discriminator_adversarial_loss(
                discriminator(clean), discriminator(fake.detach())
            )
            opt_d.zero_grad()
            loss_d.backward()
            if cfg.grad_clip is not None:
                nn.utils.clip_grad_norm_(discriminator.parameters(), cfg.grad_clip)
            opt_d.step()

            loss_g_adv = generator_adversarial_loss(discriminator(fake))
            loss_l1 = l1_loss(fake, clean)
            loss_att = attention_loss(maps, target)
            loss_g = (
                loss_g_adv
                + cfg.weights.lambda_l1 * loss_l1
                + cfg.weights.lambda_att * loss_att
            )
            opt_g.zero_grad()
            loss_g.backward()
            if cfg.grad_clip is not None:
                nn.utils.clip_grad_norm_(generator.parameters(), cfg.grad_clip)
            opt_g.step()

            values = {
                "g_adv": loss_g_adv.item(),
                "d_adv": loss_d.item(),
                "l1": loss_l1.item(),
                "att": loss_att.item(),
            }
            if not all(math.isfinite(v) for v in values.values()):
                diagnostic = {
                    "epoch": epoch,
                    "step": steps,
                    "batch_ids": batch_ids,
                    "losses": values,
                    "last_good_checkpoint": str(last_path) if last_path.exists() else None,
                }
                (layout["logs"] / "abort.json").write_text(json.dumps(diagnostic, indent=2))
                raise NumericError(
                    f"non-finite loss at epoch {epoch} step {steps}: {values} "
                    f"(diagnostic in {layout['logs'] / 'abort.json'})"
                )
            for k, v in values.items():
                sums[k] += v
            steps += 1

        means = {k: v / steps for k, v in sums.items()}
        if val_ids:
            report = evaluate(generator, manifest, VAL, config_hash=config_hash)
            val_psnr, val_ssim = report.mean_psnr_db, report.mean_ssim
        else:
            val_psnr = val_ssim = math.nan
        row = TrainLogRow(
            epoch=epoch,
            g_adv=means["g_adv"],
            d_adv=means["d_adv"],
            l1=means["l1"],
            att=means["att"],
            val_psnr=val_psnr,
            val_ssim=val_ssim,
            wall_seconds=time.monotonic() - t0,
        )
        log.rows.append(row)
        log.write_csv(log_path)
        snapshot = {"val_psnr": val_psnr, "val_ssim": val_ssim,
                    "best_psnr": max(best_psnr, val_psnr) if math.isfinite(val_psnr) else best_psnr}
        ckpt = capture_checkpoint(
            generator, discriminator, opt_g, opt_d, cfg, epoch, config_hash, snapshot
        )
        save_checkpoint(ckpt, last_path)
        if math.isfinite(val_psnr) and val_psnr > best_psnr:
            best_psnr = val_psnr
            save_checkpoint(ckpt, best_path)
        logger.info(
            "epoch %d/%d  g_adv %.4f  d_adv %.4f  l1 %.4f  att %.4f  "
            "val_psnr %.3f  val_ssim %.4f  (%.1fs)",
            epoch, cfg.epochs, means["g_adv"], means["d_adv"], means["l1"],
            means["att"], val_psnr, val_ssim, row.wall_seconds,
        )
    return ckpt, log


def resume(
    checkpoint_path: str | Path,
    cfg: TrainConfig,
    manifest: DatasetManifest,
    run_dir: str | Path,
    config_hash: str = "",
) -> tuple[Checkpoint, TrainLog]:
    """Continue training from a stored checkpoint (hash-checked)."""
    return train(cfg, manifest, run_dir, config_hash=config_hash,
                 resume_from=checkpoint_path)


def infer(
    ckpt: Checkpoint | str | Path,
    raster: np.ndarray,
    with_attention: bool = False,
):
    """Run a checkpointed generator on one [0, 1] raster.

    Returns the restored raster, or ``(raster, [attention rasters])`` when
    ``with_attention`` is set. Deterministic given (checkpoint, input).
    """
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt)
    generator = generator_from_checkpoint(ckpt)
    if raster.ndim != 3 or raster.shape[2] != generator.in_channels:
        raise ConfigError(
            f"expected {generator.in_channels}-channel raster, got shape {raster.shape}"
        )
    with torch.no_grad():
        output = generator(to_model_range(raster).unsqueeze(0))
    restored = from_model_range(output.image[0])
    if not with_attention:
        return restored
    maps = [
        np.ascontiguousarray(m[0].cpu().numpy().transpose(1, 2, 0))
        for m in output.attention_maps
    ]
    return restored, maps


@dataclass
class ComparisonRow:
    label: str
    mean_psnr_db: float
    mean_ssim: float


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]
    split: str
    n_images: int

    def render_text(self) -> str:
        label_w = max(len("model"), max(len(r.label) for r in self.rows))
        lines = [
            f"| {'model'.ljust(label_w)} | {'PSNR (dB)':>10} | {'SSIM':>7} |",
            f"|{'-' * (label_w + 2)}|{'-' * 12}|{'-' * 9}|",
        ]
        for row in self.rows:
            rendered = "inf" if math.isinf(row.mean_psnr_db) else f"{row.mean_psnr_db:.4f}"
            lines.append(
                f"| {row.label.ljust(label_w)} | {rendered:>10} | {row.mean_ssim:>7.4f} |"
            )
        return "\n".join(lines)

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", "mean_psnr_db", "mean_ssim"])
            for row in self.rows:
                writer.writerow([row.label, row.mean_psnr_db, row.mean_ssim])


def identity_baseline_report(manifest: DatasetManifest, split: str = VAL) -> MetricReport:
    """Cloudy-vs-clean metrics through the exact numeric path of an identity model."""
    ids = sorted(manifest.ids_for(split))
    if not ids:
        raise MissingDataError(f"manifest has no ids in split {split!r}")
    rows = []
    for pair_id in ids:
        pair = load_pair(manifest, pair_id)
        # identical to a zero-tail generator: model-range round trip, then metrics
        restored = from_model_range(to_model_range(pair.cloudy))
        rows.append(MetricRow(pair_id, psnr(restored, pair.clean), ssim(restored, pair.clean)))
    return MetricReport.from_rows(rows)


def compare(
    checkpoint_paths: list[str | Path],
    manifest: DatasetManifest,
    split: str = VAL,
    labels: list[str] | None = None,
) -> ComparisonTable:
    """PSNR/SSIM table over checkpoints plus the cloudy-input baseline row."""
    if not checkpoint_paths:
        raise ConfigError("compare needs at least one checkpoint")
    if labels is not None and len(labels) != len(checkpoint_paths):
        raise ConfigError("labels must match checkpoints one-to-one")
    rows = []
    baseline = identity_baseline_report(manifest, split)
    rows.append(ComparisonRow("cloudy-input baseline", baseline.mean_psnr_db,
                              baseline.mean_ssim))
    n_images = len(baseline.per_image)
    for i, path in enumerate(checkpoint_paths):
        ckpt = load_checkpoint(path)
        generator = generator_from_checkpoint(ckpt)
        if labels is not None:
            label = labels[i]
        else:
            label = generator.config.label
            if ckpt.config_hash:
                label += f" [{ckpt.config_hash[:8]}]"
        report = evaluate(generator, manifest, split, config_hash=ckpt.config_hash)
        rows.append(ComparisonRow(label, report.mean_psnr_db, report.mean_ssim))
    return ComparisonTable(rows=rows, split=split, n_images=n_images)
