"""Command-line entry point.

Subcommands: ``dataset split``, ``train``, ``eval``, ``infer``, ``detect``,
``compare``, ``plot``. Global flags ``--config``, ``--seed``, ``--out`` are
accepted before or after the subcommand; the ``CLOUDGAN_OUT`` environment
variable overrides ``--out``. Exit codes: 0 success, 2 invalid config/flags,
3 missing data, 4 numeric failure, 5 I/O failure. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .checkpoint import load_checkpoint
from .clouddetect import (
    BandStack,
    FilesystemTileSource,
    TileRequest,
    detect_multiband,
    detect_rgb,
    detect_series,
    load_band_stack,
    mask_stats,
    overlay,
)
from .data import (
    VAL,
    SplitSpec,
    build_manifest,
    load_manifest,
    load_pair,
    load_raster,
    save_manifest,
    save_raster,
    split_manifest,
)
from .errors import CloudganError, ConfigError, MissingDataError
from .metrics import MetricReport, MetricRow, evaluate, psnr, ssim
from .plots import PlotSample, emit_plots
from .training import (
    TrainLog,
    compare,
    generator_from_checkpoint,
    infer,
    run_layout,
    train,
)

logger = logging.getLogger(__name__)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps subparser defaults from clobbering values parsed earlier,
    # so the flags work both before and after the subcommand
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS,
                        help="run config JSON (defaults apply when omitted)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override dataset and training seeds")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS,
                        help="output directory (CLOUDGAN_OUT overrides)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="cloudgan",
        description="Spatial-attention GAN toolkit for satellite cloud removal.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p_dataset = sub.add_parser("dataset", parents=[common],
                               help="dataset preparation commands")
    dsub = p_dataset.add_subparsers(dest="dataset_command", required=True)
    p_split = dsub.add_parser("split", parents=[common],
                              help="pair stems and assign train/val splits")
    p_split.add_argument("--root", type=Path, help="dataset root (overrides config)")
    p_split.add_argument("--manifest-out", type=Path,
                         help="manifest path (default <root>/manifest.json)")

    p_train = sub.add_parser("train", parents=[common], help="train a model")
    p_train.add_argument("--manifest", type=Path,
                         help="split manifest (default <root>/manifest.json)")
    p_train.add_argument("--resume", type=Path, help="checkpoint to resume from")
    p_train.add_argument("--run-dir", type=Path,
                         help="exact run directory (default <out>/runs/<stamp>-<hash8>)")

    p_eval = sub.add_parser("eval", parents=[common],
                            help="evaluate a checkpoint (or saved outputs) on a split")
    p_eval.add_argument("--checkpoint", type=Path, help="checkpoint to evaluate")
    p_eval.add_argument("--outputs", type=Path,
                        help="directory of saved inference outputs to score instead")
    p_eval.add_argument("--manifest", type=Path,
                        help="split manifest (default <root>/manifest.json)")
    p_eval.add_argument("--split", default=VAL, choices=["train", "val"],
                        help="which split to score")

    p_infer = sub.add_parser("infer", parents=[common],
                             help="restore one cloudy image")
    p_infer.add_argument("--checkpoint", type=Path, required=True,
                         help="trained checkpoint")
    p_infer.add_argument("--input", type=Path, required=True,
                         help="cloudy input image (8/16-bit PNG or TIFF)")
    p_infer.add_argument("--output", type=Path,
                         help="output image (default <out>/<stem>_restored.png)")
    p_infer.add_argument("--bit-depth", type=int, default=16, choices=[8, 16],
                         help="output quantization (16 keeps metrics round-trippable)")
    p_infer.add_argument("--attention", action="store_true",
                         help="also write attention maps as grayscale images")

    p_detect = sub.add_parser("detect", parents=[common],
                              help="heuristic cloud-mask detection")
    src = p_detect.add_mutually_exclusive_group(required=True)
    src.add_argument("--image", type=Path, help="RGB image file")
    src.add_argument("--stack", type=Path, help="band-stack directory")
    src.add_argument("--series", type=Path, help="tile root of timestamped stacks")
    p_detect.add_argument("--threshold", type=float, help="override config threshold")
    p_detect.add_argument("--delta", type=float, help="override series delta")
    p_detect.add_argument("--start", help="ISO timestamp lower bound (series)")
    p_detect.add_argument("--end", help="ISO timestamp upper bound (series)")

    p_compare = sub.add_parser("compare", parents=[common],
                               help="PSNR/SSIM table over checkpoints + baseline")
    p_compare.add_argument("--checkpoints", type=Path, nargs="+", required=True,
                           help="checkpoints to score side by side")
    p_compare.add_argument("--labels", nargs="+",
                           help="row labels (default variant-mode [hash])")
    p_compare.add_argument("--manifest", type=Path,
                           help="split manifest (default <root>/manifest.json)")
    p_compare.add_argument("--split", default=VAL, choices=["train", "val"],
                           help="which split to score")

    p_plot = sub.add_parser("plot", parents=[common],
                            help="regenerate curves and sample panels for a run")
    p_plot.add_argument("--run", type=Path, required=True, help="run directory")
    p_plot.add_argument("--samples", type=int, default=3,
                        help="number of validation samples to render")
    return parser


def _resolve_out(args) -> Path:
    env = os.environ.get("CLOUDGAN_OUT")
    if env:
        return Path(env)
    out = getattr(args, "out", None)
    return Path(out) if out is not None else Path(".")


def _load_cfg(args) -> tuple[dict, str]:
    cfg = cfgmod.load_config(getattr(args, "config", None))
    seed = getattr(args, "seed", None)
    if seed is not None:
        cfg["dataset"]["seed"] = seed
        cfg["train"]["seed"] = seed
    return cfg, cfgmod.config_hash(cfg)


def _manifest_path(args, cfg) -> Path:
    explicit = getattr(args, "manifest", None)
    if explicit is not None:
        return Path(explicit)
    return cfgmod.dataset_root(cfg) / "manifest.json"


def _cmd_dataset_split(args) -> int:
    cfg, _ = _load_cfg(args)
    ds = cfg["dataset"]
    root = args.root if args.root is not None else cfgmod.dataset_root(cfg)
    manifest = build_manifest(root)
    spec = SplitSpec(ds["train_count"], ds["val_count"], ds["seed"])
    manifest = split_manifest(manifest, spec, pool=ds["pool"])
    out_path = args.manifest_out if args.manifest_out is not None else root / "manifest.json"
    save_manifest(manifest, out_path)
    print(
        f"manifest: {out_path}  pairs={len(manifest.pair_ids)} "
        f"train={len(manifest.ids_for('train'))} val={len(manifest.ids_for('val'))} "
        f"warnings={len(manifest.warnings)}"
    )
    return 0


def _cmd_train(args) -> int:
    cfg, chash = _load_cfg(args)
    manifest = load_manifest(_manifest_path(args, cfg))
    train_cfg = cfgmod.build_train_config(cfg)
    if args.run_dir is not None:
        run_dir = Path(args.run_dir)
    else:
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S-%f")
        run_dir = _resolve_out(args) / "runs" / f"{stamp}-{chash[:8]}"
    layout = run_layout(run_dir)
    (layout["run"] / "config.json").write_text(json.dumps(cfg, indent=2))
    save_manifest(manifest, layout["run"] / "manifest.json")
    ckpt, log = train(train_cfg, manifest, run_dir, config_hash=chash,
                      resume_from=args.resume)
    print(f"run dir: {run_dir}")
    print(f"final checkpoint: {layout['checkpoints'] / 'last.ckpt'} (epoch {ckpt.epoch})")
    return 0


def _outputs_report(outputs_dir: Path, manifest, split: str, chash: str) -> MetricReport:
    ids = sorted(manifest.ids_for(split))
    if not ids:
        raise MissingDataError(f"manifest has no ids in split {split!r}")
    rows = []
    for pair_id in ids:
        candidates = list(outputs_dir.glob(f"{pair_id}_restored.*")) + list(
            outputs_dir.glob(f"{pair_id}.*")
        )
        if not candidates:
            raise MissingDataError(f"no saved output for id {pair_id!r} in {outputs_dir}")
        restored = load_raster(candidates[0])
        pair = load_pair(manifest, pair_id)
        rows.append(MetricRow(pair_id, psnr(restored, pair.clean), ssim(restored, pair.clean)))
    return MetricReport.from_rows(rows, config_hash=chash)


def _cmd_eval(args) -> int:
    cfg, chash = _load_cfg(args)
    manifest = load_manifest(_manifest_path(args, cfg))
    if args.outputs is not None:
        report = _outputs_report(Path(args.outputs), manifest, args.split, chash)
        tag = "outputs"
    elif args.checkpoint is not None:
        ckpt = load_checkpoint(args.checkpoint)
        generator = generator_from_checkpoint(ckpt)
        report = evaluate(generator, manifest, args.split,
                          config_hash=ckpt.config_hash or chash)
        tag = Path(args.checkpoint).stem
    else:
        raise ConfigError("eval needs --checkpoint or --outputs")
    out = _resolve_out(args) / "reports"
    short = (report.config_hash or chash)[:8]
    report.write_csv(out / f"eval_{tag}_{args.split}_{short}.csv")
    report.write_summary(out / f"eval_{tag}_{args.split}_{short}.json")
    mean_psnr = "inf" if report.mean_psnr_db == float("inf") else f"{report.mean_psnr_db:.4f}"
    print(f"split={args.split} n={len(report.per_image)} "
          f"mean_psnr_db={mean_psnr} mean_ssim={report.mean_ssim:.4f}")
    if report.failed:
        print(f"failed ids (non-finite output): {report.failed}", file=sys.stderr)
    print(f"report: {out}")
    return 0


def _cmd_infer(args) -> int:
    raster = load_raster(args.input)
    result = infer(args.checkpoint, raster, with_attention=args.attention)
    restored, maps = result if args.attention else (result, [])
    output = args.output
    if output is None:
        output = _resolve_out(args) / f"{args.input.stem}_restored.png"
    save_raster(restored, output, bit_depth=args.bit_depth)
    print(f"restored: {output}")
    for i, att in enumerate(maps):
        att_path = output.with_name(f"{output.stem}_attention{i}.png")
        save_raster(att, att_path, bit_depth=8)
        print(f"attention map {i}: {att_path}")
    return 0


def _write_mask_outputs(out_dir: Path, name: str, image, mask, cfg) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_raster(mask.mask.astype(np.float32)[:, :, None], out_dir / f"{name}_mask.png")
    save_raster(mask.prob[:, :, None], out_dir / f"{name}_prob.png")
    if image is not None:
        tinted = overlay(image, mask, tint=tuple(cfg["detect"]["tint"]),
                         opacity=cfg["detect"]["opacity"])
        save_raster(tinted, out_dir / f"{name}_overlay.png")
    stats = mask_stats(mask)
    (out_dir / f"{name}_stats.json").write_text(json.dumps(stats, indent=2))
    print(f"{name}: cloud fraction {stats['fraction']:.4f}")


def _cmd_detect(args) -> int:
    cfg, _ = _load_cfg(args)
    det = cfg["detect"]
    threshold = args.threshold if args.threshold is not None else det["threshold"]
    delta = args.delta if args.delta is not None else det["series_delta"]
    bands = tuple(det["bands"])
    out_dir = _resolve_out(args) / "detect"
    if args.image is not None:
        raster = load_raster(args.image)
        if raster.shape[2] < 3:
            raise MissingDataError(f"{args.image} is not an RGB image")
        stack = BandStack(data=raster[:, :, :3], band_names=["R", "G", "B"])
        mask = detect_rgb(stack, threshold=threshold)
        _write_mask_outputs(out_dir, args.image.stem, raster[:, :, :3], mask, cfg)
    elif args.stack is not None:
        stack = load_band_stack(args.stack)
        mask = detect_multiband(stack, det["rules"], threshold=threshold, bands=bands)
        image = None
        if stack.has_bands(bands):
            image = np.stack([stack.band(b) for b in bands], axis=2)
        _write_mask_outputs(out_dir, Path(args.stack).name, image, mask, cfg)
    else:
        source = FilesystemTileSource(args.series)
        stacks = source.fetch(TileRequest(start=args.start, end=args.end))
        if len(stacks) < 2:
            raise MissingDataError(
                f"series detection needs >= 2 timestamped stacks under {args.series}"
            )
        masks = detect_series(stacks, threshold=threshold, delta=delta, bands=bands)
        for stack, mask in zip(stacks, masks):
            name = stack.timestamp or "frame"
            image = np.stack([stack.band(b) for b in bands], axis=2)
            _write_mask_outputs(out_dir, name, image, mask, cfg)
    return 0


def _cmd_compare(args) -> int:
    cfg, chash = _load_cfg(args)
    manifest = load_manifest(_manifest_path(args, cfg))
    table = compare([Path(p) for p in args.checkpoints], manifest,
                    split=args.split, labels=args.labels)
    print(table.render_text())
    out = _resolve_out(args) / "reports"
    table.write_csv(out / f"compare_{args.split}_{chash[:8]}.csv")
    print(f"csv: {out / f'compare_{args.split}_{chash[:8]}.csv'}")
    return 0


def _cmd_plot(args) -> int:
    run_dir = Path(args.run)
    log_path = run_dir / "logs" / "train_log.csv"
    ckpt_path = run_dir / "checkpoints" / "last.ckpt"
    manifest_path = run_dir / "manifest.json"
    config_path = run_dir / "config.json"
    for required in (log_path, ckpt_path, manifest_path):
        if not required.exists():
            raise MissingDataError(f"run directory is missing {required}")
    chash = ""
    if config_path.exists():
        chash = cfgmod.config_hash(json.loads(config_path.read_text()))
    log = TrainLog.read_csv(log_path)
    manifest = load_manifest(manifest_path)
    ids = sorted(manifest.ids_for(VAL))[: args.samples] or sorted(
        manifest.ids_for("train")
    )[: args.samples]
    samples = []
    for pair_id in ids:
        pair = load_pair(manifest, pair_id)
        restored, maps = infer(ckpt_path, pair.cloudy, with_attention=True)
        samples.append(
            PlotSample(pair_id, pair.cloudy, restored, pair.clean, attention_maps=maps)
        )
    written = emit_plots(log, samples, run_dir / "plots", tag=chash[:8])
    for path in written:
        print(f"plot: {path}")
    return 0


_HANDLERS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "detect": _cmd_detect,
    "compare": _cmd_compare,
    "plot": _cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "dataset":
            return _cmd_dataset_split(args)
        return _HANDLERS[args.command](args)
    except CloudganError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
