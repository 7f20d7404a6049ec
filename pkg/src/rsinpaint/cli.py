"""Command-line entry points: train, infer, eval, maskgen.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure,
5 checkpoint missing or incompatible.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError
from .config import ConfigError, load_config
from .dataset import DatasetError, ExamplePool, SplitManifest, derive_seed, list_images, make_splits
from .evaluation import (ablation_sweep, evaluate, ground_truth_stub, psnr, zero_fill_stub)
from .imaging import ImageIOError, load_image, load_mask, save_image, save_mask
from .losses import NonFiniteLossError, make_extractor
from .maskgen import MaskSpec, MaskSpecError, generate_mask
from .pipeline import InpaintingModel, inpaint, train_full

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_CHECKPOINT = 0, 2, 3, 4, 5
ASSET_ENV = "RSINPAINT_ASSET_DIR"

log = logging.getLogger("rsinpaint")


class CommandError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def fresh_dir(path) -> Path:
    """``path`` if unused or empty, otherwise the first free ``path-N``."""
    path = Path(path)
    candidate, n = path, 0
    while candidate.exists() and any(candidate.iterdir()):
        n += 1
        candidate = path.with_name(f"{path.name}-{n}")
    candidate.mkdir(parents=True, exist_ok=True)
    return candidate


def _extractor(cfg):
    path = cfg.extractor_path
    if cfg.extractor == "vgg19" and not path and os.environ.get(ASSET_ENV):
        path = str(Path(os.environ[ASSET_ENV]) / "vgg19.ckpt")
    try:
        return make_extractor(cfg.extractor, path, seed=derive_seed(cfg.seed, "extractor"))
    except (FileNotFoundError, KeyError, CheckpointError) as exc:
        raise CommandError(EXIT_DATA, f"feature extractor unavailable: {exc}") from exc


def _check_sizes(pool, size):
    for i in range(len(pool)):
        ex = pool.get(i)
        if ex.i_gt.hw != (size, size):
            raise CommandError(EXIT_DATA, f"{ex.id} is {ex.i_gt.hw}, expected {size}x{size} (set tile or image_size)")


def cmd_train(args) -> int:
    try:
        cfg = load_config(args.config, args.set or ())
    except ConfigError as exc:
        raise CommandError(EXIT_CONFIG, str(exc)) from exc
    try:
        paths, classes = list_images(cfg.data_dir)
        if cfg.use_splits:
            manifest = make_splits(paths, derive_seed(cfg.seed, "splits"))
        else:
            # every image trains; meant for smoke runs and overfit checks
            manifest = SplitManifest(list(paths), [], [], cfg.seed, fractions=(1.0, 0.0, 0.0))
        manifest.classes = classes
        pool = ExamplePool(manifest.train, cfg.mask_spec(), cfg.canny(), derive_seed(cfg.seed, "masks"),
                           tile=cfg.tile, fixed_masks=cfg.fixed_masks)
    except (DatasetError, ImageIOError, ValueError) as exc:
        raise CommandError(EXIT_DATA, str(exc)) from exc
    _check_sizes(pool, cfg.image_size)
    extractor = _extractor(cfg)

    run_dir = fresh_dir(cfg.run_dir)
    cfg.write(run_dir / "config.toml")
    manifest.write(run_dir / "manifest.tsv")
    try:
        model, rows = train_full(pool, cfg.train(), arch=cfg.arch(), extractor=extractor,
                                 run_dir=run_dir,
                                 config_snapshot={"config_hash": cfg.hash, "run": cfg.to_dict()})
    except NonFiniteLossError as exc:
        raise CommandError(EXIT_NUMERIC, str(exc)) from exc
    final = run_dir / "checkpoints" / "final.ckpt"
    final.parent.mkdir(parents=True, exist_ok=True)
    model.save(final, cfg.hash)
    print(f"run directory: {run_dir}")
    print(f"final checkpoint: {final} ({len(rows)} training steps)")
    return EXIT_OK


def _load_model(path, config_path=None):
    try:
        model = InpaintingModel.load(path)
    except CheckpointError as exc:
        raise CommandError(EXIT_CHECKPOINT, str(exc)) from exc
    if config_path:
        try:
            cfg = load_config(config_path)
        except ConfigError as exc:
            raise CommandError(EXIT_CONFIG, str(exc)) from exc
        from .nets import arch_hash

        if arch_hash(cfg.arch().archs()) != model.arch_hash:
            raise CommandError(EXIT_CHECKPOINT, f"{path} was built for a different architecture than {config_path}")
    return model


def _mask_spec(args, seed):
    try:
        return MaskSpec(args.mask_kind, args.min_frac, args.max_frac, seed, args.mask_source)
    except MaskSpecError as exc:
        raise CommandError(EXIT_CONFIG, str(exc)) from exc


def _as_rgb(image):
    if image.kind == "rgb":
        return image
    return type(image)(np.repeat(image.data, 3, axis=2), image.range_tag, "rgb")


def cmd_infer(args) -> int:
    model = _load_model(args.checkpoint, args.config)
    try:
        image = _as_rgb(load_image(args.image, "unit"))
        if args.mask:
            mask = load_mask(args.mask)
        else:
            spec = _mask_spec(args, args.seed)
            mask = generate_mask(*image.hw, spec, spec.rng())
        out = inpaint(image, mask, model)
        save_image(out, args.out)
    except (ImageIOError, ValueError) as exc:
        raise CommandError(EXIT_DATA, str(exc)) from exc
    print(f"wrote {args.out}")
    if args.gt:
        try:
            gt = load_image(args.gt, "unit")
            written = load_image(args.out, "unit")
            # score what was delivered, after 8-bit quantisation
            print(f"PSNR: {psnr(_as_rgb(written), _as_rgb(gt)):.6f} dB")
        except (ImageIOError, ValueError) as exc:
            raise CommandError(EXIT_DATA, str(exc)) from exc
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.stub:
        model = {"ground_truth": ground_truth_stub, "zero_fill": zero_fill_stub}[args.stub]
        model_id, config_hash = f"stub:{args.stub}", ""
    elif args.checkpoint:
        loaded = _load_model(args.checkpoint)
        model, model_id = loaded, str(args.checkpoint)
        config_hash = loaded.config.get("config_hash", "")
    else:
        raise CommandError(EXIT_CONFIG, "eval needs --checkpoint or --stub")
    try:
        if args.manifest:
            paths = SplitManifest.read(args.manifest).part(args.split)
        else:
            paths, _ = list_images(args.data)
        spec = _mask_spec(args, args.seed)
        pool = ExamplePool(paths, spec, _canny_of(model), args.seed, tile=args.tile, fixed_masks=True)
    except (DatasetError, ImageIOError, ValueError) as exc:
        raise CommandError(EXIT_DATA, str(exc)) from exc
    out_dir = fresh_dir(args.out_dir)
    try:
        report = evaluate(model, pool, spec, args.seed, model_id=model_id, config_hash=config_hash)
    except ValueError as exc:
        raise CommandError(EXIT_DATA, str(exc)) from exc
    report.write_csv(out_dir / "metrics.csv")
    report.write_summary(out_dir / "summary.txt")
    if args.sweep_coverages:
        grid = [float(x) for x in args.sweep_coverages.split(",")]
        ablation_sweep({model_id: model}, pool, "mask_percentage", grid, out_dir, seed=args.seed)
    for kind, agg in report.aggregate().items():
        print(f"{kind}: mean PSNR {agg['mean']:.4f} dB (std {agg['std']:.4f}, n={agg['n']})")
    print(f"report: {out_dir / 'metrics.csv'}")
    if report.failed:
        print(f"{len(report.failed)} row(s) failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _canny_of(model):
    from .imaging import CannyConfig

    return model.canny() if hasattr(model, "canny") else CannyConfig()


def cmd_maskgen(args) -> int:
    spec = _mask_spec(args, args.seed)
    out_dir = fresh_dir(args.out_dir)
    rng = spec.rng()
    try:
        for k in range(args.count):
            save_mask(generate_mask(args.height, args.width, spec, rng), out_dir / f"mask_{k:04d}.png")
    except MaskSpecError as exc:
        raise CommandError(EXIT_CONFIG, str(exc)) from exc
    except (FileNotFoundError, ImageIOError) as exc:
        raise CommandError(EXIT_DATA, str(exc)) from exc
    print(f"wrote {args.count} masks to {out_dir}")
    return EXIT_OK


def _add_mask_args(p, default_kind):
    p.add_argument("--mask-kind", default=default_kind, choices=("rectangular", "salt_pepper", "irregular"))
    p.add_argument("--min-frac", type=float, default=None)
    p.add_argument("--max-frac", type=float, default=None)
    p.add_argument("--mask-source", default="procedural", help="'procedural' or a mask corpus directory")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsinpaint", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the three stages from a config file")
    p.add_argument("config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="inpaint one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--mask", help="mask raster (255 = missing); otherwise one is generated")
    p.add_argument("--out", required=True)
    p.add_argument("--gt", help="ground-truth image; prints PSNR against it")
    p.add_argument("--config", help="run config whose architecture must match the checkpoint")
    _add_mask_args(p, "irregular")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="PSNR report over a split")
    p.add_argument("--checkpoint")
    p.add_argument("--stub", choices=("ground_truth", "zero_fill"))
    p.add_argument("--data", help="image directory (all images are evaluated)")
    p.add_argument("--manifest", help="split manifest written by train")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--tile", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sweep-coverages", help="comma-separated rectangular coverages, e.g. 0.05,0.15,0.30")
    _add_mask_args(p, "irregular")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("maskgen", help="write generated masks to a directory")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--width", type=int, default=256)
    _add_mask_args(p, "rectangular")
    p.set_defaults(func=cmd_maskgen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "eval" and not (args.data or args.manifest):
        parser.error("eval needs --data or --manifest")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
