"""Command-line interface: synth | prepare | train | evaluate | predict | xval."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from medmatting import core
from medmatting.fusion import AnnotationSet, build_trimap
from medmatting.harness import config as cfg
from medmatting.harness import data as datamod
from medmatting.harness.evaluate import evaluate_checkpoint, summarize
from medmatting.harness.synth import synth_dataset
from medmatting.harness.train import cross_validate, train


def _load_config(args) -> cfg.TrainConfig:
    config = cfg.read_config(args.config) if args.config else cfg.TrainConfig()
    if getattr(args, "seed", None) is not None:
        config = cfg.with_overrides(config, seed=args.seed)
    return config


def _add_common(parser, config=True, seed=True, out=True):
    if config:
        parser.add_argument("--config", type=Path, help="key=value config file")
    if seed:
        parser.add_argument("--seed", type=int, help="override the config seed")
    if out:
        parser.add_argument("--out", type=Path, required=True, help="output directory")


def cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else 0
    dataset = synth_dataset(
        args.count, args.size, seed, noise_sigma=args.noise_sigma, annotators=args.annotators
    )
    manifest = datamod.save_synthetic_dataset(args.out, dataset)
    print(f"wrote {args.count} samples to {args.out} (manifest: {manifest})")
    return 0


def cmd_prepare(args) -> int:
    config = _load_config(args)
    entries = datamod.discover_annotated_directory(args.images, args.masks, args.alphas)
    out = Path(args.out)
    trimap_dir = out / "trimaps"
    trimap_dir.mkdir(parents=True, exist_ok=True)
    for entry in entries:
        image = core.load_image(entry.image_path)
        masks = tuple(core.load_mask(p) for p in entry.mask_paths)
        trimap = build_trimap(AnnotationSet(image=image, masks=masks), config.dilation_radius)
        core.save_trimap(trimap_dir / entry.image_path.name, trimap)
    manifest = out / datamod.MANIFEST_NAME
    datamod.write_manifest(
        manifest,
        [
            datamod.ManifestEntry(
                _copy_into(out, e.image_path, "images"),
                tuple(
                    _copy_into(out, m, f"masks/annotator_{k}")
                    for k, m in enumerate(e.mask_paths)
                ),
                _copy_into(out, e.alpha_path, "alphas") if e.alpha_path else None,
            )
            for e in entries
        ],
    )
    print(f"prepared {len(entries)} samples; trimaps in {trimap_dir}, manifest {manifest}")
    return 0


def _copy_into(out: Path, src: Path, subdir: str) -> Path:
    dst = out / subdir / src.name
    dst.parent.mkdir(parents=True, exist_ok=True)
    dst.write_bytes(src.read_bytes())
    return dst


def cmd_train(args) -> int:
    config = _load_config(args)
    samples = datamod.load_samples(args.data)
    result = train(config, samples, out_dir=args.out)
    last = result.history[-1]
    print(
        f"trained {config.epochs} epochs on {len(samples)} samples; "
        f"final total loss {last.total:.6f}; checkpoint {result.checkpoint_path}"
    )
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    samples = datamod.load_samples(args.data)
    out_csv = Path(args.out) / "metrics.csv"
    rows = evaluate_checkpoint(
        args.checkpoint, samples, config, out_csv=out_csv, region_mode=args.region
    )
    means = summarize(rows)
    pretty = ", ".join(f"{k}={v:.6g}" for k, v in sorted(means.items()))
    print(f"evaluated {len(rows)} samples -> {out_csv} ({pretty})")
    return 0


def cmd_predict(args) -> int:
    import torch

    from medmatting.harness.checkpoint import load_checkpoint
    from medmatting.harness.evaluate import infer_sample

    config = _load_config(args)
    generator, matting, _ = load_checkpoint(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(config.threads)
    for idx, image_path in enumerate(args.images):
        image = core.load_image(image_path)
        sample = datamod.Sample(Path(image_path).stem, image, None, ())
        result = infer_sample(generator, matting, sample, config, seed=config.seed * 100003 + idx)
        alpha_path = out / f"{sample.sample_id}_alpha.png"
        umap_path = out / f"{sample.sample_id}_uncertainty.png"
        core.save_alpha(alpha_path, core.AlphaMatte(result["alpha"]))
        core.save_uncertainty(umap_path, result["umap"])
        print(f"{image_path} -> {alpha_path}, {umap_path}")
    return 0


def cmd_xval(args) -> int:
    config = _load_config(args)
    samples = datamod.load_samples(args.data)
    aggregate = cross_validate(config, samples, out_dir=args.out)
    pretty = ", ".join(
        f"{name}={stats['mean']:.4f}±{stats['std']:.4f}" for name, stats in sorted(aggregate.items())
    )
    print(f"cross-validated {config.folds} folds: {pretty}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medmatting",
        description="Probabilistic masks, uncertainty maps, and alpha matting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic soft-blob dataset")
    _add_common(p, config=False)
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--noise-sigma", type=float, default=0.01)
    p.add_argument("--annotators", type=int, default=4)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="build trimaps and a manifest from raw data")
    _add_common(p)
    p.add_argument("--images", type=Path, required=True, help="directory of image PNGs")
    p.add_argument(
        "--masks", type=Path, required=True, help="directory of per-annotator mask subdirectories"
    )
    p.add_argument("--alphas", type=Path, help="optional directory of alpha matte PNGs")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train on a manifest dataset")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True, help="manifest file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run metrics for a checkpoint")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True, help="manifest file")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--region", choices=("all", "unknown-only"), default="all")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="write alpha + uncertainty PNGs for images")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("images", nargs="+", help="input image PNGs")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("xval", help="cross-validated training and evaluation")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True, help="manifest file")
    p.set_defaults(func=cmd_xval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
