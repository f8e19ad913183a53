"""Sample containers, manifest files, and directory layout for datasets.

A manifest is a plain-text TSV with one line per sample:

    <image path> TAB <mask path>;<mask path>;... TAB <alpha path or ->

Paths are relative to the manifest's directory; the sample id is the image
file stem.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from medmatting import core
from medmatting.core import AlphaMatte, BinaryMask, Image

MANIFEST_NAME = "manifest.tsv"


@dataclass(frozen=True)
class Sample:
    sample_id: str
    image: Image
    alpha: AlphaMatte | None
    masks: tuple[BinaryMask, ...]


@dataclass(frozen=True)
class ManifestEntry:
    image_path: Path
    mask_paths: tuple[Path, ...]
    alpha_path: Path | None

    @property
    def sample_id(self) -> str:
        return self.image_path.stem


def write_manifest(path, entries: list[ManifestEntry]) -> None:
    root = Path(path).parent
    lines = []
    for e in entries:
        masks = ";".join(str(p.relative_to(root)) for p in e.mask_paths)
        alpha = str(e.alpha_path.relative_to(root)) if e.alpha_path else "-"
        lines.append(f"{e.image_path.relative_to(root)}\t{masks}\t{alpha}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    root = path.parent
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
        image_path, masks_field, alpha_field = parts
        masks = tuple(root / m for m in masks_field.split(";") if m)
        alpha = None if alpha_field == "-" else root / alpha_field
        entries.append(ManifestEntry(root / image_path, masks, alpha))
    return entries


def load_samples(manifest_path) -> list[Sample]:
    samples = []
    for entry in read_manifest(manifest_path):
        image = core.load_image(entry.image_path)
        masks = tuple(core.load_mask(p) for p in entry.mask_paths)
        alpha = core.load_alpha(entry.alpha_path) if entry.alpha_path else None
        samples.append(Sample(entry.sample_id, image, alpha, masks))
    return samples


def save_synthetic_dataset(out_dir, dataset) -> Path:
    """Write a synth_dataset() result as PNGs plus a manifest; returns the
    manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "alphas").mkdir(exist_ok=True)
    entries = []
    for idx, (image, alpha, annotations) in enumerate(dataset):
        sid = f"s{idx:04d}"
        image_path = out / "images" / f"{sid}.png"
        alpha_path = out / "alphas" / f"{sid}.png"
        core.save_image(image_path, image)
        core.save_alpha(alpha_path, alpha)
        mask_paths = []
        for k, mask in enumerate(annotations.masks):
            mask_dir = out / "masks" / f"annotator_{k}"
            mask_dir.mkdir(parents=True, exist_ok=True)
            mask_path = mask_dir / f"{sid}.png"
            core.save_mask(mask_path, mask)
            mask_paths.append(mask_path)
        entries.append(ManifestEntry(image_path, tuple(mask_paths), alpha_path))
    manifest = out / MANIFEST_NAME
    write_manifest(manifest, entries)
    return manifest


def samples_from_memory(dataset) -> list[Sample]:
    """Wrap a synth_dataset() result as Samples without touching disk.

    Rasters are quantized to 8 bits first so in-memory runs match runs that
    round-trip through PNG files.
    """
    samples = []
    for idx, (image, alpha, annotations) in enumerate(dataset):
        q_image = Image(np.rint(image.pixels * 255.0) / 255.0)
        q_alpha = AlphaMatte(np.rint(alpha.alpha * 255.0) / 255.0)
        samples.append(
            Sample(f"s{idx:04d}", q_image, q_alpha, tuple(annotations.masks))
        )
    return samples


def discover_annotated_directory(images_dir, masks_root, alphas_dir=None) -> list[ManifestEntry]:
    """Pair image files with per-annotator mask subdirectories by filename."""
    images_dir = Path(images_dir)
    masks_root = Path(masks_root)
    annotator_dirs = sorted(p for p in masks_root.iterdir() if p.is_dir())
    if len(annotator_dirs) < 2:
        raise ValueError(
            f"need >= 2 annotator subdirectories under {masks_root}, found {len(annotator_dirs)}"
        )
    entries = []
    for image_path in sorted(images_dir.glob("*.png")):
        mask_paths = []
        for d in annotator_dirs:
            mask_path = d / image_path.name
            if not mask_path.exists():
                raise FileNotFoundError(f"missing annotator mask {mask_path}")
            mask_paths.append(mask_path)
        alpha_path = None
        if alphas_dir is not None:
            candidate = Path(alphas_dir) / image_path.name
            alpha_path = candidate if candidate.exists() else None
        entries.append(ManifestEntry(image_path, tuple(mask_paths), alpha_path))
    if not entries:
        raise ValueError(f"no .png images found in {images_dir}")
    return entries
