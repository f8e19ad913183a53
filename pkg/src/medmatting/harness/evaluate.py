"""Inference over a sample set and CSV metric reports.

The report has one row per sample with columns
(sample_id, sad, mse, grad, conn, ged, dice) plus a flag column, and a
closing mean±std summary row over the non-degenerate rows. sad/grad/conn
use the x1e-3 report scale.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import torch

from medmatting import metrics
from medmatting.core import AlphaMatte
from medmatting.fusion import AnnotationSet, build_trimap, equispaced_masks
from medmatting.harness.config import TrainConfig
from medmatting.harness.data import Sample
from medmatting.maskgen import MaskGenerator, entropy_of_mean
from medmatting.mattingnet import MattingNetwork
from medmatting.core import TrimapLabel

REGION_MODES = ("all", "unknown-only")
METRIC_COLUMNS = ("sad", "mse", "grad", "conn", "ged", "dice")
CSV_NOTE = (
    "# medmatting evaluate v1; ged expectation: ordered pairs including self-pairs"
)


def _sample_tensor(sample: Sample) -> torch.Tensor:
    px = sample.image.pixels
    arr = px[None, None] if px.ndim == 2 else px.transpose(2, 0, 1)[None]
    return torch.as_tensor(np.ascontiguousarray(arr), dtype=torch.float32)


@torch.no_grad()
def infer_sample(
    generator: MaskGenerator,
    matting: MattingNetwork,
    sample: Sample,
    config: TrainConfig,
    seed: int,
) -> dict:
    """Alpha prediction, uncertainty map, and N sampled binary masks."""
    x = _sample_tensor(sample)
    feats = generator.unet_features(x)
    prior = generator.prior(x)
    gen = torch.Generator().manual_seed(seed)
    scores = generator.decode_samples(feats, prior, config.n_samples, gen)
    umap = entropy_of_mean(scores.mean(dim=0))
    umap_input = umap if config.umap_enabled else torch.zeros_like(umap)
    alpha_pred = matting(x, feats, umap_input.unsqueeze(1))[0]
    pred_masks = scores[:, 0].argmax(dim=1).to(torch.uint8)
    return {
        "alpha": alpha_pred.numpy().astype(np.float64),
        "umap": umap[0].numpy().astype(np.float64),
        "pred_masks": metrics.MaskSet(pred_masks.numpy()),
    }


def _region_for(sample: Sample, config: TrainConfig, region_mode: str):
    if region_mode == "all":
        return None, False
    if len(sample.masks) < 2:
        return None, True
    annotations = AnnotationSet(image=sample.image, masks=sample.masks)
    trimap = build_trimap(annotations, config.dilation_radius)
    region = trimap.region(TrimapLabel.UNKNOWN)
    return region, not region.any()


def evaluate_samples(
    generator: MaskGenerator,
    matting: MattingNetwork,
    samples: list[Sample],
    config: TrainConfig,
    region_mode: str = "all",
) -> list[dict]:
    """Metric rows for every sample; degenerate regions are flagged, not
    errors."""
    if region_mode not in REGION_MODES:
        raise ValueError(f"region_mode must be one of {REGION_MODES}, got {region_mode!r}")
    torch.set_num_threads(config.threads)
    rows = []
    for idx, sample in enumerate(samples):
        if sample.alpha is None:
            raise ValueError(f"sample {sample.sample_id} has no ground-truth alpha")
        out = infer_sample(generator, matting, sample, config, seed=config.seed * 100003 + idx)
        region, degenerate = _region_for(sample, config, region_mode)
        row = {"sample_id": sample.sample_id, "flag": "ok"}
        targets = metrics.MaskSet(
            [m.mask for m in equispaced_masks(sample.alpha, config.n_samples,
                                              config.lo_frac, config.hi_frac)]
        )
        row["ged"] = metrics.ged(out["pred_masks"], targets)
        row["dice"] = metrics.adapted_dice(out["pred_masks"], targets)
        if degenerate:
            row["flag"] = "empty-region"
            row.update({k: None for k in ("sad", "mse", "grad", "conn")})
        else:
            report = metrics.evaluate_pair(out["alpha"], sample.alpha.alpha, region)
            row.update(report.as_row())
        rows.append(row)
    return rows


def summarize(rows: list[dict]) -> dict[str, float]:
    """Mean of each metric over rows that have it."""
    out = {}
    for name in METRIC_COLUMNS:
        values = [r[name] for r in rows if r.get(name) is not None]
        if values:
            out[name] = float(np.mean(values))
    return out


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{value:.10g}"


def write_metrics_csv(path, rows: list[dict], region_mode: str = "all") -> Path:
    lines = [f"{CSV_NOTE}; region={region_mode}"]
    lines.append("sample_id," + ",".join(METRIC_COLUMNS) + ",flag")
    for row in rows:
        cells = [row["sample_id"]] + [_fmt(row.get(c)) for c in METRIC_COLUMNS] + [row["flag"]]
        lines.append(",".join(cells))
    summary_cells = ["mean±std"]
    for name in METRIC_COLUMNS:
        values = [r[name] for r in rows if r.get(name) is not None]
        if values:
            mean = float(np.mean(values))
            std = float(np.std(values))
            summary_cells.append(f"{mean:.4f}±{std:.4f}")
        else:
            summary_cells.append("")
    summary_cells.append(f"n={len(rows)}")
    lines.append(",".join(summary_cells))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def training_sad(generator, matting, samples, config) -> float:
    """Mean per-sample SAD of predictions against ground truth (raw scale)."""
    rows = []
    for idx, sample in enumerate(samples):
        out = infer_sample(generator, matting, sample, config, seed=config.seed * 100003 + idx)
        rows.append(metrics.sad(out["alpha"], sample.alpha.alpha))
    return float(np.mean(rows))


def evaluate_checkpoint(
    checkpoint_path,
    samples: list[Sample],
    config: TrainConfig,
    out_csv=None,
    region_mode: str = "all",
) -> list[dict]:
    """Load a checkpoint archive, run inference, optionally write the CSV."""
    from medmatting.harness.checkpoint import load_checkpoint

    generator, matting, _ = load_checkpoint(checkpoint_path)
    rows = evaluate_samples(generator, matting, samples, config, region_mode)
    if out_csv is not None:
        write_metrics_csv(out_csv, rows, region_mode)
    return rows
