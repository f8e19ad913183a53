"""End-to-end training of the mask generator and matting network.

Each step: draw a pseudo mask by thresholding the ground-truth alpha,
run the posterior-conditioned decode for the cross-entropy term, the
prior/posterior KL, sample N prior score maps into an entropy uncertainty
map, predict alpha with the matting network, and combine the two task
losses per the configured weighting strategy.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from medmatting import losses
from medmatting.harness import augment as aug
from medmatting.harness.checkpoint import save_checkpoint
from medmatting.harness.config import TrainConfig, with_overrides, write_config
from medmatting.harness.data import Sample
from medmatting.harness.schedule import lr_schedule
from medmatting.losses import LossWeights, OawsSchedule, UwsState
from medmatting.maskgen import BackboneConfig, MaskGenerator, entropy_of_mean, reparameterize
from medmatting.mattingnet import MattingConfig, MattingNetwork


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    lr: float
    ce: float
    kl: float
    seg: float
    l_alpha: float
    l_grad: float
    matt: float
    total: float
    gamma: float | None = None
    sigma1: float | None = None
    sigma2: float | None = None


@dataclass
class TrainResult:
    history: list[EpochStats]
    checkpoint_path: Path | None
    generator: MaskGenerator
    matting: MattingNetwork
    uws: UwsState | None


LOG_NAME = "train_log.csv"
CONFIG_NAME = "config.resolved"
CHECKPOINT_NAME = "checkpoint.npz"


def build_models(config: TrainConfig, weight_seed: int) -> tuple[MaskGenerator, MattingNetwork]:
    torch.manual_seed(weight_seed)
    backbone = BackboneConfig(
        depth=config.depth,
        base_channels=config.base_channels,
        latent_dim=config.latent_dim,
        class_count=2,
        in_channels=config.in_channels,
    )
    generator = MaskGenerator(backbone)
    matting = MattingNetwork(
        in_channels=config.in_channels,
        feature_channels=config.base_channels,
        config=MattingConfig(
            unit_count=len(config.unit_channels),
            blocks_per_unit=config.blocks_per_unit,
            unit_channels=config.unit_channels,
            attention_reduction=config.attention_reduction,
        ),
    )
    return generator, matting


def _require_alphas(samples: list[Sample]):
    missing = [s.sample_id for s in samples if s.alpha is None]
    if missing:
        raise ValueError(f"training requires ground-truth alpha for all samples; missing {missing[:5]}")


def _to_image_array(sample: Sample) -> np.ndarray:
    px = sample.image.pixels
    return px[None] if px.ndim == 2 else px.transpose(2, 0, 1)


def _weight_sequence(config: TrainConfig, n_epochs: int):
    if config.strategy == "oaws":
        sched = OawsSchedule(config.oaws_a, config.oaws_b, config.oaws_t, config.oaws_phase)
        return [losses.clamped_gamma(n, sched)[0] for n in range(n_epochs)]
    return [None] * n_epochs


def training_step(
    generator: MaskGenerator,
    matting: MattingNetwork,
    images: torch.Tensor,
    alphas: torch.Tensor,
    pseudo: torch.Tensor,
    config: TrainConfig,
    noise_gen: torch.Generator,
) -> dict[str, torch.Tensor]:
    """One forward pass through both tasks; returns every loss component."""
    feats = generator.unet_features(images)
    posterior = generator.posterior(images, pseudo)
    prior = generator.prior(images)

    noise = torch.randn(
        posterior.mean.shape, generator=noise_gen, dtype=posterior.mean.dtype
    )
    z = reparameterize(posterior.mean, posterior.log_variance, noise)
    post_scores = torch.softmax(generator.decode(feats, z), dim=1)
    ce = losses.ce_loss(post_scores, pseudo)
    kl = losses.kl_loss(posterior, prior)

    prior_scores = generator.decode_samples(feats, prior, config.n_samples, noise_gen)
    umap = entropy_of_mean(prior_scores.mean(dim=0))
    umap_input = umap if config.umap_enabled else torch.zeros_like(umap)
    alpha_pred = matting(images, feats, umap_input.unsqueeze(1))

    l_alpha = losses.alpha_l1(alpha_pred, alphas)
    l_grad = losses.grad_loss(alpha_pred, umap.detach(), alphas, config.grad_region_threshold)
    return {
        "ce": ce,
        "kl": kl,
        "l_alpha": l_alpha,
        "l_grad": l_grad,
        "umap": umap,
        "alpha_pred": alpha_pred,
    }


def _combine(seg, matt, config: TrainConfig, uws: UwsState | None, gamma: float | None):
    if config.strategy == "uws":
        return losses.uws_total(seg, matt, uws)
    if config.strategy == "oaws":
        return losses.oaws_total(seg, matt, gamma)
    return seg + matt


def write_log(path, history: list[EpochStats]) -> None:
    cols = list(asdict(history[0])) if history else []
    lines = [",".join(cols)]
    for h in history:
        row = asdict(h)
        lines.append(
            ",".join("" if row[c] is None else f"{row[c]:.10g}" for c in cols)
        )
    Path(path).write_text("\n".join(lines) + "\n")


def train(
    config: TrainConfig,
    samples: list[Sample],
    out_dir=None,
    save: bool = True,
) -> TrainResult:
    """Train on the given samples; returns history plus the trained models.

    Deterministic per (config, seed): all random draws come from seeded
    generators and torch runs with config.threads threads.
    """
    if not samples:
        raise ValueError("training data is empty")
    _require_alphas(samples)
    torch.set_num_threads(config.threads)

    root = np.random.SeedSequence(config.seed)
    weight_seed, pseudo_seed, aug_seed, order_seed, noise_seed = (
        int(s.generate_state(1)[0]) for s in root.spawn(5)
    )
    generator, matting = build_models(config, weight_seed)
    generator.train()
    matting.train()

    weights = LossWeights(config.mu, config.upsilon, config.zeta, config.xi)
    uws = UwsState(config.uws_sigma_init, config.uws_sigma_init) if config.strategy == "uws" else None
    params = list(generator.parameters()) + list(matting.parameters())
    if uws is not None:
        params += list(uws.parameters())
    optimizer = torch.optim.Adam(
        params,
        lr=config.base_lr,
        betas=(config.momentum, 0.999),
        weight_decay=config.weight_decay,
    )

    pseudo_rng = np.random.default_rng(pseudo_seed)
    aug_rng = np.random.default_rng(aug_seed)
    order_rng = np.random.default_rng(order_seed)
    noise_gen = torch.Generator().manual_seed(noise_seed)

    raw_images = [_to_image_array(s) for s in samples]
    raw_alphas = [s.alpha.alpha for s in samples]
    n = len(samples)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    warmup_steps = config.warmup_epochs * steps_per_epoch
    gammas = _weight_sequence(config, config.epochs)

    history: list[EpochStats] = []
    step = 0
    for epoch in range(config.epochs):
        order = order_rng.permutation(n)
        sums = {k: 0.0 for k in ("ce", "kl", "seg", "l_alpha", "l_grad", "matt", "total")}
        epoch_lr = 0.0
        for start in range(0, n, config.batch_size):
            batch_ids = order[start : start + config.batch_size]
            imgs, alphs, pseudos = [], [], []
            for i in batch_ids:
                img, alpha = raw_images[i], raw_alphas[i]
                if config.augment:
                    warped_img, warped_alpha, _ = aug.augment(
                        img.transpose(1, 2, 0) if img.shape[0] == 3 else img[0],
                        alpha,
                        (),
                        aug_rng,
                    )
                    if warped_alpha.max() > 0:
                        img = (
                            warped_img.transpose(2, 0, 1)
                            if warped_img.ndim == 3
                            else warped_img[None]
                        )
                        alpha = warped_alpha
                peak = alpha.max()
                tau = pseudo_rng.uniform(config.lo_frac * peak, config.hi_frac * peak)
                imgs.append(img)
                alphs.append(alpha)
                pseudos.append((alpha >= tau).astype(np.float32))
            images = torch.as_tensor(np.stack(imgs), dtype=torch.float32)
            alphas = torch.as_tensor(np.stack(alphs), dtype=torch.float32)
            pseudo = torch.as_tensor(np.stack(pseudos))

            lr = lr_schedule(step, total_steps, config.base_lr, warmup_steps)
            for group in optimizer.param_groups:
                group["lr"] = lr
            epoch_lr = lr

            parts = training_step(generator, matting, images, alphas, pseudo, config, noise_gen)
            seg = losses.seg_loss(parts["ce"], parts["kl"], weights)
            matt = losses.matt_loss(parts["l_alpha"], parts["l_grad"], weights)
            total = _combine(seg, matt, config, uws, gammas[epoch])

            if not torch.isfinite(total):
                _dump_divergence(out_dir, epoch, step, parts, seg, matt, total)
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} step {step}; diagnostics dumped"
                )

            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            step += 1

            for key, value in (
                ("ce", parts["ce"]),
                ("kl", parts["kl"]),
                ("seg", seg),
                ("l_alpha", parts["l_alpha"]),
                ("l_grad", parts["l_grad"]),
                ("matt", matt),
                ("total", total),
            ):
                sums[key] += float(value.detach())

        means = {k: v / steps_per_epoch for k, v in sums.items()}
        history.append(
            EpochStats(
                epoch=epoch,
                lr=epoch_lr,
                gamma=gammas[epoch],
                sigma1=uws.sigma1 if uws else None,
                sigma2=uws.sigma2 if uws else None,
                **means,
            )
        )

    generator.eval()
    matting.eval()
    checkpoint_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_config(out / CONFIG_NAME, config)
        write_log(out / LOG_NAME, history)
        if save:
            checkpoint_path = save_checkpoint(
                out / CHECKPOINT_NAME, generator, matting, extra={"epochs": config.epochs}
            )
    return TrainResult(history, checkpoint_path, generator, matting, uws)


def _dump_divergence(out_dir, epoch, step, parts, seg, matt, total) -> None:
    if out_dir is None:
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = {"epoch": epoch, "step": step}
    for name, value in (
        ("ce", parts["ce"]),
        ("kl", parts["kl"]),
        ("l_alpha", parts["l_alpha"]),
        ("l_grad", parts["l_grad"]),
        ("seg", seg),
        ("matt", matt),
        ("total", total),
    ):
        state[name] = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
    (out / "divergence.json").write_text(json.dumps(state, indent=2))


def fold_splits(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic partition of range(n) into `folds` near-equal test splits."""
    if folds < 2 or folds > n:
        raise ValueError(f"need 2 <= folds <= {n}, got {folds}")
    order = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(order, folds)]


def cross_validate(config: TrainConfig, samples: list[Sample], out_dir=None) -> dict:
    """Train per fold on the complement, evaluate on the fold, aggregate
    mean and std of the per-fold metric means."""
    from medmatting.harness.evaluate import evaluate_samples, summarize

    splits = fold_splits(len(samples), config.folds, config.seed)
    fold_summaries = []
    for k, test_ids in enumerate(splits):
        if len(test_ids) == 0:
            raise ValueError(f"fold {k} is empty; reduce folds or add data")
        test_set = [samples[i] for i in test_ids]
        train_set = [s for i, s in enumerate(samples) if i not in set(test_ids)]
        fold_dir = Path(out_dir) / f"fold_{k}" if out_dir is not None else None
        fold_config = with_overrides(config, seed=config.seed + k)
        result = train(fold_config, train_set, out_dir=fold_dir, save=False)
        rows = evaluate_samples(
            result.generator, result.matting, test_set, fold_config
        )
        fold_summaries.append(summarize(rows))
    metrics = sorted(fold_summaries[0])
    aggregate = {
        name: {
            "mean": float(np.mean([s[name] for s in fold_summaries])),
            "std": float(np.std([s[name] for s in fold_summaries])),
        }
        for name in metrics
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "xval_summary.json").write_text(json.dumps(aggregate, indent=2, sort_keys=True))
    return aggregate
