"""Probabilistic mask generator: a conditional VAE wrapped around a UNet.

A prior encoder maps the image to a diagonal-Gaussian latent; a posterior
encoder sees the image plus a target mask. Latent draws are broadcast over
the UNet decoder features and fused by three 1x1 convolutions into 2-class
score maps. Averaging N sampled score maps and taking the per-pixel entropy
yields the uncertainty map that guides the matting network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from medmatting.core import (
    ArityError,
    BinaryMask,
    DomainError,
    Image,
    ShapeError,
    StateError,
)

PROB_EPS = 1e-12


@dataclass(frozen=True)
class BackboneConfig:
    """Size knobs for the generator; defaults are the desk-scale variant."""

    depth: int = 4
    base_channels: int = 16
    latent_dim: int = 6
    class_count: int = 2
    in_channels: int = 1

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError(f"depth must be >= 2, got {self.depth}")
        if self.base_channels < 4:
            raise ValueError(f"base_channels must be >= 4, got {self.base_channels}")
        if self.latent_dim < 2:
            raise ValueError(f"latent_dim must be >= 2, got {self.latent_dim}")
        if self.class_count < 2:
            raise ValueError(f"class_count must be >= 2, got {self.class_count}")
        if self.in_channels not in (1, 3):
            raise ValueError(f"in_channels must be 1 or 3, got {self.in_channels}")

    @property
    def stage_channels(self) -> tuple[int, ...]:
        return tuple(self.base_channels * 2**i for i in range(self.depth))

    @property
    def spatial_divisor(self) -> int:
        return 2 ** (self.depth - 1)


@dataclass(frozen=True)
class GaussianLatent:
    """Diagonal Gaussian over the latent space: mean and log-variance."""

    mean: torch.Tensor
    log_variance: torch.Tensor

    def __post_init__(self):
        if self.mean.shape != self.log_variance.shape:
            raise ShapeError(
                f"mean shape {tuple(self.mean.shape)} != log_variance shape "
                f"{tuple(self.log_variance.shape)}"
            )
        if not torch.isfinite(self.mean).all() or not torch.isfinite(self.log_variance).all():
            raise DomainError("latent parameters must be finite")

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]


def reparameterize(
    mean: torch.Tensor, log_variance: torch.Tensor, noise: torch.Tensor
) -> torch.Tensor:
    """Differentiable sample ``mean + exp(0.5 * log_variance) * noise``."""
    return mean + torch.exp(0.5 * log_variance) * noise


@dataclass(frozen=True)
class ScoreMapSet:
    """N sampled per-class probability maps, shape (N, C, H, W)."""

    maps: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.maps)
        if m.ndim != 4:
            raise ShapeError(f"score maps must be (N, C, H, W), got {m.shape}")
        if m.shape[0] < 1:
            raise ArityError("need at least one score map")
        if m.min() < 0.0:
            raise DomainError("score maps must be nonnegative")
        sums = m.sum(axis=1)
        if np.abs(sums - 1.0).max() > 1e-5:
            raise DomainError("class probabilities must sum to 1 within 1e-5")
        object.__setattr__(self, "maps", m)

    @property
    def count(self) -> int:
        return self.maps.shape[0]

    @property
    def class_count(self) -> int:
        return self.maps.shape[1]

    def mean_map(self) -> np.ndarray:
        """Per-class average over samples, shape (C, H, W), float64."""
        return self.maps.astype(np.float64).mean(axis=0)


@dataclass(frozen=True)
class UncertaintyMap:
    """Per-pixel entropy (nats) of the mean score map; bounded by ln C."""

    values: np.ndarray
    source_n: int
    class_count: int = 2

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeError(f"uncertainty map must be 2D, got {v.shape}")
        bound = math.log(self.class_count)
        if not np.isfinite(v).all() or v.min() < 0.0 or v.max() > bound + 1e-9:
            raise DomainError(f"entropies must lie in [0, ln {self.class_count}]")
        if self.source_n < 1:
            raise ArityError("source_n must be >= 1")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def entropy_of_mean(mean_probs: torch.Tensor) -> torch.Tensor:
    """Per-pixel entropy of averaged score maps, channel dim reduced.

    ``mean_probs`` is (B, C, H, W); probabilities are clamped to
    [1e-12, 1] before the log. Differentiable.
    """
    p = mean_probs.clamp(min=PROB_EPS, max=1.0)
    return -(p * p.log()).sum(dim=1)


def uncertainty_map(scores: ScoreMapSet) -> UncertaintyMap:
    """Average the N score maps per class, then take per-pixel entropy."""
    mean = scores.mean_map()
    p = np.clip(mean, PROB_EPS, 1.0)
    values = -(p * np.log(p)).sum(axis=0)
    values = np.clip(values, 0.0, math.log(scores.class_count))
    return UncertaintyMap(values, source_n=scores.count, class_count=scores.class_count)


# ---------------------------------------------------------------------------
# network modules
# ---------------------------------------------------------------------------


class _ConvPair(nn.Module):
    """Two 3x3 conv + ReLU layers."""

    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(cin, cout, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(cout, cout, 3, padding=1),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.net(x)


class _DownStack(nn.Module):
    """Contracting conv stack; returns per-stage features, finest first."""

    def __init__(self, in_channels: int, stage_channels: tuple[int, ...]):
        super().__init__()
        blocks = []
        cin = in_channels
        for cout in stage_channels:
            blocks.append(_ConvPair(cin, cout))
            cin = cout
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x):
        feats = []
        for i, block in enumerate(self.blocks):
            if i > 0:
                x = F.avg_pool2d(x, 2)
            x = block(x)
            feats.append(x)
        return feats


class _LatentEncoder(nn.Module):
    """Contracting stack -> global average pool -> (mean, log_variance)."""

    def __init__(self, in_channels: int, stage_channels: tuple[int, ...], latent_dim: int):
        super().__init__()
        self.down = _DownStack(in_channels, stage_channels)
        self.head = nn.Conv2d(stage_channels[-1], 2 * latent_dim, 1)
        self.latent_dim = latent_dim

    def forward(self, x) -> GaussianLatent:
        bottom = self.down(x)[-1]
        pooled = bottom.mean(dim=(2, 3), keepdim=True)
        stats = self.head(pooled)[:, :, 0, 0]
        return GaussianLatent(
            mean=stats[:, : self.latent_dim],
            log_variance=stats[:, self.latent_dim :],
        )


class MaskGenerator(nn.Module):
    """UNet + prior/posterior latent encoders + 1x1 latent-fusion head."""

    def __init__(self, config: BackboneConfig = BackboneConfig()):
        super().__init__()
        self.config = config
        ch = config.stage_channels
        self.encoder = _DownStack(config.in_channels, ch)
        ups = []
        for i in range(config.depth - 1, 0, -1):
            ups.append(_ConvPair(ch[i] + ch[i - 1], ch[i - 1]))
        self.decoder = nn.ModuleList(ups)
        self.prior_net = _LatentEncoder(config.in_channels, ch, config.latent_dim)
        self.posterior_net = _LatentEncoder(config.in_channels + 1, ch, config.latent_dim)
        c0 = ch[0]
        self.fuser = nn.Sequential(
            nn.Conv2d(c0 + config.latent_dim, c0, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(c0, c0, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(c0, config.class_count, 1),
        )

    # -- tensor-level API (batched, differentiable) --

    def _check_ready(self):
        if next(self.parameters()).is_meta:
            raise StateError("model weights are not initialized (meta tensors)")

    def _check_spatial(self, x: torch.Tensor):
        if x.shape[-1] % self.config.spatial_divisor or x.shape[-2] % self.config.spatial_divisor:
            raise ShapeError(
                f"spatial size {tuple(x.shape[-2:])} must be divisible by "
                f"{self.config.spatial_divisor} for depth {self.config.depth}"
            )

    def unet_features(self, x: torch.Tensor) -> torch.Tensor:
        """Full-resolution decoder features (B, base_channels, H, W)."""
        self._check_ready()
        self._check_spatial(x)
        feats = self.encoder(x)
        y = feats[-1]
        for i, block in enumerate(self.decoder):
            skip = feats[-2 - i]
            y = F.interpolate(y, scale_factor=2, mode="bilinear", align_corners=False)
            y = block(torch.cat([y, skip], dim=1))
        return y

    def prior(self, x: torch.Tensor) -> GaussianLatent:
        self._check_ready()
        self._check_spatial(x)
        return self.prior_net(x)

    def posterior(self, x: torch.Tensor, mask: torch.Tensor) -> GaussianLatent:
        self._check_ready()
        self._check_spatial(x)
        if mask.shape[-2:] != x.shape[-2:]:
            raise ShapeError(
                f"mask spatial shape {tuple(mask.shape[-2:])} != image {tuple(x.shape[-2:])}"
            )
        if mask.dim() == 3:
            mask = mask.unsqueeze(1)
        return self.posterior_net(torch.cat([x, mask.to(x.dtype)], dim=1))

    def decode(self, features: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        """Broadcast latent over features, fuse with 1x1 convs -> class logits."""
        self._check_ready()
        b, _, h, w = features.shape
        zmap = z[:, :, None, None].expand(b, z.shape[1], h, w)
        return self.fuser(torch.cat([features, zmap], dim=1))

    def sample_scores(
        self, x: torch.Tensor, n: int, generator: torch.Generator | None = None
    ) -> torch.Tensor:
        """n softmax score maps from prior draws, shape (n, B, C, H, W)."""
        if n < 1:
            raise ArityError(f"sample count must be >= 1, got {n}")
        feats = self.unet_features(x)
        prior = self.prior(x)
        return self.decode_samples(feats, prior, n, generator)

    def decode_samples(
        self,
        features: torch.Tensor,
        latent: GaussianLatent,
        n: int,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        """Decode n reparameterized draws in one batched pass."""
        if n < 1:
            raise ArityError(f"sample count must be >= 1, got {n}")
        b = features.shape[0]
        noise = torch.randn(
            (n, *latent.mean.shape),
            generator=generator,
            dtype=latent.mean.dtype,
            device=latent.mean.device,
        )
        z = reparameterize(latent.mean.unsqueeze(0), latent.log_variance.unsqueeze(0), noise)
        feats = features.unsqueeze(0).expand(n, *features.shape).reshape(
            n * b, *features.shape[1:]
        )
        logits = self.decode(feats, z.reshape(n * b, -1))
        probs = torch.softmax(logits, dim=1)
        return probs.reshape(n, b, *probs.shape[1:])

    # -- image-level convenience API --

    def _to_batch(self, image: Image) -> torch.Tensor:
        px = image.pixels
        if image.channels != self.config.in_channels:
            raise ShapeError(
                f"image has {image.channels} channels, model expects {self.config.in_channels}"
            )
        arr = px[None, None] if px.ndim == 2 else px.transpose(2, 0, 1)[None]
        return torch.as_tensor(np.ascontiguousarray(arr), dtype=torch.float32)

    @torch.no_grad()
    def prior_encode(self, image: Image) -> GaussianLatent:
        lat = self.prior(self._to_batch(image))
        return GaussianLatent(mean=lat.mean[0], log_variance=lat.log_variance[0])

    @torch.no_grad()
    def posterior_encode(self, image: Image, mask: BinaryMask) -> GaussianLatent:
        if mask.shape != image.shape:
            raise ShapeError(f"mask shape {mask.shape} != image shape {image.shape}")
        m = torch.as_tensor(mask.mask, dtype=torch.float32)[None]
        lat = self.posterior(self._to_batch(image), m)
        return GaussianLatent(mean=lat.mean[0], log_variance=lat.log_variance[0])

    @torch.no_grad()
    def sample_masks(self, image: Image, n: int, rng_seed: int = 0) -> ScoreMapSet:
        """Draw n score maps for one image; bitwise reproducible per seed."""
        gen = torch.Generator().manual_seed(int(rng_seed))
        scores = self.sample_scores(self._to_batch(image), n, gen)
        return ScoreMapSet(scores[:, 0].cpu().numpy())

    @torch.no_grad()
    def latent_features(self, image: Image) -> np.ndarray:
        """Pre-classification decoder features, shape (base_channels, H, W)."""
        return self.unet_features(self._to_batch(image))[0].cpu().numpy()
