"""Matting refinement network guided by the uncertainty map.

Input image, generator latent features, and the uncertainty map are
concatenated and pushed through three propagation units of residual blocks,
with a channel attention module between the first two units. The
uncertainty map is re-concatenated to the inputs of the last two units. A
two-convolution output block plus sigmoid produces the alpha matte.

Initialization is neutral: the last convolution of every residual block,
of the attention bottleneck, and of the output block starts at zero, so a
freshly built network is the identity inside each unit and predicts
``sigmoid(output bias)`` everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from medmatting.core import AlphaMatte, Image, ShapeError, StateError
from medmatting.maskgen import UncertaintyMap


@dataclass(frozen=True)
class MattingConfig:
    unit_count: int = 3
    blocks_per_unit: int = 3
    unit_channels: tuple[int, ...] = (32, 32, 16)
    attention_reduction: int = 4

    def __post_init__(self):
        if self.unit_count < 1:
            raise ValueError(f"unit_count must be >= 1, got {self.unit_count}")
        if self.blocks_per_unit < 1:
            raise ValueError(f"blocks_per_unit must be >= 1, got {self.blocks_per_unit}")
        if len(self.unit_channels) != self.unit_count:
            raise ValueError(
                f"unit_channels {self.unit_channels} must list one width per unit"
            )
        if self.attention_reduction < 1:
            raise ValueError("attention_reduction must be >= 1")


class ChannelAttention(nn.Module):
    """CBAM-style channel gates from pooled descriptors via a shared bottleneck.

    The bottleneck's output convolution is zero-initialized, so gates start
    at a uniform 0.5 and the module scales features neutrally at init.
    """

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.bottleneck = nn.Sequential(
            nn.Conv2d(channels, hidden, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, channels, 1),
        )
        nn.init.zeros_(self.bottleneck[-1].weight)
        nn.init.zeros_(self.bottleneck[-1].bias)

    def gates(self, x: torch.Tensor) -> torch.Tensor:
        avg = x.mean(dim=(2, 3), keepdim=True)
        peak = x.amax(dim=(2, 3), keepdim=True)
        return torch.sigmoid(self.bottleneck(avg) + self.bottleneck(peak))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.gates(x) * x


class ResidualBlock(nn.Module):
    """Pre-activation residual block; the second conv is zero-initialized so
    the block is the identity at construction."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(F.relu(self.conv1(F.relu(x))))


class PropagationUnit(nn.Module):
    """Channel projection followed by a stack of residual blocks."""

    def __init__(self, cin: int, cout: int, blocks: int):
        super().__init__()
        self.project = nn.Conv2d(cin, cout, 3, padding=1)
        self.blocks = nn.Sequential(*[ResidualBlock(cout) for _ in range(blocks)])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.blocks(self.project(x))


class MattingNetwork(nn.Module):
    def __init__(
        self,
        in_channels: int = 1,
        feature_channels: int = 16,
        config: MattingConfig = MattingConfig(),
    ):
        super().__init__()
        self.config = config
        self.in_channels = in_channels
        self.feature_channels = feature_channels
        widths = config.unit_channels
        # units at index >= umap_start get the uncertainty map re-concatenated
        self.umap_start = max(1, config.unit_count - 2)
        units = []
        cin = in_channels + feature_channels + 1
        for i, cout in enumerate(widths):
            extra = 1 if i >= self.umap_start else 0
            units.append(PropagationUnit(cin + extra, cout, config.blocks_per_unit))
            cin = cout
        self.units = nn.ModuleList(units)
        self.attention = (
            ChannelAttention(widths[0], config.attention_reduction)
            if config.unit_count >= 2
            else None
        )
        self.head = nn.Sequential(
            nn.Conv2d(widths[-1], widths[-1], 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(widths[-1], 1, 3, padding=1),
        )
        nn.init.zeros_(self.head[-1].weight)

    @property
    def output_bias(self) -> torch.Tensor:
        return self.head[-1].bias

    def _check_ready(self):
        if next(self.parameters()).is_meta:
            raise StateError("model weights are not initialized (meta tensors)")

    def forward(
        self, image: torch.Tensor, features: torch.Tensor, umap: torch.Tensor
    ) -> torch.Tensor:
        """Predict alpha in [0, 1]; inputs are (B, C, H, W) with matching
        spatial shapes, umap single-channel."""
        self._check_ready()
        if umap.dim() == 3:
            umap = umap.unsqueeze(1)
        spatial = image.shape[-2:]
        if features.shape[-2:] != spatial or umap.shape[-2:] != spatial:
            raise ShapeError(
                f"spatial shapes differ: image {tuple(spatial)}, features "
                f"{tuple(features.shape[-2:])}, umap {tuple(umap.shape[-2:])}"
            )
        if image.shape[1] != self.in_channels or features.shape[1] != self.feature_channels:
            raise ShapeError(
                f"channel mismatch: image {image.shape[1]} (expect {self.in_channels}), "
                f"features {features.shape[1]} (expect {self.feature_channels})"
            )
        x = torch.cat([image, features, umap], dim=1)
        for i, unit in enumerate(self.units):
            if i >= self.umap_start:
                x = torch.cat([x, umap], dim=1)
            x = unit(x)
            if i == 0 and self.attention is not None:
                x = self.attention(x)
        return torch.sigmoid(self.head(x)).squeeze(1)

    @torch.no_grad()
    def predict_alpha(
        self, image: Image, features: np.ndarray, umap: UncertaintyMap
    ) -> AlphaMatte:
        px = image.pixels
        img = px[None, None] if px.ndim == 2 else px.transpose(2, 0, 1)[None]
        feats = np.asarray(features)
        if feats.ndim != 3:
            raise ShapeError(f"features must be (C, H, W), got {feats.shape}")
        if feats.shape[1:] != image.shape or umap.shape != image.shape:
            raise ShapeError(
                f"spatial shapes differ: image {image.shape}, features "
                f"{feats.shape[1:]}, umap {umap.shape}"
            )
        out = self.forward(
            torch.as_tensor(np.ascontiguousarray(img), dtype=torch.float32),
            torch.as_tensor(feats, dtype=torch.float32)[None],
            torch.as_tensor(umap.values, dtype=torch.float32)[None],
        )
        return AlphaMatte(out[0].cpu().numpy().astype(np.float64))
