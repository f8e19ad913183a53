"""Training losses and the two multi-task weighting strategies.

The segmentation task is trained with cross entropy against pseudo masks
plus the posterior/prior KL; the matting task with an L1 alpha loss plus a
Sobel gradient loss restricted to the uncertain region. The two task losses
are combined either with trainable homoscedastic noise scales (UWS) or with
a decaying cosine weight schedule (OAWS).

All loss functions accept numpy arrays or torch tensors and return torch
scalars; pass float64 inputs for reference-precision evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from medmatting.core import DomainError, ShapeError
from medmatting.maskgen import GaussianLatent

PROB_EPS = 1e-12

SOBEL_X = ((-1.0, 0.0, 1.0), (-2.0, 0.0, 2.0), (-1.0, 0.0, 1.0))


@dataclass(frozen=True)
class LossWeights:
    """Per-term weights: (mu, upsilon) for segmentation, (zeta, xi) for matting."""

    mu: float = 1.0
    upsilon: float = 10.0
    zeta: float = 1.0
    xi: float = 1.0

    def __post_init__(self):
        for name in ("mu", "upsilon", "zeta", "xi"):
            if getattr(self, name) < 0:
                raise DomainError(f"loss weight {name} must be >= 0")


def _as_tensor(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(x, dtype=torch.float64)


def _spatial(x: torch.Tensor) -> tuple[int, int]:
    return tuple(x.shape[-2:])


def ce_loss(score, pseudo) -> torch.Tensor:
    """Pixel-mean cross entropy of a 2-class score map against a binary mask.

    ``score`` is (C, H, W) or (B, C, H, W) probabilities with channel 1 the
    foreground class; ``pseudo`` is the matching (H, W) / (B, H, W) binary
    mask, one-hot encoded internally. Probabilities are clamped to
    [1e-12, 1] before the log.
    """
    p = _as_tensor(score)
    m = _as_tensor(pseudo)
    if p.dim() == 3:
        p, m = p.unsqueeze(0), m.unsqueeze(0)
    if p.dim() != 4 or p.shape[1] != 2:
        raise ShapeError(f"score map must be (B, 2, H, W), got {tuple(p.shape)}")
    if m.shape != (p.shape[0], *p.shape[2:]):
        raise ShapeError(
            f"pseudo mask shape {tuple(m.shape)} does not match score map {tuple(p.shape)}"
        )
    m = m.to(p.dtype)
    onehot = torch.stack([1.0 - m, m], dim=1)
    logp = p.clamp(min=PROB_EPS, max=1.0).log()
    return -(onehot * logp).sum(dim=1).mean()


def kl_loss(q: GaussianLatent, p: GaussianLatent) -> torch.Tensor:
    """Analytic KL(q || p) for diagonal Gaussians, summed over dimensions.

    Batched latents (B, L) return the batch mean of per-example KLs.
    """
    if q.mean.shape != p.mean.shape:
        raise ShapeError(
            f"latent dims differ: {tuple(q.mean.shape)} vs {tuple(p.mean.shape)}"
        )
    lv_q, lv_p = q.log_variance, p.log_variance
    per_dim = 0.5 * (
        torch.exp(lv_q - lv_p)
        + (q.mean - p.mean) ** 2 / torch.exp(lv_p)
        - 1.0
        + lv_p
        - lv_q
    )
    total = per_dim.sum(dim=-1)
    return total.mean() if total.dim() > 0 else total


def alpha_l1(pred, gt) -> torch.Tensor:
    """Mean absolute difference between predicted and ground-truth alpha."""
    a = _as_tensor(pred)
    b = _as_tensor(gt)
    if a.shape != b.shape:
        raise ShapeError(f"alpha shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def sobel_gradients(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """3x3 Sobel responses along x and y with replicate boundary padding.

    Accepts (H, W), (B, H, W) or (B, 1, H, W); returns tensors of the same
    leading shape.
    """
    orig_dim = x.dim()
    if orig_dim == 2:
        x = x[None, None]
    elif orig_dim == 3:
        x = x[:, None]
    kx = torch.tensor(SOBEL_X, dtype=x.dtype, device=x.device)[None, None]
    ky = kx.transpose(-1, -2)
    padded = F.pad(x, (1, 1, 1, 1), mode="replicate")
    gx = F.conv2d(padded, kx)
    gy = F.conv2d(padded, ky)
    if orig_dim == 2:
        return gx[0, 0], gy[0, 0]
    if orig_dim == 3:
        return gx[:, 0], gy[:, 0]
    return gx, gy


def grad_loss(pred, umap, gt, region_threshold: float = 0.1) -> torch.Tensor:
    """L1 Sobel-gradient mismatch averaged over the uncertain region.

    The region is ``umap > region_threshold``; an empty region contributes 0
    by convention.
    """
    if region_threshold < 0:
        raise DomainError("region_threshold must be >= 0")
    a = _as_tensor(pred)
    b = _as_tensor(gt)
    u = _as_tensor(umap)
    if a.shape != b.shape or _spatial(u) != _spatial(a):
        raise ShapeError(
            f"shapes differ: pred {tuple(a.shape)}, gt {tuple(b.shape)}, umap {tuple(u.shape)}"
        )
    region = (u > region_threshold).reshape(a.shape)
    count = region.sum()
    if count == 0:
        return torch.zeros((), dtype=a.dtype, device=a.device)
    gx_a, gy_a = sobel_gradients(a)
    gx_b, gy_b = sobel_gradients(b)
    l1 = (gx_a - gx_b).abs() + (gy_a - gy_b).abs()
    return (l1 * region.to(a.dtype)).sum() / count


def seg_loss(ce, kl, weights: LossWeights = LossWeights()) -> torch.Tensor:
    """Segmentation task total: mu * ce + upsilon * kl."""
    return weights.mu * _as_tensor(ce) + weights.upsilon * _as_tensor(kl)


def matt_loss(l_alpha, l_grad, weights: LossWeights = LossWeights()) -> torch.Tensor:
    """Matting task total: zeta * l_alpha + xi * l_grad."""
    return weights.zeta * _as_tensor(l_alpha) + weights.xi * _as_tensor(l_grad)


class UwsState(nn.Module):
    """Trainable homoscedastic task-noise scales, stored as log(sigma).

    The log parameterization keeps both sigmas strictly positive under
    gradient descent.
    """

    def __init__(self, sigma1: float = 4.0, sigma2: float = 4.0, dtype=torch.float64):
        super().__init__()
        if sigma1 <= 0 or sigma2 <= 0:
            raise DomainError("sigmas must be positive")
        self.log_sigma1 = nn.Parameter(torch.tensor(math.log(sigma1), dtype=dtype))
        self.log_sigma2 = nn.Parameter(torch.tensor(math.log(sigma2), dtype=dtype))

    @property
    def sigma1(self) -> float:
        return float(self.log_sigma1.detach().exp())

    @property
    def sigma2(self) -> float:
        return float(self.log_sigma2.detach().exp())


def uws_total(seg, matt, state: UwsState) -> torch.Tensor:
    """Uncertainty-weighted total:
    seg / sigma1^2 + matt / (2 * sigma2^2) + log(sigma1 * sigma2).
    """
    seg = _as_tensor(seg)
    matt = _as_tensor(matt)
    inv1 = torch.exp(-2.0 * state.log_sigma1)
    inv2 = torch.exp(-2.0 * state.log_sigma2)
    return seg * inv1 + 0.5 * matt * inv2 + state.log_sigma1 + state.log_sigma2


@dataclass(frozen=True)
class OawsSchedule:
    """Oscillation-attenuation weight schedule parameters.

    ``phase`` selects the cosine argument: "quadratic" uses b*n^2 (the
    literal n * f(n) with f(n) = b*n), "linear" uses b*n.
    """

    a: float = 0.05
    b: float = 0.03
    t: float = 0.50
    phase: str = "quadratic"

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise DomainError("decay and period coefficients must be positive")
        if not (0.0 <= self.t <= 1.0):
            raise DomainError("convergence target t must lie in [0, 1]")
        if self.phase not in ("quadratic", "linear"):
            raise ValueError(f"phase must be 'quadratic' or 'linear', got {self.phase!r}")


def oaws_gamma(n: int, sched: OawsSchedule = OawsSchedule()) -> float:
    """Segmentation weight at epoch n: 0.5 * exp(-a*n) * cos(arg) + t."""
    if n < 0:
        raise DomainError(f"epoch index must be >= 0, got {n}")
    arg = sched.b * n * n if sched.phase == "quadratic" else sched.b * n
    return 0.5 * math.exp(-sched.a * n) * math.cos(arg) + sched.t


def oaws_total(seg, matt, gamma: float) -> torch.Tensor:
    """Convex combination gamma * seg + (1 - gamma) * matt."""
    g = float(gamma)
    if not (0.0 <= g <= 1.0):
        raise DomainError(f"gamma must lie in [0, 1], got {g}")
    return g * _as_tensor(seg) + (1.0 - g) * _as_tensor(matt)


def clamped_gamma(n: int, sched: OawsSchedule = OawsSchedule()) -> tuple[float, bool]:
    """oaws_gamma clipped to [0, 1]; the flag reports whether clipping fired.

    Clipping is only possible when t != 0.5; callers should log fired clips.
    """
    g = oaws_gamma(n, sched)
    clipped = min(1.0, max(0.0, g))
    return clipped, clipped != g
