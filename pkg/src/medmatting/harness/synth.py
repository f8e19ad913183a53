"""Synthetic soft-blob scenes composed as alpha * fg + (1 - alpha) * bg.

Each scene is an elliptical alpha ramp with Gaussian-blurred edges,
composited over constant (or smooth-field) foreground/background
intensities with additive Gaussian noise, plus simulated annotator masks
from equispaced thresholds of the alpha matte.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from medmatting.core import AlphaMatte, Image
from medmatting.fusion import AnnotationSet, equispaced_masks


@dataclass(frozen=True)
class SyntheticScene:
    """Compositing ingredients; fg/bg are scalars or fields broadcastable to
    the alpha shape (append a channel axis for color)."""

    fg: float | np.ndarray
    bg: float | np.ndarray
    alpha: AlphaMatte
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def compose(scene: SyntheticScene, rng: np.random.Generator | None = None) -> Image:
    """Composite the scene, add Gaussian noise, clip into [0, 1]."""
    alpha = scene.alpha.alpha
    fg = np.asarray(scene.fg, dtype=np.float64)
    bg = np.asarray(scene.bg, dtype=np.float64)
    if fg.ndim == 3 or bg.ndim == 3:
        alpha = alpha[..., None]
    base = alpha * fg + (1.0 - alpha) * bg
    base = np.broadcast_to(base, np.broadcast_shapes(base.shape, fg.shape, bg.shape)).copy()
    if scene.noise_sigma > 0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        base += rng.normal(0.0, scene.noise_sigma, size=base.shape)
    return Image(np.clip(base, 0.0, 1.0))


def _blob_alpha(size: int, rng: np.random.Generator) -> np.ndarray:
    """Rotated elliptical ramp, 1 at the core decaying linearly to 0, then
    blurred for smooth edges."""
    cy, cx = rng.uniform(0.35 * size, 0.65 * size, size=2)
    ry = rng.uniform(0.18 * size, 0.33 * size)
    rx = rng.uniform(0.18 * size, 0.33 * size)
    angle = rng.uniform(0.0, np.pi)
    ramp_width = rng.uniform(0.25, 0.5)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    yr = (yy - cy) * np.cos(angle) - (xx - cx) * np.sin(angle)
    xr = (yy - cy) * np.sin(angle) + (xx - cx) * np.cos(angle)
    dist = np.sqrt((yr / ry) ** 2 + (xr / rx) ** 2)
    alpha = np.clip((1.0 - dist) / ramp_width, 0.0, 1.0)
    alpha = ndimage.gaussian_filter(alpha, sigma=rng.uniform(0.5, 1.2))
    return np.clip(alpha, 0.0, 1.0)


def synth_dataset(
    count: int,
    size: int,
    seed: int,
    noise_sigma: float = 0.01,
    annotators: int = 4,
) -> list[tuple[Image, AlphaMatte, AnnotationSet]]:
    """Deterministic list of (image, alpha, annotations) soft-blob samples.

    Annotator masks are equispaced thresholds of the alpha matte, mimicking
    raters with different uncertainty tolerances.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if size < 16:
        raise ValueError("size must be >= 16")
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(count):
        alpha = AlphaMatte(_blob_alpha(size, rng))
        scene = SyntheticScene(
            fg=rng.uniform(0.7, 0.95),
            bg=rng.uniform(0.05, 0.3),
            alpha=alpha,
            noise_sigma=noise_sigma,
        )
        image = compose(scene, rng)
        masks = equispaced_masks(alpha, annotators)
        annotations = AnnotationSet(image=image, masks=tuple(masks))
        samples.append((image, alpha, annotations))
    return samples
