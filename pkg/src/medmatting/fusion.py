"""Fusing multi-annotator masks and ground-truth mattes into training targets.

Trimaps come from annotator agreement: pixels every rater marks foreground
(resp. background) keep that label, everything else is UNKNOWN, and the
UNKNOWN set is dilated with a disk to absorb boundary blur. Pseudo binary
masks come from thresholding a ground-truth alpha matte at a random level,
which simulates raters with different uncertainty tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from medmatting.core import (
    AlphaMatte,
    ArityError,
    BinaryMask,
    DegenerateInputError,
    Image,
    ShapeError,
    Trimap,
    TrimapLabel,
)

DEFAULT_LO_FRAC = 0.2
DEFAULT_HI_FRAC = 0.7
DEFAULT_DILATION_RADIUS = 2
HISTOGRAM_BINS = 64


@dataclass(frozen=True)
class AnnotationSet:
    """An image with binary masks from at least two distinct annotators."""

    image: Image
    masks: tuple[BinaryMask, ...]

    def __post_init__(self):
        masks = tuple(self.masks)
        if len(masks) < 2:
            raise ArityError(f"need >= 2 annotator masks, got {len(masks)}")
        for m in masks:
            if m.shape != self.image.shape:
                raise ShapeError(
                    f"mask shape {m.shape} != image shape {self.image.shape}"
                )
        object.__setattr__(self, "masks", masks)

    def stacked(self) -> np.ndarray:
        return np.stack([m.mask for m in self.masks], axis=0)


@dataclass(frozen=True)
class PseudoMaskSampler:
    """Threshold range for pseudo-mask sampling, as fractions of max(alpha)."""

    lo_frac: float = DEFAULT_LO_FRAC
    hi_frac: float = DEFAULT_HI_FRAC
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.lo_frac < self.hi_frac <= 1.0):
            raise ValueError(
                f"need 0 <= lo_frac < hi_frac <= 1, got ({self.lo_frac}, {self.hi_frac})"
            )


def disk_element(radius: int) -> np.ndarray:
    """Boolean disk (L2 ball) structuring element of the given pixel radius."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (yy * yy + xx * xx) <= r * r


def build_trimap(annotations: AnnotationSet, dilation_radius: int = DEFAULT_DILATION_RADIUS) -> Trimap:
    """Trimap from annotator consensus plus disk dilation of the unknown set.

    A pixel is FOREGROUND (BACKGROUND) only if all annotators agree on 1 (0);
    the remaining disagreement pixels are UNKNOWN and get dilated, absorbing
    adjacent consensus pixels.
    """
    if dilation_radius < 0:
        raise ValueError("dilation_radius must be >= 0")
    stack = annotations.stacked()
    all_fg = stack.all(axis=0)
    all_bg = (~stack.astype(bool)).all(axis=0)
    unknown = ~(all_fg | all_bg)
    if dilation_radius > 0 and unknown.any():
        unknown = ndimage.binary_dilation(unknown, structure=disk_element(dilation_radius))
    labels = np.full(unknown.shape, int(TrimapLabel.BACKGROUND), dtype=np.uint8)
    labels[all_fg] = int(TrimapLabel.FOREGROUND)
    labels[unknown] = int(TrimapLabel.UNKNOWN)
    return Trimap(labels)


def _threshold_bounds(alpha_gt: AlphaMatte, lo_frac: float, hi_frac: float) -> tuple[float, float]:
    peak = float(alpha_gt.alpha.max())
    if peak <= 0.0:
        raise DegenerateInputError("alpha matte is all zero; threshold range collapses")
    return lo_frac * peak, hi_frac * peak


def threshold_mask(alpha_gt: AlphaMatte, tau: float) -> BinaryMask:
    """Level-set mask: 1 exactly where alpha_gt >= tau."""
    return BinaryMask((alpha_gt.alpha >= tau).astype(np.uint8))


def sample_pseudo_mask(
    alpha_gt: AlphaMatte,
    sampler: PseudoMaskSampler = PseudoMaskSampler(),
    rng: np.random.Generator | None = None,
) -> BinaryMask:
    """Threshold alpha_gt at a tau drawn uniformly from the sampler's range.

    With ``rng=None`` a fresh generator is seeded from ``sampler.rng_seed``,
    so repeated calls are deterministic; training loops pass a long-lived
    generator to get a fresh tau per example.
    """
    lo, hi = _threshold_bounds(alpha_gt, sampler.lo_frac, sampler.hi_frac)
    if rng is None:
        rng = np.random.default_rng(sampler.rng_seed)
    tau = rng.uniform(lo, hi)
    return threshold_mask(alpha_gt, tau)


def equispaced_masks(
    alpha_gt: AlphaMatte,
    count: int,
    lo_frac: float = DEFAULT_LO_FRAC,
    hi_frac: float = DEFAULT_HI_FRAC,
) -> list[BinaryMask]:
    """Level-set masks at `count` equidistant thresholds across the tau range.

    Masks are nested: a higher threshold's support is contained in a lower
    threshold's. count=1 uses the midpoint threshold.
    """
    if count < 1:
        raise ArityError(f"count must be >= 1, got {count}")
    lo, hi = _threshold_bounds(alpha_gt, lo_frac, hi_frac)
    if count == 1:
        taus = np.array([(lo + hi) / 2.0])
    else:
        taus = np.linspace(lo, hi, count)
    return [threshold_mask(alpha_gt, float(t)) for t in taus]


@dataclass(frozen=True)
class Histogram:
    """Normalized 64-bin intensity histogram over [0, 1] for one region."""

    density: np.ndarray
    pixel_count: int

    @property
    def empty(self) -> bool:
        return self.pixel_count == 0


@dataclass(frozen=True)
class RegionHistograms:
    foreground: Histogram
    background: Histogram
    unknown: Histogram


def _region_histogram(values: np.ndarray) -> Histogram:
    if values.size == 0:
        return Histogram(np.zeros(HISTOGRAM_BINS), 0)
    counts, _ = np.histogram(values, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    return Histogram(counts / values.size, int(values.size))


def intensity_distributions(image: Image, trimap: Trimap) -> RegionHistograms:
    """Per-region normalized intensity histograms (FG / BG / UNKNOWN).

    Color images use the channel-mean intensity. Empty regions are flagged
    via ``Histogram.empty`` and carry an all-zero density.
    """
    if trimap.shape != image.shape:
        raise ShapeError(f"trimap shape {trimap.shape} != image shape {image.shape}")
    gray = image.gray()
    return RegionHistograms(
        foreground=_region_histogram(gray[trimap.region(TrimapLabel.FOREGROUND)]),
        background=_region_histogram(gray[trimap.region(TrimapLabel.BACKGROUND)]),
        unknown=_region_histogram(gray[trimap.region(TrimapLabel.UNKNOWN)]),
    )
