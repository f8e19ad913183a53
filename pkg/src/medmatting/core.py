"""Core data types, 8-bit raster I/O, and the alpha-entropy primitive.

Conventions used across the package:

* images, alpha mattes, and masks are numpy arrays with spatial shape
  ``(H, W)`` (plus a trailing channel axis for color images), intensities
  normalized to ``[0, 1]``;
* entropies are in nats (natural log);
* trimap rasters encode background/unknown/foreground as 0/128/255.

All functions here are pure and safe to call from concurrent workers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as _PILImage

LN2 = float(np.log(2.0))

MIN_SIDE = 8

# raster byte values for trimap PNGs
TRIMAP_RASTER = {"background": 0, "unknown": 128, "foreground": 255}


class ShapeError(ValueError):
    """Spatial shapes of related arrays do not match."""


class DomainError(ValueError):
    """A value lies outside its mathematically valid domain."""


class ArityError(ValueError):
    """Wrong number of elements (masks, samples, thresholds...)."""


class DegenerateInputError(ValueError):
    """Input is valid in shape but degenerate (all-zero matte, empty region)."""


class FormatError(RuntimeError):
    """Unsupported raster or archive format."""


class StateError(RuntimeError):
    """Operation requires state (e.g. initialized weights) that is missing."""


class TrimapLabel(enum.IntEnum):
    BACKGROUND = 0
    UNKNOWN = 1
    FOREGROUND = 2


def _as_float2d(arr, name: str) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2D, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Image:
    """A grayscale or RGB image with intensities normalized to [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim == 2:
            pass
        elif p.ndim == 3 and p.shape[2] == 3:
            pass
        else:
            raise ShapeError(f"image must be (H, W) or (H, W, 3), got {p.shape}")
        if p.shape[0] < MIN_SIDE or p.shape[1] < MIN_SIDE:
            raise ShapeError(f"image sides must be >= {MIN_SIDE}, got {p.shape[:2]}")
        if not np.isfinite(p).all() or p.min() < 0.0 or p.max() > 1.0:
            raise DomainError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", p.astype(np.float64, copy=False))

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    def gray(self) -> np.ndarray:
        """Channel-mean intensity, shape (H, W)."""
        return self.pixels if self.channels == 1 else self.pixels.mean(axis=2)


@dataclass(frozen=True)
class AlphaMatte:
    """Per-pixel continuous opacity in [0, 1]."""

    alpha: np.ndarray

    def __post_init__(self):
        a = _as_float2d(self.alpha, "alpha")
        if not np.isfinite(a).all() or a.min() < 0.0 or a.max() > 1.0:
            raise DomainError("alpha values must lie in [0, 1]")
        object.__setattr__(self, "alpha", a)

    @property
    def shape(self) -> tuple[int, int]:
        return self.alpha.shape


@dataclass(frozen=True)
class BinaryMask:
    """Strictly binary 2D mask."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2:
            raise ShapeError(f"mask must be 2D, got shape {m.shape}")
        vals = np.unique(m)
        if not np.isin(vals, (0, 1)).all():
            raise DomainError(f"mask must be binary, found values {vals[:8]}")
        object.__setattr__(self, "mask", m.astype(np.uint8))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape


@dataclass(frozen=True)
class Trimap:
    """Three-valued label map (BACKGROUND / UNKNOWN / FOREGROUND)."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ShapeError(f"trimap must be 2D, got shape {lab.shape}")
        vals = np.unique(lab)
        allowed = [int(v) for v in TrimapLabel]
        if not np.isin(vals, allowed).all():
            raise DomainError(f"trimap labels must be in {allowed}, found {vals[:8]}")
        object.__setattr__(self, "labels", lab.astype(np.uint8))

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def region(self, label: TrimapLabel) -> np.ndarray:
        return self.labels == int(label)


@dataclass(frozen=True)
class UncertaintyField:
    """Per-pixel binary entropy in nats; bounded by ln 2."""

    values: np.ndarray

    def __post_init__(self):
        v = _as_float2d(self.values, "uncertainty")
        if not np.isfinite(v).all() or v.min() < 0.0 or v.max() > LN2 + 1e-9:
            raise DomainError("binary entropies must lie in [0, ln 2]")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def alpha_entropy(alpha) -> UncertaintyField:
    """Per-pixel entropy ``-a*ln(a) - (1-a)*ln(1-a)`` of an alpha matte.

    Uses the continuity convention ``0*ln(0) = 0`` so that the entropy is
    exactly zero where alpha is exactly 0 or 1.
    """
    a = alpha.alpha if isinstance(alpha, AlphaMatte) else _as_float2d(alpha, "alpha")
    if a.min() < 0.0 or a.max() > 1.0:
        raise DomainError("alpha values must lie in [0, 1]")
    out = np.zeros_like(a)
    interior = (a > 0.0) & (a < 1.0)
    ai = a[interior]
    out[interior] = -ai * np.log(ai) - (1.0 - ai) * np.log1p(-ai)
    np.clip(out, 0.0, LN2, out=out)
    return UncertaintyField(out)


# ---------------------------------------------------------------------------
# 8-bit raster I/O
# ---------------------------------------------------------------------------


def _open_8bit(path) -> _PILImage.Image:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such image file: {path}")
    img = _PILImage.open(path)
    if img.mode not in ("L", "RGB"):
        raise FormatError(
            f"unsupported raster mode {img.mode!r} in {path} (need 8-bit L or RGB)"
        )
    return img


def load_image(path) -> Image:
    """Load an 8-bit grayscale or RGB raster, scaled by 1/255 into [0, 1]."""
    arr = np.asarray(_open_8bit(path), dtype=np.float64) / 255.0
    return Image(arr)


def save_image(path, image: Image) -> None:
    arr = np.rint(image.pixels * 255.0).astype(np.uint8)
    _PILImage.fromarray(arr).save(Path(path))


def load_alpha(path) -> AlphaMatte:
    """Load an alpha matte stored as an 8-bit grayscale raster (value/255)."""
    img = _open_8bit(path)
    if img.mode != "L":
        raise FormatError(f"alpha matte raster must be grayscale, got {img.mode!r}")
    return AlphaMatte(np.asarray(img, dtype=np.float64) / 255.0)


def save_alpha(path, alpha: AlphaMatte) -> None:
    arr = np.rint(alpha.alpha * 255.0).astype(np.uint8)
    _PILImage.fromarray(arr, mode="L").save(Path(path))


def load_mask(path) -> BinaryMask:
    """Load a 0/255 grayscale raster as a binary mask (threshold at 128)."""
    img = _open_8bit(path)
    if img.mode != "L":
        raise FormatError(f"mask raster must be grayscale, got {img.mode!r}")
    return BinaryMask((np.asarray(img) >= 128).astype(np.uint8))


def save_mask(path, mask: BinaryMask) -> None:
    arr = (mask.mask * 255).astype(np.uint8)
    _PILImage.fromarray(arr, mode="L").save(Path(path))


def load_trimap(path) -> Trimap:
    img = _open_8bit(path)
    if img.mode != "L":
        raise FormatError(f"trimap raster must be grayscale, got {img.mode!r}")
    arr = np.asarray(img)
    labels = np.full(arr.shape, 255, dtype=np.uint8)
    labels[arr == TRIMAP_RASTER["background"]] = int(TrimapLabel.BACKGROUND)
    labels[arr == TRIMAP_RASTER["unknown"]] = int(TrimapLabel.UNKNOWN)
    labels[arr == TRIMAP_RASTER["foreground"]] = int(TrimapLabel.FOREGROUND)
    if (labels == 255).any():
        bad = np.unique(arr[labels == 255])
        raise FormatError(f"trimap raster contains non-{{0,128,255}} values {bad[:8]}")
    return Trimap(labels)


def save_trimap(path, trimap: Trimap) -> None:
    arr = np.zeros(trimap.labels.shape, dtype=np.uint8)
    arr[trimap.labels == int(TrimapLabel.UNKNOWN)] = TRIMAP_RASTER["unknown"]
    arr[trimap.labels == int(TrimapLabel.FOREGROUND)] = TRIMAP_RASTER["foreground"]
    _PILImage.fromarray(arr, mode="L").save(Path(path))


def save_uncertainty(path, values: np.ndarray, max_value: float = LN2) -> None:
    """Save an entropy map rescaled from [0, max_value] to an 8-bit raster."""
    v = _as_float2d(values, "uncertainty")
    arr = np.rint(np.clip(v / max_value, 0.0, 1.0) * 255.0).astype(np.uint8)
    _PILImage.fromarray(arr, mode="L").save(Path(path))
