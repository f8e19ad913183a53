"""Joint spatial augmentation: flips, small rotations, elastic deformation.

One parameter draw is applied identically to the image, the alpha matte,
and every mask; continuous rasters interpolate bilinearly, masks use
nearest-neighbor so they stay binary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

DEFAULT_MAX_ANGLE = 15.0
DEFAULT_ELASTIC_SIGMA = 10.0
DEFAULT_ELASTIC_MAGNITUDE = 2.0


@dataclass(frozen=True)
class AugmentParams:
    flip_h: bool = False
    flip_v: bool = False
    angle_deg: float = 0.0
    shift_y: np.ndarray | None = None
    shift_x: np.ndarray | None = None

    @property
    def has_elastic(self) -> bool:
        return (
            self.shift_y is not None
            and self.shift_x is not None
            and (np.any(self.shift_y) or np.any(self.shift_x))
        )


def draw_params(
    shape: tuple[int, int],
    rng: np.random.Generator,
    max_angle: float = DEFAULT_MAX_ANGLE,
    elastic_sigma: float = DEFAULT_ELASTIC_SIGMA,
    elastic_magnitude: float = DEFAULT_ELASTIC_MAGNITUDE,
) -> AugmentParams:
    flip_h = bool(rng.random() < 0.5)
    flip_v = bool(rng.random() < 0.5)
    angle = float(rng.uniform(-max_angle, max_angle))
    shift_y = shift_x = None
    if elastic_magnitude > 0:
        fields = []
        for _ in range(2):
            raw = rng.uniform(-1.0, 1.0, size=shape)
            smooth = ndimage.gaussian_filter(raw, sigma=elastic_sigma)
            peak = np.abs(smooth).max()
            fields.append(
                np.zeros(shape) if peak == 0 else smooth / peak * elastic_magnitude
            )
        shift_y, shift_x = fields
    return AugmentParams(flip_h, flip_v, angle, shift_y, shift_x)


def _warp(arr: np.ndarray, params: AugmentParams, order: int) -> np.ndarray:
    out = arr
    if params.flip_h:
        out = np.flip(out, axis=1)
    if params.flip_v:
        out = np.flip(out, axis=0)
    if params.angle_deg != 0.0:
        out = ndimage.rotate(
            out, params.angle_deg, axes=(1, 0), reshape=False, order=order, mode="nearest"
        )
    if params.has_elastic:
        yy, xx = np.mgrid[0 : arr.shape[0], 0 : arr.shape[1]].astype(np.float64)
        coords = np.stack([yy + params.shift_y, xx + params.shift_x])
        if out.ndim == 3:
            out = np.stack(
                [
                    ndimage.map_coordinates(out[..., c], coords, order=order, mode="nearest")
                    for c in range(out.shape[2])
                ],
                axis=2,
            )
        else:
            out = ndimage.map_coordinates(out, coords, order=order, mode="nearest")
    return np.ascontiguousarray(out)


def apply_params(
    params: AugmentParams,
    image: np.ndarray,
    alpha: np.ndarray | None = None,
    masks: tuple[np.ndarray, ...] = (),
):
    """Apply one parameter draw jointly; rotation of multi-channel images
    warps each channel with the same grid."""
    if image.ndim == 3:
        warped_image = np.stack(
            [_warp(image[..., c], params, order=1) for c in range(image.shape[2])], axis=2
        )
    else:
        warped_image = _warp(image, params, order=1)
    warped_image = np.clip(warped_image, 0.0, 1.0)
    warped_alpha = None
    if alpha is not None:
        warped_alpha = np.clip(_warp(alpha, params, order=1), 0.0, 1.0)
    warped_masks = tuple(
        _warp(m.astype(np.float64), params, order=0).astype(np.uint8) for m in masks
    )
    return warped_image, warped_alpha, warped_masks


def augment(
    image: np.ndarray,
    alpha: np.ndarray | None,
    masks: tuple[np.ndarray, ...],
    rng: np.random.Generator,
    max_angle: float = DEFAULT_MAX_ANGLE,
    elastic_sigma: float = DEFAULT_ELASTIC_SIGMA,
    elastic_magnitude: float = DEFAULT_ELASTIC_MAGNITUDE,
):
    """Draw random parameters and apply them to the whole tuple."""
    params = draw_params(image.shape[:2], rng, max_angle, elastic_sigma, elastic_magnitude)
    return apply_params(params, image, alpha, masks)
