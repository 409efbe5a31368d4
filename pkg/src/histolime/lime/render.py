"""Overlay rendering of explanations."""

import numpy as np

from ..errors import ShapeError
from ..imaging import Raster

DARKEN = 0.2
BOUNDARY_COLOR = (255, 255, 0)
POSITIVE_TINT = (0, 255, 0)
NEGATIVE_TINT = (255, 0, 0)
TINT_STRENGTH = 0.6


def boundary_pixels(keep):
    """Pixels of the kept set touching a non-kept pixel or the image border (4-neighbourhood)."""
    padded = np.pad(keep, 1, constant_values=False)
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return keep & ~interior


def render_overlay(img, explanation, top_k=None, mode="positive_only"):
    """Render an explanation over ``img``.

    ``positive_only`` keeps the ``top_k`` largest positively weighted segments in
    their original colors with a yellow outline and dims everything else to 20%.
    ``signed`` blends every segment toward green (positive) or red (negative) with
    strength ``0.6 * |w| / max|w|``.
    """
    sp = explanation.superpixels
    if (img.height, img.width) != (sp.height, sp.width):
        raise ShapeError("image does not match the explanation's superpixel map")
    weights = np.asarray(explanation.segment_weights, dtype=np.float64)
    top_k = explanation.config.top_k if top_k is None else top_k
    if top_k > len(weights):
        raise ValueError(f"top_k={top_k} exceeds the {len(weights)} segments")
    px = img.pixels

    if mode in ("positive_only", "positive"):
        positive = [j for j in np.argsort(-weights, kind="stable") if weights[j] > 0][:top_k]
        keep = np.isin(sp.labels, positive)
        out = np.floor(px.astype(np.float64) * DARKEN + 0.5).astype(np.uint8)
        out[keep] = px[keep]
        out[boundary_pixels(keep)] = BOUNDARY_COLOR
        return Raster(out)

    if mode != "signed":
        raise ValueError(f"unknown overlay mode {mode!r}")
    peak = np.abs(weights).max() if len(weights) else 0.0
    if peak == 0:
        return img
    alpha = (TINT_STRENGTH * np.abs(weights) / peak)[sp.labels][..., None]
    tint = np.where((weights >= 0)[sp.labels][..., None], np.array(POSITIVE_TINT), np.array(NEGATIVE_TINT))
    out = px.astype(np.float64) * (1 - alpha) + tint * alpha
    return Raster(np.floor(out + 0.5).astype(np.uint8))


def label_map_image(sp):
    """Segment ids as a grayscale raster (id scaled to 0..255) for debugging."""
    k = sp.k
    scale = 255.0 / max(k - 1, 1)
    gray = np.floor(sp.labels * scale + 0.5).astype(np.uint8)
    return Raster(np.repeat(gray[..., None], 3, axis=2))
