"""Perturbation masks, proximity weights and masked-image synthesis."""

import numpy as np

from ..errors import ShapeError
from ..prng import SplitMix64


def sample_masks(k, n, seed):
    """``n`` x ``k`` binary matrix; row 0 is all ones, the rest are fair coin flips.

    Entry ``(r, j)`` for ``r >= 1`` is bit ``(r - 1) * k + j`` of the splitmix64
    stream for ``seed``, bits taken least-significant first from each output.
    """
    if k < 1 or n < 2:
        raise ValueError("need k >= 1 and n >= 2")
    masks = np.ones((n, k), dtype=np.uint8)
    masks[1:] = SplitMix64(seed).bits((n - 1) * k).reshape(n - 1, k)
    return masks


def cosine_distance(masks):
    """Cosine distance of each mask row to the all-ones vector: 1 - sqrt(sum(m) / k)."""
    masks = np.atleast_2d(np.asarray(masks, dtype=np.float64))
    return 1.0 - np.sqrt(masks.sum(axis=1) / masks.shape[1])


def proximity_weights(masks, kernel_width):
    if kernel_width <= 0:
        raise ValueError("kernel_width must be positive")
    d = cosine_distance(masks)
    return np.exp(-(d * d) / (kernel_width * kernel_width))


def proximity_weight(mask, kernel_width):
    return float(proximity_weights(np.asarray(mask)[None, :], kernel_width)[0])


def segment_means(img, sp):
    """Per-segment mean color, rounded half-up to uint8; shape (k, 3)."""
    px = img.pixels.reshape(-1, 3).astype(np.float64)
    flat = sp.labels.ravel()
    counts = np.bincount(flat, minlength=sp.k)
    sums = np.stack([np.bincount(flat, weights=px[:, c], minlength=sp.k) for c in range(3)], axis=1)
    return np.floor(sums / counts[:, None] + 0.5).astype(np.uint8)


def baseline_image(img, sp, baseline="segment_mean"):
    """The fully-masked image: each segment's mean color, or one fixed RGB color."""
    if isinstance(baseline, str):
        if baseline != "segment_mean":
            raise ValueError(f"unknown baseline {baseline!r}")
        return segment_means(img, sp)[sp.labels]
    color = np.asarray(baseline, dtype=np.int64)
    if color.shape != (3,) or color.min() < 0 or color.max() > 255:
        raise ValueError(f"fixed baseline must be an RGB triple, got {baseline!r}")
    out = np.empty_like(img.pixels)
    out[:] = color.astype(np.uint8)
    return out


def _check_shapes(img, sp, k):
    if (img.height, img.width) != (sp.height, sp.width):
        raise ShapeError(f"image {img.width}x{img.height} does not match superpixel map {sp.width}x{sp.height}")
    if k != sp.k:
        raise ShapeError(f"mask length {k} does not match {sp.k} segments")


def apply_masks(img, masks, sp, fill):
    """Batch of masked images ``(n, H, W, 3)``; ``fill`` is a precomputed baseline image."""
    masks = np.asarray(masks)
    _check_shapes(img, sp, masks.shape[1])
    # uint8 arithmetic wraps mod 256, so fill + 1 * (img - fill) == img exactly
    labels3 = np.repeat(sp.labels[..., None], 3, axis=2)
    diff = img.pixels - fill
    keep = (masks != 0).astype(np.uint8)[:, labels3]
    return fill + keep * diff


def apply_mask(img, mask, sp, baseline="segment_mean"):
    from ..imaging import Raster

    mask = np.asarray(mask)
    _check_shapes(img, sp, mask.shape[0])
    if mask.all():
        return img
    return Raster(apply_masks(img, mask[None, :], sp, baseline_image(img, sp, baseline))[0])
