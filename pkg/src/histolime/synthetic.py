"""Synthetic tissue-like images for demos and tests.

None of this resembles real histopathology beyond color statistics: Normal tiles
are pale pink-lilac, OSCC tiles redder. Under the default toy classifier
(red channel, tau 0.5) most Normal tiles score below 0.5 and most OSCC tiles above.
"""

from pathlib import Path

import numpy as np

from .imaging import Raster, write_image

NORMAL_BASE = (112, 96, 150)
OSCC_BASE = (160, 80, 120)


def _blobs(rng, h, w, count):
    yy, xx = np.mgrid[0:h, 0:w]
    field = np.zeros((h, w))
    for _ in range(count):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        r = rng.uniform(3, max(4, min(h, w) / 6))
        field += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
    return field / max(field.max(), 1e-9)


def tissue_tile(rng, label, height=96, width=80, red_shift=0.0):
    """One smooth blob-textured tile; ``red_shift`` moves the mean red level."""
    base = np.array(OSCC_BASE if label == 1 else NORMAL_BASE, dtype=np.float64)
    base[0] += red_shift
    nuclei = _blobs(rng, height, width, int(rng.integers(6, 14)))
    px = base[None, None, :] - 60 * nuclei[..., None] * np.array([0.6, 0.9, 0.2])
    px += rng.normal(0, 4, size=(height, width, 3))
    return Raster(np.clip(np.floor(px + 0.5), 0, 255).astype(np.uint8))


def two_region_image(rng, side=64):
    """A non-red textured background with one red-dominant rectangle.

    Returns ``(raster, region_mask)`` where ``region_mask`` marks the red rectangle.
    """
    bg = rng.integers(20, 70, size=3).astype(np.float64)
    bg[int(rng.integers(1, 3))] += rng.uniform(60, 140)
    px = np.empty((side, side, 3))
    px[:] = bg
    px += rng.normal(0, 3, size=px.shape)
    rh, rw = (int(v) for v in rng.integers(side // 4, side // 2 + 1, size=2))
    top, left = int(rng.integers(0, side - rh + 1)), int(rng.integers(0, side - rw + 1))
    region = np.zeros((side, side), dtype=bool)
    region[top:top + rh, left:left + rw] = True
    red = np.array([rng.uniform(190, 240), rng.uniform(10, 50), rng.uniform(10, 50)])
    px[region] = red + rng.normal(0, 3, size=(int(region.sum()), 3))
    return Raster(np.clip(np.floor(px + 0.5), 0, 255).astype(np.uint8)), region


def make_corpus(root, per_class=20, seed=0, layout=("train", "test")):
    """Write ``per_class`` Normal and OSCC tiles under ``root`` and return the paths.

    Files alternate between the ``layout`` split parents; every fourth image is a
    JPEG. A few tiles per class are pushed toward the opposite class's red level
    so a toy classifier makes some mistakes.
    """
    rng = np.random.default_rng(seed)
    root = Path(root)
    written = []
    for label, name in ((0, "Normal"), (1, "OSCC")):
        for i in range(per_class):
            parent = layout[i % len(layout)] if layout else ""
            d = root / parent / name if parent else root / name
            d.mkdir(parents=True, exist_ok=True)
            shift = 0.0
            if i % 7 == 3:
                shift = 45.0 if label == 0 else -45.0
            img = tissue_tile(rng, label, red_shift=shift)
            ext = "jpg" if i % 4 == 3 else "png"
            path = d / f"{name.lower()}_{i:03d}.{ext}"
            write_image(img, path)
            written.append(path)
    return written
