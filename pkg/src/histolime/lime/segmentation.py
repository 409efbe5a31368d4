"""SLIC-style superpixels in (R, G, B, x, y).

Colors are rescaled to 0..100 so ``compactness`` has its usual SLIC meaning. The
distance between a pixel and a cluster center is

    D^2 = d_color^2 + (compactness / S)^2 * d_xy^2,   S = sqrt(pixels / target_k)

and each center only competes for pixels within ``S`` of it (per axis). Exactly
``target_k`` seeds are laid out row by row on a near-square grid. After the fixed
number of iterations every cluster keeps its largest 4-connected component; the
remaining fragments are merged, smallest first, into the largest neighbouring region.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..errors import SegmentationError

DEFAULT_SEGMENTS = 50
DEFAULT_COMPACTNESS = 10.0
ITERATIONS = 10


@dataclass(frozen=True, eq=False)
class SuperpixelMap:
    labels: np.ndarray  # (height, width) int32, ids 0..k-1

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def k(self):
        return int(self.labels.max()) + 1

    def sizes(self):
        return np.bincount(self.labels.ravel(), minlength=self.k)

    def permuted(self, perm):
        """Relabel so that old segment ``perm[i]`` becomes segment ``i``."""
        inverse = np.empty(len(perm), dtype=np.int32)
        inverse[np.asarray(perm)] = np.arange(len(perm), dtype=np.int32)
        return SuperpixelMap(inverse[self.labels])

    def __eq__(self, other):
        return isinstance(other, SuperpixelMap) and np.array_equal(self.labels, other.labels)


def seed_positions(height, width, k):
    """Pixel coordinates (row, col) of exactly ``k`` seeds."""
    rows = min(height, max(1, round(math.sqrt(k * height / width))))
    while -(-k // rows) > width:
        rows += 1
    per_row = [k // rows + (1 if r < k % rows else 0) for r in range(rows)]
    seeds = []
    for r, count in enumerate(per_row):
        y = int((r + 0.5) * height / rows)
        for i in range(count):
            seeds.append((y, int((i + 0.5) * width / count)))
    return seeds


def _slic_assign(features, height, width, centers, step, spatial_weight):
    """One assignment pass; ties go to the lower center index."""
    best = np.full((height, width), np.inf)
    labels = np.full((height, width), -1, dtype=np.int64)
    reach = int(math.ceil(step))
    colors = features[..., :3]
    for idx, c in enumerate(centers):
        cy, cx = c[3], c[4]
        y0, y1 = max(0, int(math.floor(cy)) - reach), min(height, int(math.floor(cy)) + reach + 1)
        x0, x1 = max(0, int(math.floor(cx)) - reach), min(width, int(math.floor(cx)) + reach + 1)
        window = colors[y0:y1, x0:x1]
        dc = ((window - c[:3]) ** 2).sum(axis=2)
        ys = (np.arange(y0, y1) - cy) ** 2
        xs = (np.arange(x0, x1) - cx) ** 2
        d = dc + spatial_weight * (ys[:, None] + xs[None, :])
        region = best[y0:y1, x0:x1]
        better = d < region
        region[better] = d[better]
        labels[y0:y1, x0:x1][better] = idx
    missing = labels < 0
    if missing.any():
        # pixels outside every window fall back to the globally nearest center
        pts = features[missing]
        diff = pts[:, None, :3] - centers[None, :, :3]
        dist = (diff ** 2).sum(axis=2) + spatial_weight * ((pts[:, None, 3:] - centers[None, :, 3:]) ** 2).sum(axis=2)
        labels[missing] = np.argmin(dist, axis=1)
    return labels


def _components(labels):
    """Label 4-connected runs of equal cluster id; returns (component map, count)."""
    h, w = labels.shape
    n = h * w
    idx = np.arange(n).reshape(h, w)
    flat = labels.ravel()
    right_a, right_b = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    down_a, down_b = idx[:-1, :].ravel(), idx[1:, :].ravel()
    a = np.concatenate([right_a, down_a])
    b = np.concatenate([right_b, down_b])
    keep = flat[a] == flat[b]
    graph = coo_matrix((np.ones(int(keep.sum()), dtype=np.int8), (a[keep], b[keep])), shape=(n, n))
    count, comp = connected_components(graph, directed=False)
    return comp.reshape(h, w), count


def _relabel_raster_order(labels):
    """Renumber ids 0..k-1 in order of first appearance in a raster scan."""
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    mapping = np.empty(int(uniq.max()) + 1, dtype=np.int32)
    mapping[uniq[np.argsort(first)]] = np.arange(len(uniq), dtype=np.int32)
    return mapping[labels]


def enforce_connectivity(clusters):
    """Keep each cluster's largest component; merge other fragments into neighbours."""
    h, w = clusters.shape
    comp, count = _components(clusters)
    flat_comp = comp.ravel()
    sizes = np.bincount(flat_comp, minlength=count)
    first_pixel = np.full(count, h * w, dtype=np.int64)
    np.minimum.at(first_pixel, flat_comp, np.arange(h * w))
    owner = clusters.ravel()[first_pixel]

    # primary component per cluster: largest, ties to the earliest in raster order
    order = np.lexsort((first_pixel, -sizes, owner))
    primary = np.zeros(count, dtype=bool)
    seen = set()
    for c in order:
        if owner[c] not in seen:
            seen.add(owner[c])
            primary[c] = True
    if not primary.any():
        raise SegmentationError("no segment survived connectivity enforcement")

    region = np.arange(count)
    if not primary.all():
        pairs = set()
        for a, b in ((comp[:, :-1], comp[:, 1:]), (comp[:-1, :], comp[1:, :])):
            diff = a != b
            for x, y in zip(a[diff].tolist(), b[diff].tolist()):
                pairs.add((x, y) if x < y else (y, x))
        neighbours = [set() for _ in range(count)]
        for x, y in pairs:
            neighbours[x].add(y)
            neighbours[y].add(x)

        def find(x):
            while region[x] != x:
                region[x] = region[region[x]]
                x = region[x]
            return x

        size = sizes.astype(np.int64).copy()
        orphans = sorted(np.flatnonzero(~primary).tolist(), key=lambda c: (sizes[c], first_pixel[c]))
        for c in orphans:
            root = find(c)
            candidates = {find(nb) for nb in neighbours[root]} - {root}
            if not candidates:
                continue  # only possible when the fragment is the whole image
            target = max(candidates, key=lambda r: (size[r], -first_pixel[r]))
            region[root] = target
            size[target] += size[root]
            neighbours[target] |= neighbours[root]
            first_pixel[target] = min(first_pixel[target], first_pixel[root])
        region = np.array([find(c) for c in range(count)])
    return _relabel_raster_order(region[comp])


def segment(img, target_k=DEFAULT_SEGMENTS, compactness=DEFAULT_COMPACTNESS, iterations=ITERATIONS):
    px = img.pixels if hasattr(img, "pixels") else np.asarray(img)
    h, w = px.shape[:2]
    if target_k < 1 or target_k > h * w:
        raise ValueError(f"target_k must lie in [1, {h * w}], got {target_k}")
    if compactness <= 0:
        raise ValueError("compactness must be positive")
    if target_k == 1:
        return SuperpixelMap(np.zeros((h, w), dtype=np.int32))

    yy, xx = np.mgrid[0:h, 0:w]
    features = np.concatenate(
        [px.astype(np.float64) * (100.0 / 255.0), yy[..., None].astype(np.float64), xx[..., None].astype(np.float64)],
        axis=2,
    )
    step = math.sqrt(h * w / target_k)
    spatial_weight = (compactness / step) ** 2
    centers = np.array([features[y, x] for y, x in seed_positions(h, w, target_k)])

    labels = None
    for _ in range(iterations):
        labels = _slic_assign(features, h, w, centers, step, spatial_weight)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=len(centers))
        sums = np.stack([np.bincount(flat, weights=features[..., j].ravel(), minlength=len(centers))
                         for j in range(5)], axis=1)
        alive = counts > 0
        centers[alive] = sums[alive] / counts[alive, None]
    return SuperpixelMap(enforce_connectivity(labels))
