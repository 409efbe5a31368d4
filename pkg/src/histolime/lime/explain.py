"""End-to-end LIME explanation of one image."""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .perturb import apply_masks, baseline_image, proximity_weights, sample_masks
from .segmentation import DEFAULT_COMPACTNESS, DEFAULT_SEGMENTS, SuperpixelMap, segment
from .surrogate import PerturbationBatch, fit_surrogate

BATCH_SIZE = 64


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 5000
    kernel_width: float = 0.25
    ridge_lambda: float = 1.0
    top_k: int = 5
    baseline: object = "segment_mean"  # or an (r, g, b) tuple
    seed: int = 0
    target_class: object = "predicted"  # or a class index
    n_segments: int = DEFAULT_SEGMENTS
    compactness: float = DEFAULT_COMPACTNESS

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.kernel_width <= 0:
            raise ValueError("kernel_width must be positive")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be non-negative")
        if self.n_segments < 1:
            raise ValueError("n_segments must be >= 1")
        if not isinstance(self.baseline, str):
            object.__setattr__(self, "baseline", tuple(int(v) for v in self.baseline))
        elif self.baseline != "segment_mean":
            raise ValueError(f"unknown baseline {self.baseline!r}")
        if self.target_class != "predicted" and self.target_class not in (0, 1):
            raise ValueError("target_class must be 'predicted' or a class index")

    def to_dict(self):
        d = asdict(self)
        d["baseline"] = self.baseline if isinstance(self.baseline, str) else list(self.baseline)
        return d

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass(frozen=True, eq=False)
class Explanation:
    segment_weights: np.ndarray
    intercept: float
    local_r2: float
    target_class: int
    config: LimeConfig
    superpixels: SuperpixelMap
    batch: PerturbationBatch = None
    model: str = ""
    image_id: str = ""

    @property
    def k(self):
        return len(self.segment_weights)

    def top_segments(self, top_k=None):
        """Segment ids ordered by |weight| descending (ties: lower id first)."""
        top_k = top_k or self.config.top_k
        order = sorted(range(self.k), key=lambda j: (-abs(self.segment_weights[j]), j))
        return order[:top_k]

    def to_dict(self):
        return {
            "model": self.model,
            "image_id": self.image_id,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "target_class": self.target_class,
            "k": self.k,
            "segment_weights": [float(v) for v in self.segment_weights],
            "intercept": float(self.intercept),
            "local_r2": float(self.local_r2),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _predict_rows(classifier, img, masks, sp, fill, workers):
    starts = list(range(0, len(masks), BATCH_SIZE))

    def run(start):
        block = apply_masks(img, masks[start:start + BATCH_SIZE], sp, fill)
        return classifier.predict_array(block)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return np.concatenate(parts, axis=0)


def explain(classifier, img, cfg=LimeConfig(), superpixels=None, workers=1, image_id=""):
    """Explain ``classifier``'s prediction on ``img`` (already at model input size).

    Masks are evaluated in ascending row order in blocks of 64; with ``workers > 1``
    blocks run concurrently but are reassembled by row index, so the result does not
    depend on the worker count.
    """
    sp = superpixels if superpixels is not None else segment(img, cfg.n_segments, cfg.compactness)
    masks = sample_masks(sp.k, cfg.n_samples, cfg.seed)
    fill = baseline_image(img, sp, cfg.baseline)
    probs = _predict_rows(classifier, img, masks, sp, fill, workers)

    if cfg.target_class == "predicted":
        # row 0 is the unperturbed image; ties resolve to Normal
        target = int(probs[0, 1] > probs[0, 0])
    else:
        target = int(cfg.target_class)
    batch = PerturbationBatch(masks=masks, weights=proximity_weights(masks, cfg.kernel_width),
                              responses=probs[:, target])
    fit = fit_surrogate(batch, cfg.ridge_lambda)
    return Explanation(segment_weights=fit.segment_weights, intercept=fit.intercept, local_r2=fit.local_r2,
                       target_class=target, config=cfg, superpixels=sp, batch=batch,
                       model=getattr(classifier, "name", ""), image_id=image_id)
