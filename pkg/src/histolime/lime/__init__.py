from .explain import Explanation, LimeConfig, explain
from .perturb import apply_mask, apply_masks, baseline_image, proximity_weight, proximity_weights, sample_masks
from .render import render_overlay
from .segmentation import SuperpixelMap, segment
from .surrogate import PerturbationBatch, SurrogateFit, fit_surrogate

__all__ = [
    "Explanation", "LimeConfig", "PerturbationBatch", "SuperpixelMap", "SurrogateFit", "apply_mask", "apply_masks",
    "baseline_image", "explain", "fit_surrogate", "proximity_weight", "proximity_weights", "render_overlay",
    "sample_masks", "segment",
]
