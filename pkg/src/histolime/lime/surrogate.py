"""Weighted ridge surrogate with an unpenalized intercept.

Minimizes  sum_i w_i (y_i - b0 - x_i . beta)^2 + lam * |beta|^2.

Centering ``X`` and ``y`` on their weighted means removes the intercept from the
penalized problem, leaving the k x k symmetric system

    (Xc' W Xc + lam I) beta = Xc' W yc,    b0 = ybar - xbar . beta

solved directly (no iteration). A constant response therefore yields beta = 0
exactly and b0 = that constant.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import SingularSystem


@dataclass(frozen=True, eq=False)
class PerturbationBatch:
    masks: np.ndarray  # (n, k) binary; row 0 all ones
    weights: np.ndarray  # (n,), in (0, 1]
    responses: np.ndarray  # (n,)

    def __post_init__(self):
        masks = np.asarray(self.masks)
        weights = np.asarray(self.weights, dtype=np.float64)
        responses = np.asarray(self.responses, dtype=np.float64)
        if masks.ndim != 2 or weights.shape != (masks.shape[0],) or responses.shape != (masks.shape[0],):
            raise ValueError("masks (n, k), weights (n,) and responses (n,) must agree")
        if np.any(weights <= 0):
            raise ValueError("proximity weights must be strictly positive")
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "responses", responses)


@dataclass(frozen=True)
class SurrogateFit:
    segment_weights: np.ndarray
    intercept: float
    local_r2: float

    def predict(self, masks):
        return self.intercept + np.asarray(masks, dtype=np.float64) @ self.segment_weights


def fit_surrogate(batch, lam=1.0):
    if lam < 0:
        raise ValueError("ridge lambda must be non-negative")
    X = batch.masks.astype(np.float64)
    y = batch.responses
    w = batch.weights
    wsum = w.sum()
    xbar = w @ X / wsum
    # a constant response has an exact mean; the weighted average can miss it by an ulp
    ybar = y[0] if np.all(y == y[0]) else w @ y / wsum
    Xc = X - xbar
    yc = y - ybar
    k = X.shape[1]

    if not np.any(yc):
        beta = np.zeros(k)
    else:
        A = (Xc * w[:, None]).T @ Xc
        A[np.diag_indices(k)] += lam
        rhs = Xc.T @ (w * yc)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                beta = scipy.linalg.solve(A, rhs, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise SingularSystem(f"surrogate normal equations are singular (lambda={lam}): {exc}") from exc
    intercept = float(ybar - xbar @ beta)

    resid = y - intercept - X @ beta
    rss = float(w @ (resid * resid))
    tss = float(w @ (yc * yc))
    r2 = 1.0 if tss == 0.0 else min(1.0, max(0.0, 1.0 - rss / tss))
    return SurrogateFit(segment_weights=beta, intercept=intercept, local_r2=r2)
