"""Pixel-wise uncertainty score maps and the predicted segmentation.

All scores are oriented so that larger means more uncertain and live in
[0, 1] for every valid probability map:

* ``entropy_map``  -- Shannon entropy normalized by ln C
* ``margin_map``   -- 1 - (largest - second largest probability)
* ``maxprob_map``  -- 1 - largest probability
* ``argmax_map``   -- predicted class per pixel (smallest index wins ties)

The [0, 1] normalization makes detection thresholds comparable across
datasets with different class counts.
"""

from __future__ import annotations

import numpy as np

from .errors import SchemaError, ValidationError

__all__ = ["entropy_map", "margin_map", "maxprob_map", "argmax_map"]


def _check_prob_shape(p: np.ndarray) -> np.ndarray:
    if p.ndim != 3:
        raise SchemaError(f"probability map must be rank 3, got rank {p.ndim}")
    if p.shape[2] < 2:
        raise ValidationError(f"probability map needs C >= 2 classes, got {p.shape[2]}")
    if not np.issubdtype(p.dtype, np.floating):
        raise SchemaError(f"probability map must be floating point, got {p.dtype}")
    return p


def _finish(score: np.ndarray) -> np.ndarray:
    # Clip pure float roundoff (at most a few ulp past the interval ends);
    # genuine range violations are caught by input validation, never here.
    np.clip(score, 0.0, 1.0, out=score)
    return score.astype(np.float32, copy=False)


def entropy_map(p: np.ndarray) -> np.ndarray:
    """Normalized Shannon entropy per pixel: ``-(1/ln C) sum_c p_c ln p_c``.

    The 0 * ln 0 terms are defined as 0, so one-hot pixels score exactly 0.0
    and uniform pixels exactly 1.0. Computation stays in the input precision
    (float32 maps are processed without an intermediate float64 copy, which
    keeps multi-megapixel maps fast).
    """
    p = _check_prob_shape(np.asarray(p))
    logs = np.log(p, out=np.zeros_like(p), where=p > 0)
    plogp = np.einsum("hwc,hwc->hw", p, logs)
    score = plogp * np.asarray(-1.0 / np.log(p.shape[2]), dtype=p.dtype)
    return _finish(score)


def margin_map(p: np.ndarray) -> np.ndarray:
    """Margin uncertainty per pixel: ``1 - (p_(1) - p_(2))``.

    ``p_(1)`` and ``p_(2)`` are the largest and second-largest probabilities;
    one-hot pixels score 0.0, pixels with a tied top pair score 1.0.
    """
    p = _check_prob_shape(np.asarray(p))
    c = p.shape[2]
    part = np.partition(p, c - 2, axis=2)
    score = 1.0 - (part[:, :, c - 1] - part[:, :, c - 2])
    return _finish(np.asarray(score, dtype=p.dtype))


def maxprob_map(p: np.ndarray) -> np.ndarray:
    """Max-probability uncertainty per pixel: ``1 - max_c p_c``."""
    p = _check_prob_shape(np.asarray(p))
    score = 1.0 - p.max(axis=2)
    return _finish(np.asarray(score, dtype=p.dtype))


def argmax_map(p: np.ndarray) -> np.ndarray:
    """Predicted class per pixel: smallest class index attaining the maximum.

    The tie-break is deterministic so repeated runs yield identical masks
    (and hence identical mIoU).
    """
    p = _check_prob_shape(np.asarray(p))
    return p.argmax(axis=2).astype(np.int32)
