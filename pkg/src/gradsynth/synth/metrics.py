"""Sample-quality metrics: a classifier-based diversity score and PSNR.

The diversity score is exp(mean_i KL(p(y|x_i) || p_bar)) computed with
natural log over the toolkit's own classifier predictions. Because the
scoring network is not an external reference model, values are
comparable only between runs of this toolkit, never with numbers
reported elsewhere.
"""

from __future__ import annotations

import math

import numpy as np

from gradsynth.autodiff import no_grad, ops
from gradsynth.errors import DataError, ShapeError


def predictive_distributions(model, images, batch_size=64):
    """Rows of softmax(logits) for a batch of images, (N,K) float64."""
    images = np.asarray(images, dtype=np.float32)
    out = []
    for i in range(0, len(images), batch_size):
        with no_grad():
            logits = model.logits(images[i : i + batch_size])
        out.append(ops.softmax(logits).data.astype(np.float64))
    return np.concatenate(out, axis=0)


def inception_style_score(probs):
    """exp(mean KL to the marginal); 1.0 for identical rows, K for a
    balanced one-hot mixture over K classes."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or len(p) == 0:
        raise ShapeError(f"need (N,K) probability rows, got {p.shape}")
    if p.min() < 0:
        raise DataError("negative probability entries")
    sums = p.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-5:
        raise DataError(f"rows must sum to 1 within 1e-5 (worst {np.abs(sums - 1.0).max():.2e})")
    marginal = p.mean(axis=0)
    # 0 * log 0 = 0 by continuity; marginal_j = 0 implies p_ij = 0 too
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(p > 0, np.log(p) - np.log(np.maximum(marginal, 1e-300)), 0.0)
    kl = (p * ratios).sum(axis=1)
    return float(np.exp(kl.mean()))


def psnr(a, b, max_value=1.0):
    """10*log10(max^2/MSE) in dB; identical inputs give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value * max_value / mse)
