"""Plain-array image transforms: resampling, corruption, augmentation.

These operate on ndarrays outside the autodiff graph. The differentiable
upsample used inside objectives lives in autodiff.ops.
"""

from __future__ import annotations

import numpy as np

from gradsynth.errors import DataError, ShapeError


def downsample(x, factor):
    """Block-mean downsample over the trailing two axes."""
    factor = int(factor)
    x = np.asarray(x)
    h, w = x.shape[-2], x.shape[-1]
    if factor < 1 or h % factor or w % factor:
        raise ShapeError(f"downsample: dims {(h, w)} not divisible by {factor}")
    if factor == 1:
        return x.copy()
    shape = x.shape[:-2] + (h // factor, factor, w // factor, factor)
    return x.reshape(shape).mean(axis=(-3, -1), dtype=x.dtype)


def upsample_nn(x, factor):
    """Nearest-neighbor upsample: every pixel becomes a factor^2 block."""
    factor = int(factor)
    if factor < 1:
        raise ShapeError(f"upsample_nn: bad factor {factor}")
    if factor == 1:
        return np.asarray(x).copy()
    return np.repeat(np.repeat(x, factor, axis=-2), factor, axis=-1)


def corrupt_patch(x, patch_size, rng):
    """Blank a random square with the image's per-channel mean.

    Returns (corrupted copy, binary (H,W) mask with 1 marking the patch).
    Pixels outside the patch are bit-identical to the input.
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"corrupt_patch: need (C,H,W), got {x.shape}")
    c, h, w = x.shape
    if patch_size > min(h, w) or patch_size < 1:
        raise DataError(f"patch {patch_size} does not fit {h}x{w}")
    top = int(rng.integers(0, h - patch_size + 1))
    left = int(rng.integers(0, w - patch_size + 1))
    out = x.copy()
    means = x.mean(axis=(1, 2), dtype=np.float64).astype(x.dtype)
    out[:, top : top + patch_size, left : left + patch_size] = means[:, None, None]
    mask = np.zeros((h, w), dtype=np.float32)
    mask[top : top + patch_size, left : left + patch_size] = 1.0
    return out, mask


def augment_batch(images, rng, pad=4):
    """Random crop (zero pad then crop back) plus horizontal flip."""
    images = np.asarray(images)
    n, c, h, w = images.shape
    padded = np.pad(images, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.empty_like(images)
    tops = rng.integers(0, 2 * pad + 1, size=n)
    lefts = rng.integers(0, 2 * pad + 1, size=n)
    flips = rng.random(n) < 0.5
    for i in range(n):
        crop = padded[i, :, tops[i] : tops[i] + h, lefts[i] : lefts[i] + w]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out
