"""Differentiable operations.

The op set is exactly what the classifier and the synthesis objectives
need: conv2d (stride/padding), linear, relu, elementwise add/sub/mul,
residual add, average/max pooling, nearest-neighbor upsample, batch norm
(training and inference mode), softmax cross-entropy, L2 norms and the
masked consistency penalty, plus shape plumbing (reshape, sum, mean,
pick). Shape mismatches raise ShapeError; implicit broadcasting is
limited to scalar*tensor and bias-add, which keeps the op set auditable.

conv2d and max-pool route through the selected kernel backend; everything
else is plain NumPy.
"""

from __future__ import annotations

import numpy as np

from gradsynth import _kernels as K
from gradsynth.errors import ShapeError

from .tensor import Tensor, record


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _out(data, parents, bwd):
    t = Tensor(data)
    return record(t, parents, bwd)


def _same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "add")
    return _out(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "sub")
    return _out(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "mul")

    def bwd(g):
        ga = g * b.data if a.requires_grad else None
        gb = g * a.data if b.requires_grad else None
        return ga, gb

    return _out(a.data * b.data, (a, b), bwd)


def scale(x, c):
    """Multiply by a python scalar (the one allowed broadcast)."""
    x = _as_tensor(x)
    c = float(c)
    return _out(x.data * np.asarray(c, dtype=x.dtype), (x,), lambda g: (g * c,))


def neg(x):
    x = _as_tensor(x)
    return _out(-x.data, (x,), lambda g: (-g,))


def relu(x):
    x = _as_tensor(x)
    mask = x.data > 0
    return _out(np.where(mask, x.data, 0), (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions and shape


def sum_all(x):
    x = _as_tensor(x)
    return _out(x.data.sum(dtype=x.dtype).reshape(()), (x,), lambda g: (np.broadcast_to(g, x.shape).astype(x.dtype),))


def mean_all(x):
    x = _as_tensor(x)
    n = x.size
    return _out(
        (x.data.sum(dtype=x.dtype) / x.dtype.type(n)).reshape(()),
        (x,),
        lambda g: ((np.broadcast_to(g, x.shape) / x.dtype.type(n)).astype(x.dtype),),
    )


def reshape(x, shape):
    x = _as_tensor(x)
    shape = tuple(int(s) for s in shape)
    known = int(np.prod([s for s in shape if s != -1])) if shape else 1
    if shape.count(-1) > 1 or (shape.count(-1) == 0 and known != x.size) or (
        shape.count(-1) == 1 and (known == 0 or x.size % known)
    ):
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    old = x.shape
    return _out(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def pick(x, idx):
    """Select one column per row: out[n] = x[n, idx[n]]."""
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    if x.data.ndim != 2 or idx.shape != (x.shape[0],):
        raise ShapeError(f"pick: need (N,K) and (N,), got {x.shape} and {idx.shape}")
    rows = np.arange(x.shape[0])

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[rows, idx] = g
        return (gx,)

    return _out(x.data[rows, idx], (x,), bwd)


# ---------------------------------------------------------------------------
# norms


def l2_norm(x):
    """Global L2 norm as a scalar; gradient is x/|x| (0 at the origin)."""
    x = _as_tensor(x)
    val = np.sqrt(np.sum(x.data.astype(x.dtype) ** 2, dtype=x.dtype)).reshape(())

    def bwd(g):
        n = float(val)
        if n == 0.0:
            return (np.zeros_like(x.data),)
        return ((g * x.data / x.dtype.type(n)).astype(x.dtype),)

    return _out(val, (x,), bwd)


def per_sample_l2(x):
    """L2 norm over all non-batch axes: (N, ...) -> (N,)."""
    x = _as_tensor(x)
    if x.data.ndim < 2:
        raise ShapeError(f"per_sample_l2: need a batch dimension, got {x.shape}")
    flat = x.data.reshape(x.shape[0], -1)
    norms = np.sqrt(np.sum(flat**2, axis=1, dtype=x.dtype))

    def bwd(g):
        safe = np.where(norms == 0, 1, norms)
        gx = (g / safe)[:, None] * flat
        gx[norms == 0] = 0
        return (gx.reshape(x.shape).astype(x.dtype),)

    return _out(norms, (x,), bwd)


def masked_l2(x, reference, keep):
    """Per-sample masked consistency penalty ||(reference - x) * keep||_2.

    ``reference`` and ``keep`` are constants of the same shape as one
    sample (or the full batch); ``keep`` is 1 where deviation is
    penalized, 0 where editing is free.
    """
    x = _as_tensor(x)
    ref = np.asarray(reference, dtype=x.dtype)
    keepm = np.asarray(keep, dtype=x.dtype)
    if ref.shape not in (x.shape, x.shape[1:]):
        raise ShapeError(f"masked_l2: reference {ref.shape} does not match {x.shape}")
    try:
        ref_full = np.broadcast_to(ref, x.shape).copy()
        keep_full = np.broadcast_to(keepm, x.shape).copy()
    except ValueError:
        raise ShapeError(f"masked_l2: mask {keepm.shape} does not broadcast to {x.shape}") from None
    diff = mul(sub(Tensor(ref_full), x), Tensor(keep_full))
    return per_sample_l2(diff)


# ---------------------------------------------------------------------------
# dense / conv layers


def linear(x, w, b=None):
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear: incompatible shapes {x.shape} @ {w.shape}")
    y = x.data @ w.data

    def bwd(g):
        gx = g @ w.data.T if x.requires_grad else None
        gw = x.data.T @ g if w.requires_grad else None
        return gx, gw

    out = _out(y, (x, w), bwd)
    if b is not None:
        out = bias_add(out, b)
    return out


def bias_add(x, b):
    """Add a per-channel bias: (N,K)+(K,) or (N,C,H,W)+(C,)."""
    x, b = _as_tensor(x), _as_tensor(b)
    if x.data.ndim == 2 and b.shape == (x.shape[1],):
        y = x.data + b.data
        axes = (0,)
    elif x.data.ndim == 4 and b.shape == (x.shape[1],):
        y = x.data + b.data[None, :, None, None]
        axes = (0, 2, 3)
    else:
        raise ShapeError(f"bias_add: bias {b.shape} does not fit {x.shape}")
    return _out(y, (x, b), lambda g: (g, g.sum(axis=axes)))


def conv2d(x, w, b=None, stride=1, pad=0):
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: incompatible shapes {x.shape}, {w.shape}")
    if x.shape[2] + 2 * pad < w.shape[2] or x.shape[3] + 2 * pad < w.shape[3]:
        raise ShapeError(f"conv2d: kernel {w.shape} larger than padded input {x.shape}")
    if x.dtype != w.dtype:
        raise ShapeError(f"conv2d: dtype mismatch {x.dtype} vs {w.dtype}")
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(w.data)
    y = K.conv2d_forward(xd, wd, stride, pad)

    def bwd(g):
        g = np.ascontiguousarray(g)
        gx = K.conv2d_backward_input(g, wd, xd.shape, stride, pad) if x.requires_grad else None
        gw = K.conv2d_backward_weight(g, xd, wd.shape, stride, pad) if w.requires_grad else None
        return gx, gw

    out = _out(y, (x, w), bwd)
    if b is not None:
        out = bias_add(out, b)
    return out


# ---------------------------------------------------------------------------
# pooling and resampling


def maxpool2d(x, k, stride=None):
    """Max pooling; ties broken by the first window index (row-major)."""
    x = _as_tensor(x)
    stride = stride or k
    if x.data.ndim != 4 or x.shape[2] < k or x.shape[3] < k:
        raise ShapeError(f"maxpool2d: window {k} does not fit {x.shape}")
    xd = np.ascontiguousarray(x.data)
    y, arg = K.maxpool2d_forward(xd, k, stride)

    def bwd(g):
        return (K.maxpool2d_backward(np.ascontiguousarray(g), arg, xd.shape, k, stride),)

    return _out(y, (x,), bwd)


def avgpool2d(x, k):
    """Non-overlapping k x k mean pooling; dims must divide by k."""
    x = _as_tensor(x)
    if x.data.ndim != 4 or x.shape[2] % k or x.shape[3] % k:
        raise ShapeError(f"avgpool2d: dims of {x.shape} not divisible by {k}")
    n, c, h, w = x.shape
    y = x.data.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5), dtype=x.dtype)
    inv = x.dtype.type(1.0 / (k * k))

    def bwd(g):
        g = (g * inv)[:, :, :, None, :, None]
        return (np.broadcast_to(g, (n, c, h // k, k, w // k, k)).reshape(n, c, h, w).astype(x.dtype),)

    return _out(y, (x,), bwd)


def mean_hw(x):
    """Spatial mean: (N,C,H,W) -> (N,C). The global average pool."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeError(f"mean_hw: need NCHW, got {x.shape}")
    n, c, h, w = x.shape
    inv = x.dtype.type(1.0 / (h * w))

    def bwd(g):
        return (np.broadcast_to((g * inv)[:, :, None, None], x.shape).astype(x.dtype),)

    return _out(x.data.mean(axis=(2, 3), dtype=x.dtype), (x,), bwd)


def upsample_nn(x, factor):
    """Nearest-neighbor upsampling: each pixel becomes a factor x factor block."""
    x = _as_tensor(x)
    factor = int(factor)
    if factor < 1 or x.data.ndim != 4:
        raise ShapeError(f"upsample_nn: bad factor {factor} or shape {x.shape}")
    if factor == 1:
        return _out(x.data.copy(), (x,), lambda g: (g,))
    n, c, h, w = x.shape
    y = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def bwd(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)).astype(x.dtype),)

    return _out(y, (x,), bwd)


# ---------------------------------------------------------------------------
# batch norm


def batchnorm2d(x, gamma, beta, running_mean, running_var, eps=1e-5, training=False, momentum=0.1):
    """Channelwise batch normalization.

    Inference mode normalizes with the frozen running statistics, making
    the layer a fixed affine function of its input (this is the only mode
    used during synthesis). Training mode uses batch statistics and
    updates ``running_mean``/``running_var`` in place.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.data.ndim != 4 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"batchnorm2d: shapes {x.shape}, {gamma.shape}, {beta.shape}")
    c = x.shape[1]
    dt = x.dtype.type

    if training:
        axes = (0, 2, 3)
        m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
        mu = x.data.mean(axis=axes, dtype=x.dtype)
        var = x.data.var(axis=axes, dtype=x.dtype)
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * var
        inv_std = dt(1) / np.sqrt(var + dt(eps))
        xhat = (x.data - mu[None, :, None, None]) * inv_std[None, :, None, None]
        y = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

        def bwd(g):
            ggamma = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
            gbeta = g.sum(axis=axes) if beta.requires_grad else None
            gx = None
            if x.requires_grad:
                sum_g = g.sum(axis=axes)
                sum_gx = (g * xhat).sum(axis=axes)
                gx = (gamma.data * inv_std / dt(m))[None, :, None, None] * (
                    dt(m) * g - sum_g[None, :, None, None] - xhat * sum_gx[None, :, None, None]
                )
                gx = gx.astype(x.dtype)
            return gx, ggamma, gbeta

        return _out(y, (x, gamma, beta), bwd)

    inv_std = dt(1) / np.sqrt(running_var.astype(x.dtype) + dt(eps))
    scale_c = (gamma.data * inv_std).astype(x.dtype)
    shift_c = (beta.data - running_mean.astype(x.dtype) * scale_c).astype(x.dtype)
    y = x.data * scale_c[None, :, None, None] + shift_c[None, :, None, None]

    def bwd(g):
        ggamma = None
        if gamma.requires_grad:
            xh = (x.data - running_mean[None, :, None, None]) * inv_std[None, :, None, None]
            ggamma = (g * xh).sum(axis=(0, 2, 3))
        gbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        gx = (g * scale_c[None, :, None, None]).astype(x.dtype) if x.requires_grad else None
        return gx, ggamma, gbeta

    return _out(y, (x, gamma, beta), bwd)


# ---------------------------------------------------------------------------
# classification losses


def softmax(x):
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"softmax: need (N,K), got {x.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True, dtype=x.dtype)

    def bwd(g):
        dot = (g * s).sum(axis=1, keepdims=True)
        return ((s * (g - dot)).astype(x.dtype),)

    return _out(s, (x,), bwd)


def softmax_xent(logits, labels, reduction="mean"):
    """Softmax cross-entropy against integer labels.

    reduction: 'mean' or 'sum' give a scalar, 'none' gives one loss per
    row. Gradient is the classic (softmax - onehot) scaled accordingly.
    """
    x = _as_tensor(logits)
    y = np.asarray(labels, dtype=np.int64)
    if x.data.ndim != 2 or y.shape != (x.shape[0],):
        raise ShapeError(f"softmax_xent: logits {x.shape} vs labels {y.shape}")
    if y.min() < 0 or y.max() >= x.shape[1]:
        raise ShapeError(f"softmax_xent: label out of range for K={x.shape[1]}")
    n, _ = x.shape
    zmax = x.data.max(axis=1, keepdims=True)
    z = x.data - zmax
    lse = np.log(np.exp(z).sum(axis=1, dtype=x.dtype)) + zmax[:, 0]
    losses = lse - x.data[np.arange(n), y]

    if reduction == "none":
        val = losses
    elif reduction == "sum":
        val = losses.sum(dtype=x.dtype).reshape(())
    elif reduction == "mean":
        val = (losses.sum(dtype=x.dtype) / x.dtype.type(n)).reshape(())
    else:
        raise ShapeError(f"softmax_xent: unknown reduction {reduction!r}")

    def bwd(g):
        p = np.exp(x.data - lse[:, None]).astype(x.dtype)
        p[np.arange(n), y] -= 1
        if reduction == "none":
            gx = p * g[:, None]
        elif reduction == "sum":
            gx = p * g
        else:
            gx = p * (g / x.dtype.type(n))
        return (gx.astype(x.dtype),)

    return _out(val, (x,), bwd)
