"""NumPy fallback for the hot kernels (conv2d and max-pool).

Convolutions go through im2col + GEMM, which is the fastest construction
available without compiled code. The compiled backend in ``_fastkern``
implements the same signatures with direct loops; both are deterministic
on a fixed thread count, but they accumulate in different orders so their
outputs may differ in the last ulp.
"""

import numpy as np

name = "numpy"


def _out_dim(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def _im2col(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    ho = _out_dim(h, kh, stride, pad)
    wo = _out_dim(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            cols[:, :, u, v] = x[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride]
    return cols.reshape(n, c * kh * kw, ho * wo)


def _col2im(cols, x_shape, kh, kw, stride, pad):
    n, c, h, w = x_shape
    ho = _out_dim(h, kh, stride, pad)
    wo = _out_dim(w, kw, stride, pad)
    buf = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    for u in range(kh):
        for v in range(kw):
            buf[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride] += cols[:, :, u, v]
    if pad:
        buf = buf[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(buf)


def conv2d_forward(x, w, stride, pad):
    n = x.shape[0]
    co = w.shape[0]
    ho = _out_dim(x.shape[2], w.shape[2], stride, pad)
    wo = _out_dim(x.shape[3], w.shape[3], stride, pad)
    cols = _im2col(x, w.shape[2], w.shape[3], stride, pad)
    y = np.matmul(w.reshape(co, -1)[None], cols)
    return y.reshape(n, co, ho, wo)


def conv2d_backward_input(gy, w, x_shape, stride, pad):
    n, co = gy.shape[:2]
    gcols = np.matmul(w.reshape(co, -1).T[None], gy.reshape(n, co, -1))
    return _col2im(gcols, x_shape, w.shape[2], w.shape[3], stride, pad)


def conv2d_backward_weight(gy, x, w_shape, stride, pad):
    n, co = gy.shape[:2]
    cols = _im2col(x, w_shape[2], w_shape[3], stride, pad)
    gw = np.matmul(gy.reshape(n, co, -1), cols.transpose(0, 2, 1)).sum(axis=0)
    return np.ascontiguousarray(gw.reshape(w_shape))


def maxpool2d_forward(x, k, stride):
    """Returns (values, argmax) with argmax as flat in-window indices.

    Ties break on the first window position in row-major order, matching
    np.argmax over the stacked window axis.
    """
    n, c, h, w = x.shape
    ho = _out_dim(h, k, stride, 0)
    wo = _out_dim(w, k, stride, 0)
    cols = _im2col(x.reshape(n * c, 1, h, w), k, k, stride, 0)  # (n*c, k*k, ho*wo)
    arg = np.argmax(cols, axis=1)
    val = np.take_along_axis(cols, arg[:, None, :], axis=1)[:, 0, :]
    return val.reshape(n, c, ho, wo), arg.reshape(n, c, ho, wo).astype(np.int64)


def maxpool2d_backward(gy, argmax, x_shape, k, stride):
    n, c, h, w = x_shape
    ho, wo = gy.shape[2], gy.shape[3]
    gcols = np.zeros((n * c, k * k, ho * wo), dtype=gy.dtype)
    arg = argmax.reshape(n * c, 1, ho * wo)
    np.put_along_axis(gcols, arg, gy.reshape(n * c, 1, ho * wo), axis=1)
    return _col2im(gcols, (n * c, 1, h, w), k, k, stride, 0).reshape(n, c, h, w)
