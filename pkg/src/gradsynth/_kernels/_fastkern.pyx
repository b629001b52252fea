# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled conv/pool kernels.

Direct convolution with the kernel taps hoisted to scalars and the
output-width loop innermost, so the hot loops are contiguous
multiply-adds the compiler can vectorize. Parallel loops partition work
by output index (each cell is written by exactly one thread, accumulated
in a fixed order), so results are bit-identical run to run and across
thread counts.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel import prange

cnp.import_array()

ctypedef fused floating:
    float
    double

name = "fast"


def _empty_like_dtype(floating[:, :, :, ::1] ref, shape):
    if floating is float:
        return np.zeros(shape, dtype=np.float32)
    else:
        return np.zeros(shape, dtype=np.float64)


cdef inline Py_ssize_t _lo(Py_ssize_t u, Py_ssize_t pad, Py_ssize_t stride) nogil:
    # smallest out index with in index >= 0
    if u >= pad:
        return 0
    return (pad - u + stride - 1) // stride


cdef inline Py_ssize_t _hi(Py_ssize_t u, Py_ssize_t pad, Py_ssize_t stride,
                           Py_ssize_t size_in, Py_ssize_t size_out) nogil:
    # largest out index with in index < size_in, clipped to size_out-1
    cdef Py_ssize_t h = (size_in - 1 - u + pad) // stride
    if h > size_out - 1:
        h = size_out - 1
    return h


def conv2d_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                   Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t n = x.shape[0], ci_n = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t co_n = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pad - kw) // stride + 1
    out_arr = _empty_like_dtype(x, (n, co_n, ho, wo))
    cdef floating[:, :, :, ::1] y = out_arr
    cdef Py_ssize_t b, co, ci, u, v, i, j, jlo, jhi, ilo, ihi, hi_in, wbase
    cdef floating wv
    with nogil:
        for b in prange(n, schedule='static'):
            for co in range(co_n):
                for ci in range(ci_n):
                    for u in range(kh):
                        ilo = _lo(u, pad, stride)
                        ihi = _hi(u, pad, stride, h, ho)
                        for v in range(kw):
                            wv = w[co, ci, u, v]
                            jlo = _lo(v, pad, stride)
                            jhi = _hi(v, pad, stride, wd, wo)
                            for i in range(ilo, ihi + 1):
                                hi_in = i * stride + u - pad
                                wbase = v - pad
                                for j in range(jlo, jhi + 1):
                                    y[b, co, i, j] += wv * x[b, ci, hi_in, j * stride + wbase]
    return out_arr


def conv2d_backward_input(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] w,
                          x_shape, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t n = gy.shape[0], co_n = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t ci_n = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t h = x_shape[2], wd = x_shape[3]
    out_arr = _empty_like_dtype(gy, (n, ci_n, h, wd))
    cdef floating[:, :, :, ::1] gx = out_arr
    cdef Py_ssize_t b, co, ci, u, v, i, j, jlo, jhi, ilo, ihi, hi_in, wbase
    cdef floating wv
    with nogil:
        for b in prange(n, schedule='static'):
            for ci in range(ci_n):
                for co in range(co_n):
                    for u in range(kh):
                        ilo = _lo(u, pad, stride)
                        ihi = _hi(u, pad, stride, h, ho)
                        for v in range(kw):
                            wv = w[co, ci, u, v]
                            jlo = _lo(v, pad, stride)
                            jhi = _hi(v, pad, stride, wd, wo)
                            for i in range(ilo, ihi + 1):
                                hi_in = i * stride + u - pad
                                wbase = v - pad
                                for j in range(jlo, jhi + 1):
                                    gx[b, ci, hi_in, j * stride + wbase] += wv * gy[b, co, i, j]
    return out_arr


def conv2d_backward_weight(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] x,
                           w_shape, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t n = gy.shape[0], co_n = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t ci_n = w_shape[1], kh = w_shape[2], kw = w_shape[3]
    cdef Py_ssize_t h = x.shape[2], wd = x.shape[3]
    out_arr = _empty_like_dtype(gy, (co_n, ci_n, kh, kw))
    cdef floating[:, :, :, ::1] gw = out_arr
    cdef Py_ssize_t b, co, ci, u, v, i, j, jlo, jhi, ilo, ihi, hi_in, wbase
    cdef floating acc
    with nogil:
        for co in prange(co_n, schedule='static'):
            for ci in range(ci_n):
                for u in range(kh):
                    ilo = _lo(u, pad, stride)
                    ihi = _hi(u, pad, stride, h, ho)
                    for v in range(kw):
                        jlo = _lo(v, pad, stride)
                        jhi = _hi(v, pad, stride, wd, wo)
                        acc = 0
                        for b in range(n):
                            for i in range(ilo, ihi + 1):
                                hi_in = i * stride + u - pad
                                wbase = v - pad
                                for j in range(jlo, jhi + 1):
                                    acc = acc + gy[b, co, i, j] * x[b, ci, hi_in, j * stride + wbase]
                        gw[co, ci, u, v] = acc
    return out_arr


def maxpool2d_forward(floating[:, :, :, ::1] x, Py_ssize_t k, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t ho = (h - k) // stride + 1
    cdef Py_ssize_t wo = (wd - k) // stride + 1
    out_arr = _empty_like_dtype(x, (n, c, ho, wo))
    arg_arr = np.zeros((n, c, ho, wo), dtype=np.int64)
    cdef floating[:, :, :, ::1] y = out_arr
    cdef cnp.int64_t[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t b, ch, i, j, u, v, hi_in, wi_in, best_u, best_v
    cdef floating best, cur
    with nogil:
        for b in prange(n, schedule='static'):
            for ch in range(c):
                for i in range(ho):
                    for j in range(wo):
                        best = x[b, ch, i * stride, j * stride]
                        best_u = 0
                        best_v = 0
                        for u in range(k):
                            hi_in = i * stride + u
                            for v in range(k):
                                wi_in = j * stride + v
                                cur = x[b, ch, hi_in, wi_in]
                                if cur > best:
                                    best = cur
                                    best_u = u
                                    best_v = v
                        y[b, ch, i, j] = best
                        arg[b, ch, i, j] = best_u * k + best_v
    return out_arr, arg_arr


def maxpool2d_backward(floating[:, :, :, ::1] gy, cnp.int64_t[:, :, :, ::1] argmax,
                       x_shape, Py_ssize_t k, Py_ssize_t stride):
    cdef Py_ssize_t n = gy.shape[0], c = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t h = x_shape[2], wd = x_shape[3]
    out_arr = _empty_like_dtype(gy, (n, c, h, wd))
    cdef floating[:, :, :, ::1] gx = out_arr
    cdef Py_ssize_t b, ch, i, j, u, v
    with nogil:
        for b in prange(n, schedule='static'):
            for ch in range(c):
                for i in range(ho):
                    for j in range(wo):
                        u = argmax[b, ch, i, j] // k
                        v = argmax[b, ch, i, j] % k
                        gx[b, ch, i * stride + u, j * stride + v] += gy[b, ch, i, j]
    return out_arr
