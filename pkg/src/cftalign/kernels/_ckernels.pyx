# Compiled twins of the _pykernels routines.
#
# Semantics are pinned to the pure backend: im2col rows are (n, oh, ow)
# row-major with (c, i, j) columns, col2im accumulates (i, j)-major so
# per-pixel addition order matches the numpy fallback exactly, and the
# pool argmax keeps the first maximum in row-major window order.  The
# two backends therefore produce bit-identical outputs.

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

ctypedef fused floating:
    float
    double


def conv_out_size(Py_ssize_t size, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    return (size + 2 * pad - k) // stride + 1


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _im2col_impl(floating[:, :, :, ::1] x, floating[:, ::1] cols,
                       Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
                       Py_ssize_t pad, Py_ssize_t oh, Py_ssize_t ow) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t bi, ci, i, j, oi, oj, row, col, si, sj
    for bi in range(n):
        for oi in range(oh):
            for oj in range(ow):
                row = (bi * oh + oi) * ow + oj
                for ci in range(c):
                    for i in range(kh):
                        si = oi * stride + i - pad
                        for j in range(kw):
                            sj = oj * stride + j - pad
                            col = (ci * kh + i) * kw + j
                            if 0 <= si < h and 0 <= sj < w:
                                cols[row, col] = x[bi, ci, si, sj]
                            else:
                                cols[row, col] = 0.0


def im2col(cnp.ndarray x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = conv_out_size(h, kh, stride, pad)
    cdef Py_ssize_t ow = conv_out_size(w, kw, stride, pad)
    x = np.ascontiguousarray(x)
    cols = np.empty((n * oh * ow, c * kh * kw), dtype=x.dtype)
    if x.dtype == np.float32:
        _im2col_impl[float](x, cols, kh, kw, stride, pad, oh, ow)
    elif x.dtype == np.float64:
        _im2col_impl[double](x, cols, kh, kw, stride, pad, oh, ow)
    else:
        raise TypeError("im2col expects float32/float64, got %s" % x.dtype)
    return cols


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _col2im_impl(floating[:, ::1] cols, floating[:, :, :, ::1] dx,
                       Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
                       Py_ssize_t pad, Py_ssize_t oh, Py_ssize_t ow) noexcept nogil:
    cdef Py_ssize_t n = dx.shape[0], c = dx.shape[1], h = dx.shape[2], w = dx.shape[3]
    cdef Py_ssize_t bi, ci, i, j, oi, oj, si, sj
    # (i, j)-major accumulation: same per-pixel addition order as the fallback
    for i in range(kh):
        for j in range(kw):
            for bi in range(n):
                for ci in range(c):
                    for oi in range(oh):
                        si = oi * stride + i - pad
                        if si < 0 or si >= h:
                            continue
                        for oj in range(ow):
                            sj = oj * stride + j - pad
                            if 0 <= sj < w:
                                dx[bi, ci, si, sj] += cols[(bi * oh + oi) * ow + oj,
                                                           (ci * kh + i) * kw + j]


def col2im(cnp.ndarray cols, x_shape, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t oh = conv_out_size(h, kh, stride, pad)
    cdef Py_ssize_t ow = conv_out_size(w, kw, stride, pad)
    cols = np.ascontiguousarray(cols)
    dx = np.zeros((n, c, h, w), dtype=cols.dtype)
    if cols.dtype == np.float32:
        _col2im_impl[float](cols, dx, kh, kw, stride, pad, oh, ow)
    elif cols.dtype == np.float64:
        _col2im_impl[double](cols, dx, kh, kw, stride, pad, oh, ow)
    else:
        raise TypeError("col2im expects float32/float64, got %s" % cols.dtype)
    return dx


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _maxpool2_fwd_impl(floating[:, :, :, ::1] x, floating[:, :, :, ::1] out,
                             unsigned char[:, :, :, ::1] arg) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t oh = out.shape[2], ow = out.shape[3]
    cdef Py_ssize_t bi, ci, oi, oj, i, j, k
    cdef floating best, v
    cdef unsigned char bestk
    for bi in range(n):
        for ci in range(c):
            for oi in range(oh):
                for oj in range(ow):
                    best = x[bi, ci, 2 * oi, 2 * oj]
                    bestk = 0
                    for k in range(1, 4):
                        i = k // 2
                        j = k % 2
                        v = x[bi, ci, 2 * oi + i, 2 * oj + j]
                        if v > best:  # strict: first maximum wins
                            best = v
                            bestk = <unsigned char> k
                    out[bi, ci, oi, oj] = best
                    arg[bi, ci, oi, oj] = bestk


def maxpool2_forward(cnp.ndarray x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = h // 2, ow = w // 2
    x = np.ascontiguousarray(x)
    out = np.empty((n, c, oh, ow), dtype=x.dtype)
    arg = np.empty((n, c, oh, ow), dtype=np.uint8)
    if x.dtype == np.float32:
        _maxpool2_fwd_impl[float](x, out, arg)
    elif x.dtype == np.float64:
        _maxpool2_fwd_impl[double](x, out, arg)
    else:
        raise TypeError("maxpool2_forward expects float32/float64, got %s" % x.dtype)
    return out, arg


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _maxpool2_bwd_impl(floating[:, :, :, ::1] g, unsigned char[:, :, :, ::1] arg,
                             floating[:, :, :, ::1] dx) noexcept nogil:
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1], oh = g.shape[2], ow = g.shape[3]
    cdef Py_ssize_t bi, ci, oi, oj
    cdef unsigned char k
    for bi in range(n):
        for ci in range(c):
            for oi in range(oh):
                for oj in range(ow):
                    k = arg[bi, ci, oi, oj]
                    dx[bi, ci, 2 * oi + k // 2, 2 * oj + k % 2] = g[bi, ci, oi, oj]


def maxpool2_backward(cnp.ndarray g, cnp.ndarray arg, int h, int w):
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1]
    g = np.ascontiguousarray(g)
    arg = np.ascontiguousarray(arg)
    dx = np.zeros((n, c, h, w), dtype=g.dtype)
    if g.dtype == np.float32:
        _maxpool2_bwd_impl[float](g, arg, dx)
    elif g.dtype == np.float64:
        _maxpool2_bwd_impl[double](g, arg, dx)
    else:
        raise TypeError("maxpool2_backward expects float32/float64, got %s" % g.dtype)
    return dx
