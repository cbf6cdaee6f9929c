"""Pure numpy implementations of the data-movement kernels.

These four routines are the hot inner loops of convolution and pooling.
They move (or compare) values but never combine them arithmetically,
except col2im which accumulates in a fixed (kh, kw)-major order.  The
compiled backend in _ckernels.pyx uses the identical ordering, so both
backends produce bit-identical results and can be swapped freely.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def im2col(x, kh, kw, stride, pad):
    """(N,C,H,W) -> (N*OH*OW, C*kh*kw) patch matrix.

    Row r corresponds to output position (n, oh, ow) in row-major order;
    columns run over (c, i, j) in row-major order.
    """
    n, c, h, w = x.shape
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride, :, :]  # (n, c, oh, ow, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols)


def col2im(cols, x_shape, kh, kw, stride, pad):
    """Adjoint of im2col: scatter-add patch columns back onto the image."""
    n, c, h, w = x_shape
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(w, kw, stride, pad)
    cols6 = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    # accumulate (i, j)-major: each (i, j) touches every destination at most once
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols6[:, :, i, j]
    if pad:
        xp = xp[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(xp)


def maxpool2_forward(x):
    """2x2/stride-2 max pool with floor on odd extents.

    Returns (out, arg) where arg holds the winning in-window index
    (0..3, row-major over the window, first occurrence on ties).
    """
    n, c, h, w = x.shape
    oh, ow = h // 2, w // 2
    v = x[:, :, : 2 * oh, : 2 * ow].reshape(n, c, oh, 2, ow, 2)
    v = v.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
    arg = v.argmax(axis=-1).astype(np.uint8)  # argmax keeps the first maximum
    out = np.take_along_axis(v, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2_backward(g, arg, h, w):
    """Route each output gradient to its argmax input position."""
    n, c, oh, ow = g.shape
    buf = np.zeros((n, c, oh, ow, 4), dtype=g.dtype)
    np.put_along_axis(buf, arg[..., None].astype(np.intp), g[..., None], axis=-1)
    dx = np.zeros((n, c, h, w), dtype=g.dtype)
    dx[:, :, : 2 * oh, : 2 * ow] = (
        buf.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * oh, 2 * ow)
    )
    return dx
