"""Backend parity: the compiled kernels must be bit-identical to the
pure numpy fallback (they only move/compare values, and col2im pins the
same accumulation order)."""

import numpy as np
import pytest

from cftalign import kernels
from cftalign.kernels import _pykernels as pk

try:
    from cftalign.kernels import _ckernels as ck
except ImportError:
    ck = None

needs_c = pytest.mark.skipif(ck is None, reason="compiled kernel extension not built")


def cases(rng, dtype):
    return [
        (rng.standard_normal((2, 3, 7, 6)).astype(dtype), 3, 3, 1, 1),
        (rng.standard_normal((1, 2, 5, 5)).astype(dtype), 3, 3, 1, 0),
        (rng.standard_normal((3, 1, 9, 8)).astype(dtype), 2, 4, 2, 1),
        (rng.standard_normal((1, 4, 4, 4)).astype(dtype), 4, 4, 1, 2),
    ]


def test_im2col_matches_naive_gather(rng):
    x, kh, kw, stride, pad = cases(rng, np.float64)[0]
    cols = pk.im2col(x, kh, kw, stride, pad)
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    for bi in range(n):
        for oi in range(oh):
            for oj in range(ow):
                row = cols[(bi * oh + oi) * ow + oj].reshape(c, kh, kw)
                ref = xp[bi, :, oi * stride : oi * stride + kh, oj * stride : oj * stride + kw]
                assert np.array_equal(row, ref)


def test_col2im_is_adjoint_of_im2col(rng):
    # <im2col(x), y> == <x, col2im(y)> pins the scatter against the gather
    x, kh, kw, stride, pad = cases(rng, np.float64)[2]
    cols = pk.im2col(x, kh, kw, stride, pad)
    y = rng.standard_normal(cols.shape)
    lhs = float((cols * y).sum())
    rhs = float((x * pk.col2im(y, x.shape, kh, kw, stride, pad)).sum())
    assert abs(lhs - rhs) < 1e-9 * max(abs(lhs), 1.0)


def test_maxpool_semantics(rng):
    x = rng.standard_normal((2, 2, 5, 7))
    out, arg = pk.maxpool2_forward(x)
    assert out.shape == (2, 2, 2, 3)
    for bi in range(2):
        for ci in range(2):
            for oi in range(2):
                for oj in range(3):
                    win = x[bi, ci, 2 * oi : 2 * oi + 2, 2 * oj : 2 * oj + 2].reshape(-1)
                    assert out[bi, ci, oi, oj] == win.max()
                    assert arg[bi, ci, oi, oj] == win.argmax()


@needs_c
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_backends_bit_identical(rng, dtype):
    for x, kh, kw, stride, pad in cases(rng, dtype):
        cols_p = pk.im2col(x, kh, kw, stride, pad)
        cols_c = ck.im2col(x, kh, kw, stride, pad)
        assert np.array_equal(cols_p, cols_c)
        g = rng.standard_normal(cols_p.shape).astype(dtype)
        assert np.array_equal(pk.col2im(g, x.shape, kh, kw, stride, pad),
                              ck.col2im(g, x.shape, kh, kw, stride, pad))
        out_p, arg_p = pk.maxpool2_forward(x)
        out_c, arg_c = ck.maxpool2_forward(x)
        assert np.array_equal(out_p, out_c)
        assert np.array_equal(arg_p, arg_c)
        gp = rng.standard_normal(out_p.shape).astype(dtype)
        h, w = x.shape[2:]
        assert np.array_equal(pk.maxpool2_backward(gp, arg_p, h, w),
                              ck.maxpool2_backward(gp, arg_c, h, w))


@needs_c
def test_backend_tie_break_matches(rng):
    x = np.zeros((1, 1, 4, 4))
    x[0, 0, 1, 1] = x[0, 0, 0, 0] = 2.0  # tie inside the first window
    _, arg_p = pk.maxpool2_forward(x)
    _, arg_c = ck.maxpool2_forward(x)
    assert arg_p[0, 0, 0, 0] == arg_c[0, 0, 0, 0] == 0


def test_selected_backend_exports():
    assert kernels.BACKEND in ("c", "python")
    for name in ("im2col", "col2im", "maxpool2_forward", "maxpool2_backward"):
        assert callable(getattr(kernels, name))
