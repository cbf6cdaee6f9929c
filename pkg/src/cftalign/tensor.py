"""Dense tensors and reverse-mode autodiff.

A Tensor wraps a contiguous float32/float64 numpy buffer.  Forward
primitives record (output, parents, backward_fn) triples on the active
GradientTape; GradientTape.backward walks the record in exact reverse
execution order, accumulating gradients additively where a tensor feeds
several consumers.  With no active tape the primitives run forward-only,
which is how inference works.

Primitives raise NumericError as soon as a NaN/Inf shows up, so a
diverging run fails at the op that produced it rather than ten layers
later.
"""

import numpy as np

from . import kernels
from .errors import ConfigurationError, NumericError, UsageError

DEFAULT_DTYPE = np.float32

# finiteness checks on every forward output and backward flow; costs one
# memory pass per op, switch off only for profiling
CHECK_FINITE = True


class Tensor:
    """n-d array participating in the gradient tape.

    grad is None until a backward pass deposits something; repeated
    backward passes accumulate into it.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)  # keeps 0-d scalars 0-d
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def item(self):
        return float(self.data)

    def __repr__(self):
        return "Tensor(shape=%s, dtype=%s, requires_grad=%s)" % (
            self.shape, self.data.dtype.name, self.requires_grad)


_ACTIVE_TAPE = None


class GradientTape:
    """Ordered record of executed primitives.

    Use as a context manager around the forward pass, then call
    backward(root) on the scalar loss.  Tapes must not be nested.
    """

    def __init__(self):
        self._nodes = []  # (out, parents, backward_fn) in execution order

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise UsageError("gradient tapes cannot be nested")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def __len__(self):
        return len(self._nodes)

    def backward(self, root):
        """Accumulate d(root)/d(t) into t.grad for every tensor reaching root.

        root must be a scalar produced on this tape.  Each call adds one
        full gradient, so two calls without zero_grad double the grads.
        """
        if not isinstance(root, Tensor) or root.data.shape != ():
            raise UsageError("backward root must be a scalar Tensor")
        root_idx = None
        for i in range(len(self._nodes) - 1, -1, -1):
            if self._nodes[i][0] is root:
                root_idx = i
                break
        if root_idx is None:
            raise UsageError("backward root was not produced on this tape")

        # pass-local flows keep repeated backward calls additive
        flows = {id(root): np.ones((), dtype=root.data.dtype)}
        holders = {id(root): root}
        for out, parents, backward_fn in reversed(self._nodes[: root_idx + 1]):
            g = flows.pop(id(out), None)
            if g is None:
                continue
            holders.pop(id(out))
            if out.requires_grad:
                out.grad = g if out.grad is None else out.grad + g
            for parent, pg in zip(parents, backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if CHECK_FINITE and not np.isfinite(pg).all():
                    raise NumericError("non-finite gradient flowing into a tensor "
                                       "of shape %s" % (parent.shape,))
                key = id(parent)
                if key in flows:
                    flows[key] = flows[key] + pg
                else:
                    flows[key] = pg
                    holders[key] = parent
        # whatever is left belongs to leaves (inputs/parameters)
        for key, g in flows.items():
            leaf = holders[key]
            leaf.grad = g if leaf.grad is None else leaf.grad + g


def backward(root):
    """Module-level convenience: backward on the active tape."""
    if _ACTIVE_TAPE is None:
        raise UsageError("backward requires an active GradientTape")
    _ACTIVE_TAPE.backward(root)


_PATTERN_SINK = None


class record_patterns:
    """Collect the discrete activation pattern (relu sign masks and pool
    argmax maps) of every forward pass run inside the context.

    Two runs with identical patterns lie on the same locally-linear
    piece of the network, which is what makes a finite-difference
    comparison near relu/maxpool kinks meaningful.
    """

    def __enter__(self):
        global _PATTERN_SINK
        _PATTERN_SINK = []
        return _PATTERN_SINK

    def __exit__(self, exc_type, exc, tb):
        global _PATTERN_SINK
        _PATTERN_SINK = None
        return False


def _finite(arr, op):
    if CHECK_FINITE and not np.isfinite(arr).all():
        raise NumericError("non-finite values produced by %s" % op)


def _emit(out_data, parents, backward_fn, op):
    _finite(out_data, op)
    out = Tensor(out_data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad and _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE._nodes.append((out, parents, backward_fn))
    return out


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# network primitives


def conv2d(x, w, b, stride=1, padding=0):
    """2-d cross-correlation of (N,C,H,W) with (K,C,kh,kw) plus bias (K,).

    Output spatial size is floor((H + 2*padding - kh)/stride) + 1 (same
    for W).  Backward produces gradients for input, weight and bias.
    """
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ConfigurationError("conv2d expects 4-d input and weight, got %s and %s"
                                 % (x.shape, w.shape))
    n, c, h, wd = x.shape
    k, cw, kh, kw = w.shape
    if cw != c:
        raise ConfigurationError("conv2d channel mismatch: input has %d, weight expects %d"
                                 % (c, cw))
    if b.shape != (k,):
        raise ConfigurationError("conv2d bias must have shape (%d,), got %s" % (k, b.shape))
    if stride < 1 or padding < 0:
        raise ConfigurationError("conv2d needs stride >= 1 and padding >= 0")
    if kh > h + 2 * padding or kw > wd + 2 * padding:
        raise ConfigurationError("conv2d kernel %dx%d larger than padded input %dx%d"
                                 % (kh, kw, h + 2 * padding, wd + 2 * padding))

    oh = kernels.conv_out_size(h, kh, stride, padding)
    ow = kernels.conv_out_size(wd, kw, stride, padding)
    cols = kernels.im2col(x.data, kh, kw, stride, padding)  # (n*oh*ow, c*kh*kw)
    wmat = w.data.reshape(k, -1)
    out_mat = cols @ wmat.T
    out_mat += b.data
    out = np.ascontiguousarray(out_mat.reshape(n, oh, ow, k).transpose(0, 3, 1, 2))

    def backward_fn(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, k)
        dx = dw = db = None
        if x.requires_grad:
            dx = kernels.col2im(gmat @ wmat, (n, c, h, wd), kh, kw, stride, padding)
        if w.requires_grad:
            dw = (gmat.T @ cols).reshape(w.shape)
        if b.requires_grad:
            db = gmat.sum(axis=0)
        return dx, dw, db

    return _emit(out, (x, w, b), backward_fn, "conv2d")


def maxpool2(x):
    """2x2 stride-2 max pooling; odd trailing rows/columns are dropped.

    Backward routes the gradient to the argmax position only, first
    occurrence winning on ties.
    """
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise ConfigurationError("maxpool2 expects a 4-d tensor, got %s" % (x.shape,))
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ConfigurationError("maxpool2 needs spatial extents >= 2, got %dx%d" % (h, w))
    out, arg = kernels.maxpool2_forward(x.data)
    if _PATTERN_SINK is not None:
        _PATTERN_SINK.append(arg.copy())

    def backward_fn(g):
        return (kernels.maxpool2_backward(np.ascontiguousarray(g), arg, h, w),)

    return _emit(out, (x,), backward_fn, "maxpool2")


def fully_connected(x, w, b):
    """out = x @ w.T + b for x (N,D), w (M,D), b (M,)."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ConfigurationError("fully_connected expects 2-d input and weight, got %s and %s"
                                 % (x.shape, w.shape))
    n, d = x.shape
    m, dw = w.shape
    if dw != d:
        raise ConfigurationError("fully_connected inner dimensions disagree: %d vs %d" % (d, dw))
    if b.shape != (m,):
        raise ConfigurationError("fully_connected bias must have shape (%d,), got %s"
                                 % (m, b.shape))
    out = x.data @ w.data.T + b.data

    def backward_fn(g):
        dx = g @ w.data if x.requires_grad else None
        dw_ = g.T @ x.data if w.requires_grad else None
        db = g.sum(axis=0) if b.requires_grad else None
        return dx, dw_, db

    return _emit(out, (x, w, b), backward_fn, "fully_connected")


def relu(x):
    """Elementwise max(0, x); gradient is 0 where x <= 0."""
    x = _as_tensor(x)
    out = np.maximum(x.data, 0)
    mask = x.data > 0
    if _PATTERN_SINK is not None:
        _PATTERN_SINK.append(mask)

    def backward_fn(g):
        return (g * mask,)

    return _emit(out, (x,), backward_fn, "relu")


class BatchNormState:
    """Per-channel batch-norm parameters and running statistics.

    gamma/beta are learnable tensors; running_mean/running_var feed
    inference.  mode is 'train' or 'infer' and is flipped by the network
    forward pass.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=DEFAULT_DTYPE):
        if channels < 1:
            raise ConfigurationError("batch norm needs at least one channel")
        if eps <= 0:
            raise ConfigurationError("batch norm epsilon must be positive, got %g" % eps)
        if not 0 < momentum <= 1:
            raise ConfigurationError("batch norm momentum must be in (0, 1], got %g" % momentum)
        self.channels = int(channels)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.mode = "train"

    def reset_running(self):
        self.running_mean[...] = 0
        self.running_var[...] = 1


def batch_norm(x, state):
    """Per-channel batch normalization of (N,C,H,W) followed by gamma/beta.

    Train mode standardizes with the mini-batch mean/variance (biased)
    and updates the running statistics; infer mode uses the running
    statistics.  The backward pass treats batch mean/var as functions of
    the input, i.e. the full gradient.
    """
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise ConfigurationError("batch_norm expects a 4-d tensor, got %s" % (x.shape,))
    n, c, h, w = x.shape
    if c != state.channels:
        raise ConfigurationError("batch_norm state has %d channels, input has %d"
                                 % (state.channels, c))
    gamma, beta = state.gamma, state.beta
    gcol = gamma.data[None, :, None, None]

    if state.mode == "train":
        m = n * h * w
        if m < 2:
            raise ConfigurationError(
                "batch_norm train mode needs at least 2 values per channel, got %d" % m)
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        inv = 1.0 / np.sqrt(var + state.eps)
        xc = x.data - mean[None, :, None, None]
        xhat = xc * inv[None, :, None, None]
        out = gcol * xhat + beta.data[None, :, None, None]
        mom = state.momentum
        state.running_mean[...] = (1 - mom) * state.running_mean + mom * mean.astype(
            state.running_mean.dtype)
        state.running_var[...] = (1 - mom) * state.running_var + mom * var.astype(
            state.running_var.dtype)

        def backward_fn(g):
            dbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
            dgamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
            dx = None
            if x.requires_grad:
                dxhat = g * gcol
                dvar = (dxhat * xc).sum(axis=(0, 2, 3)) * (-0.5) * inv ** 3
                dmean = -(dxhat.sum(axis=(0, 2, 3))) * inv + dvar * (-2.0 / m) * xc.sum(
                    axis=(0, 2, 3))
                dx = (dxhat * inv[None, :, None, None]
                      + dvar[None, :, None, None] * (2.0 / m) * xc
                      + dmean[None, :, None, None] * (1.0 / m))
            return dx, dgamma, dbeta

    else:
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (x.data - state.running_mean[None, :, None, None]) * inv[None, :, None, None]
        out = gcol * xhat + beta.data[None, :, None, None]

        def backward_fn(g):
            dbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
            dgamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
            dx = g * gcol * inv[None, :, None, None] if x.requires_grad else None
            return dx, dgamma, dbeta

    return _emit(out, (x, gamma, beta), backward_fn, "batch_norm")


# ---------------------------------------------------------------------------
# elementwise / reduction primitives (loss assembly)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ConfigurationError("add shape mismatch: %s vs %s" % (a.shape, b.shape))

    def backward_fn(g):
        return g, g

    return _emit(a.data + b.data, (a, b), backward_fn, "add")


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ConfigurationError("sub shape mismatch: %s vs %s" % (a.shape, b.shape))

    def backward_fn(g):
        return g, -g

    return _emit(a.data - b.data, (a, b), backward_fn, "sub")


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ConfigurationError("mul shape mismatch: %s vs %s" % (a.shape, b.shape))

    def backward_fn(g):
        da = g * b.data if a.requires_grad else None
        db = g * a.data if b.requires_grad else None
        return da, db

    return _emit(a.data * b.data, (a, b), backward_fn, "mul")


def scale(a, c):
    """Multiply by a constant scalar or broadcastable array (no grad to c)."""
    a = _as_tensor(a)
    c = np.asarray(c, dtype=a.dtype)
    out = a.data * c
    if out.shape != a.shape:
        raise ConfigurationError("scale constant %s does not broadcast onto %s without "
                                 "expanding it" % (c.shape, a.shape))

    def backward_fn(g):
        return (g * c,)

    return _emit(out, (a,), backward_fn, "scale")


def reduce_sum(a, axis=None):
    """Sum over an axis (or all elements for axis=None)."""
    a = _as_tensor(a)
    out = a.data.sum(axis=axis)

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).astype(a.dtype, copy=True),)

    return _emit(out, (a,), backward_fn, "reduce_sum")


def mean_all(a):
    a = _as_tensor(a)
    return scale(reduce_sum(a), 1.0 / a.size)


def reshape(a, shape):
    a = _as_tensor(a)
    out = a.data.reshape(shape)

    def backward_fn(g):
        return (g.reshape(a.shape),)

    return _emit(out, (a,), backward_fn, "reshape")


def flatten(a):
    """(N, ...) -> (N, prod(...))."""
    a = _as_tensor(a)
    return reshape(a, (a.shape[0], -1))
