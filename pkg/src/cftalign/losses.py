"""Dual-subset losses with the coarse-to-fine weight.

Each head pair is scored with a squared Euclidean distance normalized
by twice the squared inter-ocular distance:

    E_b = ||f_b - fhat_b||^2 / (2 d^2)        (principal subset)
    E_r = ||f_r - fhat_r||^2 / (2 d^2)        (elaborate subset)
    E   = lam * E_b + (1 - lam) * E_r

All four supervisory pairs use the same E; the training total is their
(optionally weighted) sum, averaged over the batch.  Normalizing by d
makes the loss scale-free and puts it in the same units as the
evaluation metric.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DataError, UsageError


def _check_lambda(lam):
    if not 0.5 <= lam < 1.0:
        raise UsageError("lambda must lie in [0.5, 1), got %r" % (lam,))


@dataclass
class SubsetTargets:
    """Batch of regression targets in the crop-normalized frame.

    f_b: (N, 2*|principal|) principal coordinates, (x, y) interleaved in
         partition order; f_r: (N, 2*|elaborate|) likewise; d: (N,)
         inter-ocular distances in the same frame.
    """

    f_b: np.ndarray
    f_r: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.f_b = np.atleast_2d(np.asarray(self.f_b, dtype=np.float64))
        self.f_r = np.asarray(self.f_r, dtype=np.float64)
        if self.f_r.ndim == 1:
            self.f_r = self.f_r.reshape(self.f_b.shape[0], -1)
        self.d = np.atleast_1d(np.asarray(self.d, dtype=np.float64))
        n = self.f_b.shape[0]
        if self.f_r.shape[0] != n or self.d.shape != (n,):
            raise ConfigurationError("SubsetTargets batch sizes disagree: f_b %s, f_r %s, d %s"
                                     % (self.f_b.shape, self.f_r.shape, self.d.shape))
        if self.f_b.shape[1] % 2 or self.f_r.shape[1] % 2:
            raise ConfigurationError("subset target widths must be even (x,y pairs)")
        if np.any(self.d <= 0):
            raise DataError("inter-ocular distance must be strictly positive")

    @property
    def n(self):
        return self.f_b.shape[0]


@dataclass
class LossBreakdown:
    """Per-head (E_b, E_r, E) floats plus the scalar total fed to backward."""

    per_head: list  # [(E_b, E_r, E)] in pool order
    total: T.Tensor
    lam: float

    @property
    def total_value(self):
        return float(self.total.data)


def _batch_subset_loss(pred, truth, d):
    """Mean over the batch of ||pred_n - truth_n||^2 / (2 d_n^2), on tape."""
    truth = np.asarray(truth, dtype=pred.dtype)
    diff = T.sub(pred, T.Tensor(truth))
    per_sample = T.reduce_sum(T.mul(diff, diff), axis=1)
    weights = 1.0 / (2.0 * np.asarray(d, dtype=np.float64) ** 2)
    weighted = T.scale(per_sample, weights.astype(pred.dtype))
    return T.scale(T.reduce_sum(weighted), 1.0 / pred.shape[0])


def subset_loss(pred, truth, d):
    """Single-vector form: squared L2 distance over 2d^2.

    pred may be a Tensor (stays on tape) or an array; truth is an array
    of equal length; d is a positive scalar.
    """
    if d <= 0:
        raise DataError("degenerate inter-ocular distance d=%r" % (d,))
    pred = pred if isinstance(pred, T.Tensor) else T.Tensor(pred)
    truth = np.asarray(truth)
    if pred.data.ndim != 1 or truth.shape != pred.shape:
        raise ConfigurationError("subset_loss expects equal-length vectors, got %s and %s"
                                 % (pred.shape, truth.shape))
    return _batch_subset_loss(T.reshape(pred, (1, -1)), truth.reshape(1, -1), [d])


def combined_loss(e_b, e_r, lam):
    """lam * E_b + (1 - lam) * E_r; works on floats or scalar Tensors."""
    _check_lambda(lam)
    if isinstance(e_b, T.Tensor) or isinstance(e_r, T.Tensor):
        e_b = e_b if isinstance(e_b, T.Tensor) else T.Tensor(np.asarray(e_b))
        e_r = e_r if isinstance(e_r, T.Tensor) else T.Tensor(np.asarray(e_r))
        return T.add(T.scale(e_b, lam), T.scale(e_r, 1.0 - lam))
    if e_b < 0 or e_r < 0:
        raise UsageError("subset losses must be non-negative")
    return lam * e_b + (1.0 - lam) * e_r


def empty_elaborate_loss(pred_b, truth_b, d, lam):
    """Degenerate case with no elaborate landmarks: E = lam * E_b."""
    _check_lambda(lam)
    return T.scale(subset_loss(pred_b, truth_b, d), lam)


def multi_head_loss(heads, targets, lam, head_weights=None):
    """Combined loss over the four supervisory head pairs.

    heads: four (principal_pred, elaborate_pred) Tensor pairs in pool
    order.  The total is the head-weighted sum (all ones by default) of
    the per-head combined losses, each already averaged over the batch.
    """
    _check_lambda(lam)
    if head_weights is None:
        head_weights = (1.0, 1.0, 1.0, 1.0)
    if len(heads) != 4 or len(head_weights) != 4:
        raise ConfigurationError("expected 4 head pairs and 4 head weights")

    per_head = []
    total = None
    for (pred_b, pred_e), hw in zip(heads, head_weights):
        if pred_b.shape[1] != targets.f_b.shape[1]:
            raise ConfigurationError("principal head width %d does not match targets %d"
                                     % (pred_b.shape[1], targets.f_b.shape[1]))
        if pred_e.shape[1] != targets.f_r.shape[1]:
            raise ConfigurationError("elaborate head width %d does not match targets %d"
                                     % (pred_e.shape[1], targets.f_r.shape[1]))
        e_b = _batch_subset_loss(pred_b, targets.f_b, targets.d)
        if pred_e.shape[1] > 0:
            e_r = _batch_subset_loss(pred_e, targets.f_r, targets.d)
            e = T.add(T.scale(e_b, lam), T.scale(e_r, 1.0 - lam))
            e_r_val = float(e_r.data)
        else:
            e = T.scale(e_b, lam)
            e_r_val = 0.0
        per_head.append((float(e_b.data), e_r_val, float(e.data)))
        contrib = T.scale(e, hw) if hw != 1.0 else e
        total = contrib if total is None else T.add(total, contrib)

    return LossBreakdown(per_head=per_head, total=total, lam=float(lam))
