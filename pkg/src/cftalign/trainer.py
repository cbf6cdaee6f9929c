"""Staged coarse-to-fine training and the direct-training baseline.

The schedule runs k stages; stage i trains to convergence with

    lam_i = lam0 - (lam0 - 0.5) / (k - 1) * i

so the principal-subset weight anneals from lam0 (nearly 1) down to
exactly 0.5.  Parameters, optimizer momentum and the shuffle RNG all
carry across stage boundaries, so later stages refine rather than
restart.  Direct training (DT) is the one-stage lam=0.5 baseline run
under the same total epoch budget.

Convergence: a stage stops once the validation loss has failed to
improve by min_rel_improvement (relative) for `patience` consecutive
epochs, or at max_epochs_per_stage.
"""

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from . import losses as L
from . import network as N
from . import tensor as T
from .errors import ConfigurationError, NumericError

log = logging.getLogger("cftalign.trainer")


def lambda_for_stage(lambda0, k, i):
    """Principal-subset weight for stage i of k (0-based)."""
    if not isinstance(k, int) or k < 2:
        raise ConfigurationError("stage count k must be an integer >= 2, got %r" % (k,))
    if not 0.5 < lambda0 < 1.0:
        raise ConfigurationError("lambda0 must lie in (0.5, 1), got %r" % (lambda0,))
    if not 0 <= i <= k - 1:
        raise ConfigurationError("stage index %r outside [0, %d]" % (i, k - 1))
    if i == k - 1:
        return 0.5  # the formula lands here algebraically; pin it exactly
    return lambda0 - (lambda0 - 0.5) / (k - 1) * i


@dataclass(frozen=True)
class TrainSchedule:
    lambda0: float = 0.995
    k: int = 3
    max_epochs_per_stage: int = 100
    patience: int = 5
    min_rel_improvement: float = 1e-3
    learning_rate: float = 0.01
    lr_stage_decay: float = 0.5
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 32
    validation_fraction: float = 0.1
    head_weights: tuple = (1.0, 1.0, 1.0, 1.0)
    restore_best: bool = True
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 2:
            raise ConfigurationError("k must be an integer >= 2, got %r" % (self.k,))
        if not 0.5 < self.lambda0 < 1.0:
            raise ConfigurationError("lambda0 must lie in (0.5, 1), got %r" % (self.lambda0,))
        if self.max_epochs_per_stage < 0:
            raise ConfigurationError("max_epochs_per_stage must be >= 0")
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2 (batch-norm statistics)")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigurationError("validation_fraction must lie in [0, 1)")
        if len(self.head_weights) != 4:
            raise ConfigurationError("head_weights must have 4 entries")

    def lambda_sequence(self):
        return tuple(lambda_for_stage(self.lambda0, self.k, i) for i in range(self.k))

    def to_dict(self):
        d = {f: getattr(self, f) for f in _SCHEDULE_KEYS}
        d["head_weights"] = list(self.head_weights)
        return d


_SCHEDULE_KEYS = ("lambda0", "k", "max_epochs_per_stage", "patience", "min_rel_improvement",
                  "learning_rate", "lr_stage_decay", "momentum", "weight_decay", "batch_size",
                  "validation_fraction", "head_weights", "restore_best", "seed")


def schedule_from_dict(d):
    unknown = set(d) - set(_SCHEDULE_KEYS)
    if unknown:
        raise ConfigurationError("unknown schedule keys: %s" % ", ".join(sorted(unknown)))
    kwargs = dict(d)
    if "head_weights" in kwargs:
        kwargs["head_weights"] = tuple(kwargs["head_weights"])
    return TrainSchedule(**kwargs)


class SGD:
    """SGD with classical momentum and coupled weight decay:

        v <- momentum * v + grad + weight_decay * param
        param <- param - lr * v
    """

    def __init__(self, params, lr, momentum=0.9, weight_decay=5e-4):
        self.params = list(params)  # (name, Tensor) pairs
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {name: np.zeros_like(t.data) for name, t in self.params}

    def step(self):
        for name, t in self.params:
            g = t.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise NumericError("non-finite gradient for parameter %s "
                                   "(lr=%g); aborting" % (name, self.lr))
            v = self.velocity[name]
            v *= self.momentum
            v += g
            if self.weight_decay:
                v += self.weight_decay * t.data
            t.data -= self.lr * v

    def zero_grad(self):
        for _, t in self.params:
            t.zero_grad()


def sgd_step(params, lr, momentum=0.0, weight_decay=0.0, state=None):
    """One-shot functional form of the update above; params is a list of
    (name, Tensor) with populated grads.  Returns the velocity state."""
    opt = state
    if opt is None:
        opt = SGD(params, lr, momentum, weight_decay)
    else:
        opt.lr, opt.momentum, opt.weight_decay = lr, momentum, weight_decay
    opt.step()
    return opt


@dataclass
class StageReport:
    stage: int
    lam: float
    epochs_run: int
    best_val_loss: float
    stopped: str  # "max_epochs" | "converged" | "no training"


@dataclass
class History:
    """Everything a run recorded: per-epoch loss rows, per-step training
    losses, and per-stage reports."""

    rows: list = field(default_factory=list)  # dict per epoch
    step_losses: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    algorithm: str = ""

    CSV_FIELDS = ("stage", "epoch", "lambda",
                  "h1_eb", "h1_er", "h2_eb", "h2_er", "h3_eb", "h3_er", "h4_eb", "h4_er",
                  "train_total", "val_total")

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(self.CSV_FIELDS)
            for row in self.rows:
                writer.writerow([row["stage"], row["epoch"], "%.10g" % row["lambda"]]
                                + ["%.10g" % v for pair in row["per_head"] for v in pair]
                                + ["%.10g" % row["train_total"], "%.10g" % row["val_total"]])


def _forward_loss(net, x, targets, lam, head_weights, mode):
    heads = N.forward(net, T.Tensor(x), mode)
    return L.multi_head_loss(heads, targets, lam, head_weights)


def _dataset_loss(net, data, lam, head_weights, batch_size=128):
    """Mean combined loss over a dataset, infer-mode, sample-weighted."""
    total = 0.0
    per_head = np.zeros((4, 2))
    for s in range(0, data.n, batch_size):
        sl = slice(s, min(s + batch_size, data.n))
        tg = L.SubsetTargets(data.f_b[sl], data.f_r[sl], data.d[sl])
        bd = _forward_loss(net, data.x[sl], tg, lam, head_weights, "infer")
        w = (sl.stop - sl.start) / data.n
        total += bd.total_value * w
        per_head += np.array([(eb, er) for eb, er, _ in bd.per_head]) * w
    return total, [tuple(p) for p in per_head]


def _snapshot(net):
    return {name: t.data.copy() for name, t in net.params.items()}, [
        (st.running_mean.copy(), st.running_var.copy()) for st in net.bn]


def _restore(net, snap):
    params, running = snap
    for name, t in net.params.items():
        t.data[...] = params[name]
    for st, (rm, rv) in zip(net.bn, running):
        st.running_mean[...] = rm
        st.running_var[...] = rv


def train_stage(net, train_set, val_set, lam, schedule, optimizer, rng,
                history, stage_idx, max_epochs, checkpoint_dir=None):
    """Train one stage at fixed lam until convergence or max_epochs.

    Ends with the stage's best-validation parameters restored (when
    schedule.restore_best), so the next stage starts from the best
    point this stage found.
    """
    if train_set.n == 0:
        raise ConfigurationError("training set is empty")
    if val_set.n == 0:
        raise ConfigurationError("validation set is empty")

    if max_epochs == 0:
        report = StageReport(stage_idx, lam, 0, float("nan"), "no training")
        history.stages.append(report)
        return report

    hw = schedule.head_weights
    best_val = float("inf")
    best_snap = None
    bad_epochs = 0
    epochs_run = 0
    stopped = "max_epochs"

    for epoch in range(max_epochs):
        perm = rng.permutation(train_set.n)
        train_total = 0.0
        per_head = np.zeros((4, 2))
        seen = 0
        for s in range(0, train_set.n, schedule.batch_size):
            idx = perm[s : s + schedule.batch_size]
            if idx.size < 2:
                continue  # a singleton batch has no batch statistics
            tg = L.SubsetTargets(train_set.f_b[idx], train_set.f_r[idx], train_set.d[idx])
            tape = T.GradientTape()
            with tape:
                bd = _forward_loss(net, train_set.x[idx], tg, lam, hw, "train")
            tape.backward(bd.total)
            optimizer.step()
            optimizer.zero_grad()
            history.step_losses.append(bd.total_value)
            train_total += bd.total_value * idx.size
            per_head += np.array([(eb, er) for eb, er, _ in bd.per_head]) * idx.size
            seen += idx.size
        train_total /= max(seen, 1)
        per_head /= max(seen, 1)

        val_total, _ = _dataset_loss(net, val_set, lam, hw)
        if not np.isfinite(val_total):
            raise NumericError("validation loss is not finite at stage %d epoch %d"
                               % (stage_idx, epoch))
        epochs_run += 1
        history.rows.append({
            "stage": stage_idx, "epoch": epoch, "lambda": lam,
            "per_head": [tuple(p) for p in per_head],
            "train_total": train_total, "val_total": val_total,
        })
        log.info("stage %d epoch %d lambda=%.4f train=%.6f val=%.6f",
                 stage_idx, epoch, lam, train_total, val_total)

        improved = (val_total < best_val * (1.0 - schedule.min_rel_improvement)
                    if np.isfinite(best_val) else True)
        if improved:
            best_val = val_total
            bad_epochs = 0
            if schedule.restore_best:
                best_snap = _snapshot(net)
            if checkpoint_dir is not None:
                checkpoint.save_network(net, os.path.join(checkpoint_dir, "best.ckpt"))
        else:
            bad_epochs += 1
            if bad_epochs >= schedule.patience:
                stopped = "converged"
                break

    if schedule.restore_best and best_snap is not None:
        _restore(net, best_snap)
    report = StageReport(stage_idx, lam, epochs_run, best_val, stopped)
    history.stages.append(report)
    return report


def _split_validation(data, schedule):
    rng = np.random.default_rng(schedule.seed)
    n_val = max(1, int(round(data.n * schedule.validation_fraction)))
    perm = rng.permutation(data.n)
    return data.subset(perm[n_val:]), data.subset(perm[:n_val])


def train_cft(net, train_set, schedule, val_set=None, checkpoint_dir=None):
    """Coarse-to-fine training: k stages with the annealed lam schedule.

    Returns (net, History).  Learning rate decays by lr_stage_decay per
    stage; optimizer state and parameters persist across stages.
    """
    if val_set is None:
        train_set, val_set = _split_validation(train_set, schedule)
    history = History(algorithm="cft")
    rng = np.random.default_rng(schedule.seed)
    optimizer = SGD(net.parameters(), schedule.learning_rate,
                    schedule.momentum, schedule.weight_decay)
    for i in range(schedule.k):
        lam = lambda_for_stage(schedule.lambda0, schedule.k, i)
        optimizer.lr = schedule.learning_rate * (schedule.lr_stage_decay ** i)
        train_stage(net, train_set, val_set, lam, schedule, optimizer, rng,
                    history, i, schedule.max_epochs_per_stage, checkpoint_dir)
        if checkpoint_dir is not None:
            checkpoint.save_network(net, os.path.join(checkpoint_dir, "stage%d.ckpt" % i))
    return net, history


def train_dt(net, train_set, schedule, val_set=None, checkpoint_dir=None):
    """Direct-training baseline: one stage at lam=0.5 with the same
    total epoch budget as the k-stage run (fair comparison)."""
    if val_set is None:
        train_set, val_set = _split_validation(train_set, schedule)
    history = History(algorithm="dt")
    rng = np.random.default_rng(schedule.seed)
    optimizer = SGD(net.parameters(), schedule.learning_rate,
                    schedule.momentum, schedule.weight_decay)
    budget = schedule.k * schedule.max_epochs_per_stage
    train_stage(net, train_set, val_set, 0.5, schedule, optimizer, rng,
                history, 0, budget, checkpoint_dir)
    if checkpoint_dir is not None:
        checkpoint.save_network(net, os.path.join(checkpoint_dir, "stage0.ckpt"))
    return net, history
