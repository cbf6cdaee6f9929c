import numpy as np
import pytest

from cftalign import losses as L
from cftalign import network as N
from cftalign import tensor as T


def rel_err(analytic, fd, floor=1e-8):
    return abs(analytic - fd) / max(abs(analytic), abs(fd), floor)


def gradcheck(make_loss, tensors, h=1e-5, n_coords=40, seed=0, floor=1e-8):
    """Compare tape gradients against central finite differences on a
    random sample of coordinates; returns the worst relative error.

    make_loss must rebuild the graph from the tensors' current data.
    """
    tape = T.GradientTape()
    with tape:
        loss = make_loss()
    tape.backward(loss)
    grads = [t.grad.copy() for t in tensors]
    for t in tensors:
        t.zero_grad()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, g in zip(tensors, grads):
        flat = t.data.reshape(-1)
        gf = g.reshape(-1)
        for idx in rng.choice(flat.size, size=min(n_coords, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            lp = float(make_loss().data)
            flat[idx] = orig - h
            lm = float(make_loss().data)
            flat[idx] = orig
            worst = max(worst, rel_err(gf[idx], (lp - lm) / (2 * h), floor))
    return worst


def brute_force_multi_head(head_preds, f_b, f_r, d, lam, head_weights=(1.0, 1.0, 1.0, 1.0)):
    """Scalar-loop oracle for the four-head combined loss."""
    total = 0.0
    for (pb, pe), w in zip(head_preds, head_weights):
        n = len(pb)
        eb_sum = 0.0
        er_sum = 0.0
        for i in range(n):
            acc = 0.0
            for j in range(len(pb[i])):
                diff = pb[i][j] - f_b[i][j]
                acc += diff * diff
            eb_sum += acc / (2.0 * d[i] * d[i])
            acc = 0.0
            for j in range(len(pe[i])):
                diff = pe[i][j] - f_r[i][j]
                acc += diff * diff
            er_sum += acc / (2.0 * d[i] * d[i])
        total += w * (lam * eb_sum / n + (1.0 - lam) * er_sum / n)
    return total


def small_net(n_landmarks=16, channels=(4, 6, 8, 10), dtype=np.float64, seed=3,
              init_scale=0.01):
    cfg = N.NetworkConfig(n_landmarks=n_landmarks, principal_indices=tuple(range(12)),
                          block_channels=channels, init_scale=init_scale, seed=seed)
    net = N.build_network(cfg, dtype=dtype)
    N.init_parameters(net, seed)
    return net


def random_targets(cfg, n, rng):
    return L.SubsetTargets(rng.random((n, cfg.principal_width)),
                           rng.random((n, cfg.elaborate_width)),
                           rng.random(n) * 0.3 + 0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
