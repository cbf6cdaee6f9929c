"""The landmark regression network.

Topology: four blocks of conv-conv-pool (eight conv layers, each with
batch norm and ReLU), a supervisory head pair hanging off every pool,
and a 256-unit trunk before the final pair.  Heads 1-3 flatten their
pool maps straight into two split linear layers; head 4 goes pool ->
trunk -> split layers.  No ReLU on the trunk output or any head output.
Each head pair predicts the principal-subset coordinates and the
remaining (elaborate) coordinates, crop-normalized to [0, 1].
"""

import json
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, UsageError


@dataclass(frozen=True)
class NetworkConfig:
    n_landmarks: int
    principal_indices: tuple
    input_size: tuple = (50, 50, 3)  # (H, W, channels)
    block_channels: tuple = (32, 64, 128, 256)
    conv_kernel: tuple = (3, 3, 1, 1)  # (kh, kw, stride, padding)
    fc_units: int = 256
    init_scale: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.n_landmarks, int) or self.n_landmarks < 1:
            raise ConfigurationError("n_landmarks must be a positive integer, got %r"
                                     % (self.n_landmarks,))
        idx = tuple(sorted(self.principal_indices))
        if len(idx) == 0:
            raise ConfigurationError("principal_indices must not be empty")
        if len(set(idx)) != len(idx):
            raise ConfigurationError("principal_indices contains duplicates: %r" % (idx,))
        if idx[0] < 0 or idx[-1] >= self.n_landmarks:
            raise ConfigurationError("principal_indices out of range [0, %d): %r"
                                     % (self.n_landmarks, idx))
        object.__setattr__(self, "principal_indices", idx)
        if len(self.input_size) != 3 or any(int(v) < 1 for v in self.input_size):
            raise ConfigurationError("input_size must be (H, W, channels) of positive ints, "
                                     "got %r" % (self.input_size,))
        h, w, _ = self.input_size
        if h < 16 or w < 16:
            raise ConfigurationError("input_size spatial extent must be >= 16 to survive "
                                     "four pool halvings, got %dx%d" % (h, w))
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        if len(self.block_channels) != 4 or any(int(c) < 1 for c in self.block_channels):
            raise ConfigurationError("block_channels must be 4 positive ints, got %r"
                                     % (self.block_channels,))
        object.__setattr__(self, "block_channels", tuple(int(c) for c in self.block_channels))
        kh, kw, s, p = self.conv_kernel
        if kh < 1 or kw < 1 or s < 1 or p < 0:
            raise ConfigurationError("conv_kernel must be (kh>=1, kw>=1, stride>=1, pad>=0), "
                                     "got %r" % (self.conv_kernel,))
        object.__setattr__(self, "conv_kernel", (int(kh), int(kw), int(s), int(p)))
        if self.fc_units < 1:
            raise ConfigurationError("fc_units must be positive, got %r" % (self.fc_units,))
        if self.init_scale < 0:
            raise ConfigurationError("init_scale must be >= 0, got %r" % (self.init_scale,))
        # every pool output needs spatial extent >= 1
        for ph, pw in self.pool_sides():
            if ph < 1 or pw < 1:
                raise ConfigurationError("input_size %r collapses below 1 px before the "
                                         "last pool" % (self.input_size,))

    @property
    def n_principal(self):
        return len(self.principal_indices)

    @property
    def elaborate_indices(self):
        pset = set(self.principal_indices)
        return tuple(i for i in range(self.n_landmarks) if i not in pset)

    @property
    def principal_width(self):
        return 2 * self.n_principal

    @property
    def elaborate_width(self):
        return 2 * (self.n_landmarks - self.n_principal)

    def _conv_side(self, side):
        kh, kw, s, p = self.conv_kernel
        out = (side + 2 * p - kh) // s + 1
        if out < 1:
            raise ConfigurationError("conv_kernel %r shrinks a side of %d below 1"
                                     % (self.conv_kernel, side))
        return out

    def pool_sides(self):
        """(h, w) after each of the four conv-conv-pool blocks."""
        h, w, _ = self.input_size
        sides = []
        for _ in range(4):
            h = self._conv_side(self._conv_side(h)) // 2
            w = self._conv_side(self._conv_side(w)) // 2
            sides.append((h, w))
        return sides

    def head_input_dims(self):
        return [c * h * w for c, (h, w) in zip(self.block_channels, self.pool_sides())]

    def to_dict(self):
        return {
            "n_landmarks": self.n_landmarks,
            "principal_indices": list(self.principal_indices),
            "input_size": list(self.input_size),
            "block_channels": list(self.block_channels),
            "conv_kernel": list(self.conv_kernel),
            "fc_units": self.fc_units,
            "init_scale": self.init_scale,
            "seed": self.seed,
        }


_CONFIG_KEYS = ("n_landmarks", "principal_indices", "input_size", "block_channels",
                "conv_kernel", "fc_units", "init_scale", "seed")


def config_from_dict(d):
    unknown = set(d) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigurationError("unknown network config keys: %s" % ", ".join(sorted(unknown)))
    missing = {"n_landmarks", "principal_indices"} - set(d)
    if missing:
        raise ConfigurationError("network config missing required keys: %s"
                                 % ", ".join(sorted(missing)))
    kwargs = dict(d)
    kwargs["principal_indices"] = tuple(kwargs["principal_indices"])
    for key in ("input_size", "block_channels", "conv_kernel"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return NetworkConfig(**kwargs)


def load_config(path):
    """Read a NetworkConfig from a JSON file; unknown keys are rejected."""
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError("cannot read network config %s: %s" % (path, exc))
    if not isinstance(raw, dict):
        raise ConfigurationError("network config %s must be a JSON object" % path)
    return config_from_dict(raw)


def save_config(config, path):
    with open(path, "w") as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


class AlignmentNet:
    """Parameter container for the topology above.

    params maps name -> Tensor in a fixed insertion order (conv1..conv8
    with their bn scales, the four head pairs, then the trunk); bn holds
    the eight BatchNormState objects in layer order.
    """

    def __init__(self, config, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params = {}
        self.bn = []

        kh, kw, _, _ = config.conv_kernel
        in_c = config.input_size[2]
        li = 0
        for b, out_c in enumerate(config.block_channels):
            for _ in range(2):
                li += 1
                self._add("conv%d.weight" % li, (out_c, in_c, kh, kw))
                self._add("conv%d.bias" % li, (out_c,))
                state = T.BatchNormState(out_c, dtype=self.dtype)
                self.bn.append(state)
                self.params["bn%d.gamma" % li] = state.gamma
                self.params["bn%d.beta" % li] = state.beta
                in_c = out_c

        dims = config.head_input_dims()
        pw, ew = config.principal_width, config.elaborate_width
        for j in range(1, 4):
            self._add("head%d.principal.weight" % j, (pw, dims[j - 1]))
            self._add("head%d.principal.bias" % j, (pw,))
            self._add("head%d.elaborate.weight" % j, (ew, dims[j - 1]))
            self._add("head%d.elaborate.bias" % j, (ew,))
        self._add("trunk.weight", (config.fc_units, dims[3]))
        self._add("trunk.bias", (config.fc_units,))
        self._add("head4.principal.weight", (pw, config.fc_units))
        self._add("head4.principal.bias", (pw,))
        self._add("head4.elaborate.weight", (ew, config.fc_units))
        self._add("head4.elaborate.bias", (ew,))

    def _add(self, name, shape):
        self.params[name] = T.Tensor(np.zeros(shape, dtype=self.dtype), requires_grad=True)

    def parameters(self):
        return list(self.params.items())

    def running_stats(self):
        out = {}
        for i, state in enumerate(self.bn, start=1):
            out["bn%d.running_mean" % i] = state.running_mean
            out["bn%d.running_var" % i] = state.running_var
        return out

    @property
    def n_parameters(self):
        return sum(t.size for t in self.params.values())

    def zero_grad(self):
        for t in self.params.values():
            t.zero_grad()

    def state_dict(self):
        """name -> array snapshot (parameters + running statistics)."""
        out = {name: t.data.copy() for name, t in self.params.items()}
        for name, arr in self.running_stats().items():
            out[name] = arr.copy()
        return out

    def load_state_dict(self, entries):
        expected = {name: t.data.shape for name, t in self.params.items()}
        expected.update({name: arr.shape for name, arr in self.running_stats().items()})
        if set(entries) != set(expected):
            missing = sorted(set(expected) - set(entries))
            extra = sorted(set(entries) - set(expected))
            raise ConfigurationError("checkpoint does not match network: missing %s, extra %s"
                                     % (missing, extra))
        for name, arr in entries.items():
            if arr.shape != expected[name]:
                raise ConfigurationError("checkpoint entry %s has shape %s, expected %s"
                                         % (name, arr.shape, expected[name]))
        for name, t in self.params.items():
            t.data[...] = entries[name].astype(self.dtype)
        for name, arr in self.running_stats().items():
            arr[...] = entries[name].astype(arr.dtype)


def build_network(config, dtype=np.float32):
    """Allocate an AlignmentNet; parameter shapes follow purely from config."""
    return AlignmentNet(config, dtype=dtype)


def init_parameters(net, seed):
    """Gaussian-init the weights (N(0,1) * init_scale), zero the biases,
    reset batch-norm to identity.  Same seed gives bit-identical values."""
    rng = np.random.default_rng(seed)
    scale = net.config.init_scale
    for name, t in net.params.items():
        if name.endswith(".weight"):
            t.data[...] = rng.standard_normal(t.data.shape, dtype=net.dtype) * net.dtype.type(scale)
        elif name.endswith(".gamma"):
            t.data[...] = 1
        else:  # biases and betas
            t.data[...] = 0
        t.zero_grad()
    for state in net.bn:
        state.reset_running()


def forward(net, batch, mode="train"):
    """Run the network; returns the four head pairs in pool order.

    batch is a Tensor (N, channels, H, W) matching the config.  Only the
    fourth pair is the prediction; pairs 1-3 exist for supervision.
    """
    if mode not in ("train", "infer"):
        raise UsageError("mode must be 'train' or 'infer', got %r" % (mode,))
    if not isinstance(batch, T.Tensor):
        batch = T.Tensor(batch)
    h, w, c = net.config.input_size
    if batch.data.ndim != 4 or batch.shape[1:] != (c, h, w):
        raise UsageError("input batch must have shape (N, %d, %d, %d), got %s"
                         % (c, h, w, batch.shape))
    if mode == "train" and batch.shape[0] < 2:
        raise ConfigurationError("train-mode forward needs a batch of >= 2 samples "
                                 "(batch statistics), got %d" % batch.shape[0])

    _, _, stride, pad = net.config.conv_kernel
    for state in net.bn:
        state.mode = mode

    p = net.params
    x = batch
    pairs = []
    li = 0
    for b in range(4):
        for _ in range(2):
            li += 1
            x = T.conv2d(x, p["conv%d.weight" % li], p["conv%d.bias" % li],
                         stride=stride, padding=pad)
            x = T.batch_norm(x, net.bn[li - 1])
            x = T.relu(x)
        x = T.maxpool2(x)
        flat = T.flatten(x)
        if b < 3:
            j = b + 1
            pb = T.fully_connected(flat, p["head%d.principal.weight" % j],
                                   p["head%d.principal.bias" % j])
            pe = T.fully_connected(flat, p["head%d.elaborate.weight" % j],
                                   p["head%d.elaborate.bias" % j])
        else:
            trunk = T.fully_connected(flat, p["trunk.weight"], p["trunk.bias"])
            pb = T.fully_connected(trunk, p["head4.principal.weight"],
                                   p["head4.principal.bias"])
            pe = T.fully_connected(trunk, p["head4.elaborate.weight"],
                                   p["head4.elaborate.bias"])
        pairs.append((pb, pe))
    return pairs
