"""Minimal self-contained neural substrate: MLP, Adam, checkpoints.

No autograd framework; forward passes cache activations and backward passes
produce parameter gradients explicitly, so they can be verified against
finite differences.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import CheckpointError, ConfigError

_ACT_CODES = {"relu": 0, "tanh": 1}
_HEAD_CODES = {"linear": 0, "gaussian": 1}

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


class Mlp:
    """Fully connected network with relu/tanh hidden layers.

    head "linear" leaves the last layer raw; head "gaussian" means the last
    layer's output is interpreted as [mean, log_std] halves by the policy
    code (layout only; the network itself stays linear in its output).
    """

    def __init__(self, dims, hidden_activation="relu", head="linear",
                 rng=None, name=""):
        if len(dims) < 2:
            raise ConfigError("need at least input and output dims")
        if hidden_activation not in _ACT_CODES:
            raise ConfigError(f"unknown activation {hidden_activation!r}")
        if head not in _HEAD_CODES:
            raise ConfigError(f"unknown head {head!r}")
        if head == "gaussian" and dims[-1] % 2 != 0:
            raise ConfigError("gaussian head needs an even output width")
        self.dims = list(int(d) for d in dims)
        self.hidden_activation = hidden_activation
        self.head = head
        self.name = name
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            if hidden_activation == "relu":
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out))
            else:
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-bound, bound, (fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @property
    def parameters(self):
        """Flat list alternating weight and bias arrays (live references)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters)

    def _act(self, z):
        if self.hidden_activation == "relu":
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def _act_grad(self, z, a):
        if self.hidden_activation == "relu":
            return (z > 0.0).astype(np.float64)
        return 1.0 - a * a

    def forward(self, x, want_cache=False):
        """Run the network on a (batch, in_dim) array.

        With want_cache=True also returns the cache backward() needs.
        """
        a = np.asarray(x, dtype=np.float64)
        if a.ndim == 1:
            a = a[None, :]
        cache = []
        n_layers = len(self.weights)
        for k in range(n_layers):
            z = a @ self.weights[k] + self.biases[k]
            if k < n_layers - 1:
                a_next = self._act(z)
            else:
                a_next = z
            cache.append((a, z, a_next))
            a = a_next
        return (a, cache) if want_cache else a

    def backward(self, cache, grad_out):
        """Parameter gradients for d(loss)/d(output) = grad_out.

        Returns a list aligned with self.parameters.
        """
        g = np.asarray(grad_out, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for k in range(len(self.weights) - 1, -1, -1):
            a_prev, z, a_out = cache[k]
            if k < len(self.weights) - 1:
                g = g * self._act_grad(z, a_out)
            grads_w[k] = a_prev.T @ g
            grads_b[k] = np.sum(g, axis=0)
            if k > 0:
                g = g @ self.weights[k].T
        out = []
        for gw, gb in zip(grads_w, grads_b):
            out.append(gw)
            out.append(gb)
        return out

    def copy(self) -> "Mlp":
        clone = Mlp(self.dims, self.hidden_activation, self.head,
                    rng=np.random.default_rng(0), name=self.name)
        for p_dst, p_src in zip(clone.parameters, self.parameters):
            p_dst[...] = p_src
        return clone


def adam_step(param, grad, m, v, t: int, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One Adam update with bias correction; returns (param, m, v).

    t is the 1-based step count.  Arrays are updated in place and returned.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * np.square(grad)
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, m, v


class Adam:
    """Adam over a list of parameter arrays (updated in place)."""

    def __init__(self, parameters, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.parameters = list(parameters)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.parameters]
        self.v = [np.zeros_like(p) for p in self.parameters]

    def step(self, grads):
        self.t += 1
        for p, g, m, v in zip(self.parameters, grads, self.m, self.v):
            adam_step(p, g, m, v, self.t, self.lr, self.beta1, self.beta2,
                      self.eps)


def soft_update(target: Mlp, online: Mlp, tau: float):
    """Polyak averaging: target <- (1 - tau) * target + tau * online."""
    for pt, po in zip(target.parameters, online.parameters):
        pt *= 1.0 - tau
        pt += tau * po


# -- Gaussian policy head helpers -------------------------------------------


def split_gaussian(out):
    """Split a gaussian-head output into (mean, clamped log_std)."""
    k = out.shape[-1] // 2
    mean = out[..., :k]
    log_std = np.clip(out[..., k:], LOG_STD_MIN, LOG_STD_MAX)
    return mean, log_std


def gaussian_sample(mean, log_std, rng):
    return mean + np.exp(log_std) * rng.standard_normal(mean.shape)


def gaussian_logprob(mean, log_std, sample):
    """Row-wise log density of a diagonal Gaussian."""
    z = (sample - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * np.log(2.0 * np.pi), axis=-1)


def gaussian_logprob_grads(mean, log_std, sample):
    """d logprob / d mean and d logprob / d log_std, elementwise."""
    inv_var = np.exp(-2.0 * log_std)
    diff = sample - mean
    d_mean = diff * inv_var
    d_log_std = diff * diff * inv_var - 1.0
    return d_mean, d_log_std


# -- checkpoints -------------------------------------------------------------

_MAGIC = b"TXNC"
_VERSION = 1


def save_checkpoint(path, nets: dict):
    """Write named networks to a versioned binary checkpoint.

    Layout: magic, version, net count; per net a header (name, dims,
    activation, head) followed by row-major little-endian float64 weight
    and bias arrays in layer order.
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(nets)))
        for name, net in nets.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", len(net.dims)))
            fh.write(struct.pack(f"<{len(net.dims)}I", *net.dims))
            fh.write(struct.pack("<BB", _ACT_CODES[net.hidden_activation],
                                 _HEAD_CODES[net.head]))
            for w, b in zip(net.weights, net.biases):
                fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> dict:
    """Read a checkpoint written by save_checkpoint; returns {name: Mlp}."""
    act_names = {v: k for k, v in _ACT_CODES.items()}
    head_names = {v: k for k, v in _HEAD_CODES.items()}
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise CheckpointError("bad magic bytes; not a checkpoint file")
        version, count = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        nets = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (n_dims,) = struct.unpack("<I", fh.read(4))
            dims = struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims))
            act_code, head_code = struct.unpack("<BB", fh.read(2))
            if act_code not in act_names or head_code not in head_names:
                raise CheckpointError("unknown activation or head code")
            net = Mlp(dims, act_names[act_code], head_names[head_code],
                      rng=np.random.default_rng(0), name=name)
            for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
                w = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype="<f8")
                if w.size != fan_in * fan_out:
                    raise CheckpointError("truncated checkpoint")
                net.weights[k] = w.reshape(fan_in, fan_out).copy()
                b = np.frombuffer(fh.read(8 * fan_out), dtype="<f8")
                if b.size != fan_out:
                    raise CheckpointError("truncated checkpoint")
                net.biases[k] = b.copy()
            nets[name] = net
    return nets
