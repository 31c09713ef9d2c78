"""Dense feed-forward networks with explicit backprop, plus SGD/Adam and a
deterministic counter-based random stream.

Gradients are computed by a per-layer tape rather than a general autodiff
graph; the only things the training loops need are vector-Jacobian products
with respect to parameters and inputs.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Rng",
    "Mlp",
    "mlp_init",
    "sgd_step",
    "AdamState",
    "adam_step",
    "save_mlp",
    "load_mlp",
    "NumericalError",
    "ACTIVATIONS",
]


class NumericalError(RuntimeError):
    """Raised when a forward pass or an update produces non-finite values."""


# ---------------------------------------------------------------------------
# random stream
# ---------------------------------------------------------------------------

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_MASK = (1 << 64) - 1


def _mix64(z):
    """splitmix64 finalizer on a uint64 array."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class Rng:
    """Counter-based generator: output i is splitmix64 of seed + i*gamma.

    The stream is a pure function of (seed, counter), so identical seeds give
    identical streams on any platform; there is no hidden global state.
    Gaussians come from Box-Muller applied to consecutive 53-bit uniforms.
    """

    def __init__(self, seed):
        self._seed = np.uint64(int(seed) & _U64_MASK)
        self._counter = 0

    def u64(self, n):
        """Next n raw 64-bit outputs."""
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        return _mix64(self._seed + idx * _GAMMA)

    def uniform(self, size=None):
        """Uniforms in [0, 1) with 53-bit resolution."""
        n = 1 if size is None else int(np.prod(size))
        u = (self.u64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        if size is None:
            return float(u[0])
        return u.reshape(size)

    def normal(self, size=None):
        """Standard normals via Box-Muller on uniform pairs."""
        n = 1 if size is None else int(np.prod(size))
        m = (n + 1) // 2
        # u1 in (0, 1] so log is finite
        raw = self.u64(2 * m)
        u1 = ((raw[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)
        u2 = (raw[m:] >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def integers(self, lo, hi, size=None):
        """Integers in [lo, hi); modulo bias is < range/2**64 and ignored."""
        n = 1 if size is None else int(np.prod(size))
        span = np.uint64(hi - lo)
        vals = (self.u64(n) % span).astype(np.int64) + lo
        if size is None:
            return int(vals[0])
        return vals.reshape(size)

    def choice_without_replacement(self, n, k):
        """k distinct indices from range(n) by partial Fisher-Yates."""
        pool = np.arange(n)
        for i in range(k):
            j = self.integers(i, n)
            pool[i], pool[j] = pool[j], pool[i]
        return np.sort(pool[:k])

    def split(self, key):
        """Independent substream derived from (seed, key)."""
        child = _mix64(np.atleast_1d(self._seed ^ _mix64(np.atleast_1d(np.uint64(key)))[0]))[0]
        return Rng(int(child))


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")
_ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}


def _act_forward(name, z):
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        # stable branch form
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    raise ValueError(f"unknown activation {name!r}")


def _act_deriv(name, z, a):
    """Derivative from pre-activation z and output a. relu' at 0 is 0."""
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {name!r}")


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------


class Mlp:
    """Affine layers with elementwise activations.

    weights[k] has shape (out_k, in_k), biases[k] shape (out_k,). Input can be
    a single vector (d,) or a batch (n, d); parameter gradients returned by
    backward are summed over the batch.
    """

    def __init__(self, weights, biases, acts):
        if not (len(weights) == len(biases) == len(acts)):
            raise ValueError("layer lists must have equal length")
        for k in range(len(weights) - 1):
            if weights[k + 1].shape[1] != weights[k].shape[0]:
                raise ValueError(
                    f"layer {k} outputs {weights[k].shape[0]} units but layer "
                    f"{k + 1} expects {weights[k + 1].shape[1]}"
                )
        for name in acts:
            if name not in ACTIVATIONS:
                raise ValueError(f"unknown activation {name!r}")
        self.weights = [np.asarray(W, dtype=np.float64) for W in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.acts = list(acts)

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    @property
    def dims(self):
        return [self.in_dim] + [W.shape[0] for W in self.weights]

    def params(self):
        """Live parameter references, alternating W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.append(W)
            out.append(b)
        return out

    def forward(self, x):
        """Return (output, tape). The tape caches one backward pass worth of
        per-layer inputs and pre-activations."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[1] != self.in_dim:
            raise ValueError(f"input dim {a.shape[1]} != network in_dim {self.in_dim}")
        inputs, preacts, outputs = [], [], []
        for W, b, act in zip(self.weights, self.biases, self.acts):
            inputs.append(a)
            z = a @ W.T + b
            a = _act_forward(act, z)
            preacts.append(z)
            outputs.append(a)
        if not np.all(np.isfinite(a)):
            raise NumericalError(
                f"non-finite forward output (max |preact| = {np.abs(preacts[-1]).max():.3e})"
            )
        tape = (single, inputs, preacts, outputs)
        return (a[0] if single else a), tape

    def backward(self, tape, dy):
        """Exact reverse-mode gradients of <dy, output>.

        Returns (grads, dx) where grads alternates dW, db in params() order,
        summed over the batch, and dx matches the forward input shape.
        """
        single, inputs, preacts, outputs = tape
        dy = np.asarray(dy, dtype=np.float64)
        delta = dy[None, :] if single else dy
        if delta.shape != outputs[-1].shape:
            raise ValueError(
                f"dy shape {delta.shape} does not match output {outputs[-1].shape}"
            )
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            delta = delta * _act_deriv(self.acts[k], preacts[k], outputs[k])
            grads[2 * k] = delta.T @ inputs[k]
            grads[2 * k + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[k]
        dx = delta[0] if single else delta
        return grads, dx

    def copy(self):
        return Mlp(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            list(self.acts),
        )


def mlp_init(dims, acts, rng, scale=1.0):
    """Weights ~ N(0, scale^2 / fan_in) drawn layer by layer, biases zero."""
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    if len(acts) != len(dims) - 1:
        raise ValueError(f"{len(dims) - 1} layers but {len(acts)} activations")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        std = scale / np.sqrt(fan_in)
        weights.append(rng.normal((fan_out, fan_in)) * std)
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases, acts)


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------


def _check_finite_params(params, context=""):
    for p in params:
        if not np.all(np.isfinite(p)):
            raise NumericalError(f"non-finite parameter after update {context}")


def sgd_step(params, grads, eta):
    """p <- p - eta * g, in place. Returns params for convenience."""
    if len(params) != len(grads):
        raise ValueError("params/grads length mismatch")
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise ValueError(f"shape mismatch {p.shape} vs {np.shape(g)}")
        p -= eta * g
    _check_finite_params(params, "(sgd)")
    return params


@dataclass
class AdamState:
    """First/second moment accumulators shaped like the parameters."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            step=0,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(params, grads, state, eta):
    """Standard bias-corrected Adam update, in place on params and state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != np.shape(g):
            raise ValueError(f"shape mismatch {p.shape} vs {np.shape(g)}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= eta * (m / c1) / (np.sqrt(v / c2) + state.eps)
    _check_finite_params(params, "(adam)")
    return params, state


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------
#
# Byte layout, all little-endian:
#   offset 0   : 8-byte magic b"MLPCKPT\0"
#   offset 8   : u32 version (currently 1)
#   offset 12  : u32 layer count L
#   offset 16  : (L+1) * u32 dims
#   ...        : L * u8 activation codes (index into ACTIVATIONS)
#   ...        : parameter block, float64: for each layer, W row-major
#                (out x in) then b (out)

_MAGIC = b"MLPCKPT\0"
_CKPT_VERSION = 1


def save_mlp(net, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        header = np.array([_CKPT_VERSION, len(net.weights)], dtype="<u4")
        fh.write(header.tobytes())
        fh.write(np.asarray(net.dims, dtype="<u4").tobytes())
        fh.write(bytes(_ACT_CODES[a] for a in net.acts))
        for W, b in zip(net.weights, net.biases):
            fh.write(W.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())


def load_mlp(path):
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        version, n_layers = np.frombuffer(fh.read(8), dtype="<u4")
        if version != _CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        dims = np.frombuffer(fh.read(4 * (n_layers + 1)), dtype="<u4").astype(int)
        codes = fh.read(int(n_layers))
        acts = [ACTIVATIONS[c] for c in codes]
        weights, biases = [], []
        for k in range(int(n_layers)):
            fan_in, fan_out = int(dims[k]), int(dims[k + 1])
            W = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype="<f8")
            weights.append(W.reshape(fan_out, fan_in).copy())
            biases.append(np.frombuffer(fh.read(8 * fan_out), dtype="<f8").copy())
    return Mlp(weights, biases, acts)
