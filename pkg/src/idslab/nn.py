"""Dense feed-forward networks with manual backpropagation.

Shared numeric kernel for the GAN, the PPO agent, and the MLP/logistic
baselines.  Everything is float64 and deterministic per seed; a net is a
plain value type that can be cloned and checkpointed bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DenseNet",
    "OptState",
    "init_net",
    "forward",
    "backward",
    "opt_step",
    "clip_global_norm",
    "save_checkpoint",
    "load_checkpoint",
]

ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "tanh", "linear", "softmax")
LEAKY_SLOPE = 0.2


def _act_forward(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "leaky_relu":
        return np.where(z > 0.0, z, LEAKY_SLOPE * z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "tanh":
        return np.tanh(z)
    if name == "linear":
        return z
    if name == "softmax":
        shifted = z - z.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)
    raise ValueError(f"unknown activation: {name!r}")


def _act_backward(name, z, out, grad):
    """Gradient w.r.t. pre-activation z, given grad w.r.t. activation output."""
    if name == "relu":
        return grad * (z > 0.0)
    if name == "leaky_relu":
        return grad * np.where(z > 0.0, 1.0, LEAKY_SLOPE)
    if name == "sigmoid":
        return grad * out * (1.0 - out)
    if name == "tanh":
        return grad * (1.0 - out * out)
    if name == "linear":
        return grad
    if name == "softmax":
        # full Jacobian product: s * (g - <g, s>)
        inner = (grad * out).sum(axis=-1, keepdims=True)
        return out * (grad - inner)
    raise ValueError(f"unknown activation: {name!r}")


@dataclass
class DenseNet:
    weights: list  # per layer: (in_dim, out_dim) float64
    biases: list  # per layer: (out_dim,) float64
    activations: list  # per layer name

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def in_dim(self):
        return self.weights[0].shape[0]

    @property
    def out_dim(self):
        return self.weights[-1].shape[1]

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        return DenseNet(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activations=list(self.activations),
        )

    def params(self):
        """Flattened view: alternating weight, bias arrays."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def init_net(layer_sizes, activations, seed):
    """He init for relu-family layers, Xavier for the rest; seeded."""
    if len(layer_sizes) < 2:
        raise ValueError("need at least input and output sizes")
    if len(activations) != len(layer_sizes) - 1:
        raise ValueError("one activation per layer required")
    if any(s <= 0 for s in layer_sizes):
        raise ValueError("layer sizes must be positive")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out, act in zip(layer_sizes, layer_sizes[1:], activations):
        if act not in ACTIVATIONS:
            raise ValueError(f"unknown activation: {act!r}")
        if act in ("relu", "leaky_relu"):
            std = np.sqrt(2.0 / fan_in)
        else:
            std = np.sqrt(1.0 / fan_in)
        weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNet(weights=weights, biases=biases, activations=list(activations))


def forward(net, batch):
    """Run the net; returns (outputs, tape) with tape feeding backward()."""
    x = np.asarray(batch, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != net.in_dim:
        raise ValueError(f"input dim {x.shape[1]} != net input {net.in_dim}")
    tape = []
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = x @ w + b
        out = _act_forward(act, z)
        tape.append((x, z, out))
        x = out
    return (x[0] if squeeze else x), tape


def backward(net, tape, output_gradient):
    """Backprop an upstream gradient; returns (param_grads, input_grad).

    param_grads is a list of (dW, db) per layer.  The input gradient is
    needed when chaining nets (generator through critic, trunk through heads).
    """
    grad = np.asarray(output_gradient, dtype=np.float64)
    if grad.ndim == 1:
        grad = grad[None, :]
    param_grads = [None] * net.n_layers
    for i in range(net.n_layers - 1, -1, -1):
        x, z, out = tape[i]
        if grad.shape != z.shape:
            raise ValueError(f"gradient shape {grad.shape} != layer output {z.shape}")
        dz = _act_backward(net.activations[i], z, out, grad)
        param_grads[i] = (x.T @ dz, dz.sum(axis=0))
        grad = dz @ net.weights[i].T
    return param_grads, grad


@dataclass
class OptState:
    algo: str  # "adam" or "rmsprop"
    lr: float
    m: list = field(default_factory=list)  # adam first moments
    v: list = field(default_factory=list)  # second moments
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    decay: float = 0.9  # rmsprop
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net, algo, lr):
        if algo not in ("adam", "rmsprop"):
            raise ValueError(f"unknown optimizer: {algo!r}")
        shapes = [(w.shape, b.shape) for w, b in zip(net.weights, net.biases)]
        m = [(np.zeros(ws), np.zeros(bs)) for ws, bs in shapes]
        v = [(np.zeros(ws), np.zeros(bs)) for ws, bs in shapes]
        return cls(algo=algo, lr=lr, m=m, v=v)


def opt_step(net, param_grads, state):
    """Apply one in-place optimizer update."""
    state.t += 1
    for i, (dw, db) in enumerate(param_grads):
        for j, (param, grad) in enumerate(((net.weights[i], dw), (net.biases[i], db))):
            if state.algo == "adam":
                m = state.m[i][j]
                v = state.v[i][j]
                m *= state.beta1
                m += (1.0 - state.beta1) * grad
                v *= state.beta2
                v += (1.0 - state.beta2) * grad * grad
                mhat = m / (1.0 - state.beta1**state.t)
                vhat = v / (1.0 - state.beta2**state.t)
                param -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
            else:  # rmsprop
                v = state.v[i][j]
                v *= state.decay
                v += (1.0 - state.decay) * grad * grad
                param -= state.lr * grad / (np.sqrt(v) + state.eps)


def clip_global_norm(grad_lists, max_norm):
    """Scale a collection of per-net gradient lists to a global norm cap."""
    total = 0.0
    for grads in grad_lists:
        for dw, db in grads:
            total += float((dw * dw).sum()) + float((db * db).sum())
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for grads in grad_lists:
            for dw, db in grads:
                dw *= scale
                db *= scale
    return norm


def save_checkpoint(net, path, meta=None):
    """Versioned npz checkpoint; bit-exact round-trip."""
    arrays = {}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    import json

    header = json.dumps(
        {
            "version": 1,
            "n_layers": net.n_layers,
            "activations": net.activations,
            "meta": meta or {},
        }
    )
    np.savez(path, header=np.frombuffer(header.encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path):
    import json

    with np.load(path) as z:
        header = json.loads(bytes(z["header"]).decode())
        if header.get("version") != 1:
            raise ValueError(f"unsupported checkpoint version: {header.get('version')}")
        n = header["n_layers"]
        net = DenseNet(
            weights=[z[f"w{i}"].copy() for i in range(n)],
            biases=[z[f"b{i}"].copy() for i in range(n)],
            activations=list(header["activations"]),
        )
    return net, header.get("meta", {})
