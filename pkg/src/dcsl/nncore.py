"""Small dense network engine: layers, forward/backward passes and Adam.

Everything is float64 numpy. The network is a chain of dense layers whose
last layer is linear (its output is the logit vector); the activation that
feeds the last layer is the "deep feature" on which centers live.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dcsl.errors import RejectedInputError, TrainingDivergenceError

ACTIVATIONS = ("relu", "identity")


def as_matrix(x, name="input", cols=None) -> np.ndarray:
    """Coerce to a finite 2-D float64 array, raising RejectedInputError otherwise."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise RejectedInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if cols is not None and arr.shape[1] != cols:
        raise RejectedInputError(f"{name} has {arr.shape[1]} columns, expected {cols}")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{name} contains non-finite values")
    return arr


@dataclass
class DenseLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "relu"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2:
            raise RejectedInputError("layer weights must be 2-D")
        if self.bias.shape[0] != self.weights.shape[1]:
            raise RejectedInputError(
                f"bias length {self.bias.shape[0]} != out_dim {self.weights.shape[1]}"
            )
        if self.activation not in ACTIVATIONS:
            raise RejectedInputError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]


@dataclass
class Network:
    layers: list[DenseLayer]

    def __post_init__(self):
        if not self.layers:
            raise RejectedInputError("network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise RejectedInputError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        if self.layers[-1].activation != "identity":
            raise RejectedInputError("the output layer must have identity activation")

    @property
    def feature_layer_index(self) -> int:
        # -1 means a single-layer net whose "features" are its raw inputs
        return len(self.layers) - 2

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def feature_dim(self) -> int:
        return self.layers[-1].in_dim

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.bias))
        return out

    def copy(self) -> "Network":
        return Network([DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers])


def build_network(in_dim, n_classes, hidden=(32,), feature_dim=2, feature_activation="identity",
                  seed=0) -> Network:
    """Dense stack ``in_dim -> hidden... -> feature_dim -> n_classes``.

    Weights are drawn uniformly from ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``; biases start at zero.
    """
    rng = np.random.default_rng(seed)
    dims = [in_dim, *hidden, feature_dim, n_classes]
    acts = ["relu"] * len(hidden) + [feature_activation, "identity"]
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], acts):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return Network(layers)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activation output of each layer


def _activate(z, act):
    if act == "relu":
        return np.maximum(z, 0.0)
    return z


def forward(net: Network, batch):
    """Return ``(features, logits, cache)`` for a batch of row vectors."""
    x = as_matrix(batch, "batch", cols=net.in_dim)
    inputs, pre = [], []
    a = x
    # overflow surfaces as non-finite outputs, which the trainer reports as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        for layer in net.layers:
            inputs.append(a)
            z = a @ layer.weights + layer.bias
            pre.append(z)
            a = _activate(z, layer.activation)
    features = inputs[-1]
    return features, a, ForwardCache(inputs, pre)


def backward(net: Network, cache: ForwardCache, grad_logits, grad_features):
    """Backpropagate; returns gradients in ``net.parameters()`` order.

    ``grad_features`` is added to whatever flows back from the logits into the
    feature activation (the input of the output layer).
    """
    m = cache.inputs[0].shape[0]
    g = np.asarray(grad_logits, dtype=np.float64)
    gf = np.asarray(grad_features, dtype=np.float64)
    if g.shape != (m, net.n_classes):
        raise RejectedInputError(f"grad_logits shape {g.shape} != {(m, net.n_classes)}")
    if gf.shape != (m, net.feature_dim):
        raise RejectedInputError(f"grad_features shape {gf.shape} != {(m, net.feature_dim)}")
    if len(cache.inputs) != len(net.layers):
        raise RejectedInputError("cache does not belong to this network")

    grads: list[np.ndarray] = [None] * (2 * len(net.layers))  # type: ignore[list-item]
    delta = g  # gradient w.r.t. the pre-activation of the current layer
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        a_in = cache.inputs[k]
        grads[2 * k] = a_in.T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k == 0:
            break
        g_act = delta @ layer.weights.T
        if k == len(net.layers) - 1:
            g_act = g_act + gf
        prev = net.layers[k - 1]
        if prev.activation == "relu":
            g_act = g_act * (cache.pre[k - 1] > 0.0)
        delta = g_act
    return grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    @classmethod
    def for_params(cls, params, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params, grads, state: AdamState, lr=1e-3):
    """One Adam update, applied in place. Returns ``(params, state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise RejectedInputError("params, grads and optimizer state differ in length")
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise RejectedInputError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError("non-finite gradient in optimizer step")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state
