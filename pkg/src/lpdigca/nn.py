"""Minimal from-scratch neural network layers with exact reverse-mode gradients.

Everything is float64 numpy, deterministic for a fixed seed, and validated
against central finite differences in the test suite.  Layers expose their
trainable arrays through ``params``/``grads`` dicts; optimization works on
those references in place.
"""

from __future__ import annotations

import numpy as np


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Layer:
    """Base: trainable arrays in .params, matching accumulators in .grads."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def _register(self, **arrays):
        for name, value in arrays.items():
            self.params[name] = value
            self.grads[name] = np.zeros_like(value)

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0


class Dense(Layer):
    """Affine map y = x W^T + b over the last axis."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 scale: float | None = None):
        super().__init__()
        if scale is None:
            scale = np.sqrt(6.0 / n_in)
        self._register(
            W=rng.uniform(-scale, scale, size=(n_out, n_in)),
            b=np.zeros(n_out),
        )
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        self.grads["W"] += np.tensordot(
            dy.reshape(-1, dy.shape[-1]).T, x.reshape(-1, x.shape[-1]), axes=1)
        self.grads["b"] += dy.reshape(-1, dy.shape[-1]).sum(axis=0)
        return dy @ self.params["W"]


class SinActivation(Layer):
    """y = sin(w * x) with a trainable frequency scalar w."""

    def __init__(self, w0: float = 1.0):
        super().__init__()
        self._register(w=np.array(w0))
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return np.sin(self.params["w"] * x)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        w = self.params["w"]
        cos = np.cos(w * self._x)
        self.grads["w"] += np.sum(dy * self._x * cos)
        return dy * w * cos


class TanhActivation(Layer):
    def __init__(self):
        super().__init__()
        self._y = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * (1.0 - self._y**2)


class MLP(Layer):
    """Dense stack with sin or tanh hidden activations and a linear output."""

    def __init__(self, sizes: list[int], rng: np.random.Generator,
                 activation: str = "sin"):
        super().__init__()
        self.sizes = list(sizes)
        self.activation = activation
        self.layers: list[Layer] = []
        for k in range(len(sizes) - 1):
            self.layers.append(Dense(sizes[k], sizes[k + 1], rng))
            if k < len(sizes) - 2:
                if activation == "sin":
                    self.layers.append(SinActivation())
                elif activation == "tanh":
                    self.layers.append(TanhActivation())
                else:
                    raise ValueError(f"unknown activation {activation!r}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def sublayers(self) -> list[Layer]:
        return self.layers


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, one_hot: np.ndarray
                  ) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    p = softmax(logits)
    n = logits.shape[0]
    loss = -np.sum(one_hot * np.log(np.maximum(p, 1e-300))) / n
    return float(loss), (p - one_hot) / n


# ---------------------------------------------------------------------------
# Parameter-vector plumbing (Adam, finite-difference checks)

def collect_layers(root) -> list[Layer]:
    """Flatten a layer, an MLP, or a list thereof into leaf layers."""
    if isinstance(root, MLP):
        return list(root.layers)
    if isinstance(root, Layer):
        return [root]
    out = []
    for item in root:
        out.extend(collect_layers(item))
    return out


def named_params(layers) -> list[tuple[str, np.ndarray, np.ndarray]]:
    out = []
    for i, layer in enumerate(collect_layers(layers)):
        for name in sorted(layer.params):
            out.append((f"{i}.{name}", layer.params[name], layer.grads[name]))
    return out


def get_flat(layers) -> np.ndarray:
    return np.concatenate([p.ravel() for _, p, _ in named_params(layers)] or
                          [np.zeros(0)])


def set_flat(layers, vec: np.ndarray):
    pos = 0
    for _, p, _ in named_params(layers):
        p[...] = vec[pos:pos + p.size].reshape(p.shape)
        pos += p.size
    if pos != vec.size:
        raise ValueError("flat vector length mismatch")


def grad_flat(layers) -> np.ndarray:
    return np.concatenate([g.ravel() for _, _, g in named_params(layers)] or
                          [np.zeros(0)])


def zero_grads(layers):
    for layer in collect_layers(layers):
        layer.zero_grad()


class Adam:
    """Adam over the referenced parameter arrays, updating them in place."""

    def __init__(self, layers, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.entries = named_params(layers)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for _, p, _ in self.entries]
        self.v = [np.zeros_like(p) for _, p, _ in self.entries]

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for (_, p, g), m, v in zip(self.entries, self.m, self.v):
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
