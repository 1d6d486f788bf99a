"""Dense ReLU network with softmax output, trained with Adam on cross-entropy.

Besides prediction this exposes the backward passes the gradient-based
attribution methods need: the plain input gradient of a class logit and the
DeconvNet-style pass, where each ReLU forwards only positive upstream signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class MLPNet:
    weights: list[np.ndarray]  # weights[i] has shape (fan_in, fan_out)
    biases: list[np.ndarray]

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    def _forward(self, x: np.ndarray):
        """Return (logits, pre-activations of each hidden layer)."""
        h = x
        pre = []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0)
        return h @ self.weights[-1] + self.biases[-1], pre

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self._forward(np.atleast_2d(x))[0]

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x))

    def logit_gradient(self, x: np.ndarray, cls: int, rule: str = "gradient") -> np.ndarray:
        """d logit[cls] / d x for every row of ``x``.

        ``rule="deconvnet"`` replaces the ReLU backward step ``g * (z > 0)`` by
        ``max(g, 0)``, which ignores the forward activation pattern.
        """
        x = np.atleast_2d(x)
        _, pre = self._forward(x)
        g = np.broadcast_to(self.weights[-1][:, cls], (x.shape[0], self.weights[-1].shape[0])).copy()
        for i in range(len(pre) - 1, -1, -1):
            if rule == "gradient":
                g = g * (pre[i] > 0)
            elif rule == "deconvnet":
                g = np.maximum(g, 0.0)
            else:
                raise ValueError(f"unknown backward rule {rule!r}")
            g = g @ self.weights[i].T
        return g

    @classmethod
    def init(cls, layer_sizes: list[int], rng: np.random.Generator) -> "MLPNet":
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))  # Glorot uniform
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)


def fit_mlp(x: np.ndarray, y: np.ndarray, n_classes: int, hidden: list[int], dropout: float,
            epochs: int, batch_size: int, learning_rate: float, seed: int) -> MLPNet:
    rng = np.random.default_rng(seed)
    net = MLPNet.init([x.shape[1], *hidden, n_classes], rng)
    params = net.weights + net.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-7
    onehot = np.eye(n_classes)[y]
    n = x.shape[0]
    step = 0
    n_hidden = len(hidden)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb, tb = x[idx], onehot[idx]
            # forward with inverted dropout on hidden activations
            acts, pre, masks = [xb], [], []
            h = xb
            for i in range(n_hidden):
                z = h @ net.weights[i] + net.biases[i]
                pre.append(z)
                h = np.maximum(z, 0.0)
                if dropout > 0:
                    mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
                    h = h * mask
                else:
                    mask = None
                masks.append(mask)
                acts.append(h)
            probs = softmax(h @ net.weights[-1] + net.biases[-1])
            g = (probs - tb) / xb.shape[0]
            grads_w = [None] * len(net.weights)
            grads_b = [None] * len(net.biases)
            for i in range(n_hidden, -1, -1):
                grads_w[i] = acts[i].T @ g
                grads_b[i] = g.sum(axis=0)
                if i > 0:
                    g = g @ net.weights[i].T
                    if masks[i - 1] is not None:
                        g = g * masks[i - 1]
                    g = g * (pre[i - 1] > 0)
            step += 1
            lr_t = learning_rate * np.sqrt(1 - beta2 ** step) / (1 - beta1 ** step)
            for j, (p, gr) in enumerate(zip(params, grads_w + grads_b)):
                m[j] = beta1 * m[j] + (1 - beta1) * gr
                v[j] = beta2 * v[j] + (1 - beta2) * gr * gr
                p -= lr_t * m[j] / (np.sqrt(v[j]) + eps)
    return net
