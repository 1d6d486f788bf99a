"""One-vs-rest linear SVM trained by mini-batch subgradient descent on the hinge loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import softmax


@dataclass
class LinearSVMNet:
    coef: np.ndarray       # (n_features, n_classes)
    intercept: np.ndarray  # (n_classes,)

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(x) @ self.coef + self.intercept

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.decision_function(x))


def fit_linear_svm(x: np.ndarray, y: np.ndarray, n_classes: int, C: float, epochs: int,
                   batch_size: int, learning_rate: float, seed: int) -> LinearSVMNet:
    """Minimise ``0.5*||w||^2 / (C*n) + mean hinge`` per class, jointly for all classes.

    Returns the average of the per-epoch iterates over the second half of training,
    which damps the oscillation of plain subgradient steps.
    """
    n, d = x.shape
    rng = np.random.default_rng(seed)
    lam = 1.0 / (C * n)
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    targets = np.where(np.eye(n_classes, dtype=bool)[y], 1.0, -1.0)
    w_avg, b_avg, n_avg = np.zeros_like(w), np.zeros_like(b), 0
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            t = targets[idx]
            margin = t * (x[idx] @ w + b)
            active = (margin < 1.0) * t
            step += 1
            lr = learning_rate / np.sqrt(step)
            gw = lam * w - x[idx].T @ active / idx.size
            gb = -active.sum(axis=0) / idx.size
            w -= lr * gw
            b -= lr * gb
        if epoch >= epochs // 2:
            w_avg += w
            b_avg += b
            n_avg += 1
    return LinearSVMNet(w_avg / n_avg, b_avg / n_avg)
