"""Gradient-based attributions for differentiable (MLP) models.

All targets are the pre-softmax logit of the requested class. Every function
accepts a single input vector or a matrix of inputs (one attribution row per
input row) and returns the same rank.
"""

from __future__ import annotations

import numpy as np

from ..errors import CapabilityError, ShapeError


def _grad(m, x, cls, rule="gradient"):
    if not getattr(m, "differentiable", False):
        raise CapabilityError(f"{getattr(m, 'kind', type(m).__name__)} does not expose input gradients")
    return m.input_gradient(x, cls, rule=rule)


def saliency(m, x, cls: int) -> np.ndarray:
    return np.abs(_grad(m, x, cls))


def gradient_input(m, x, cls: int) -> np.ndarray:
    return _grad(m, x, cls) * np.asarray(x, dtype=np.float64)


def integrated_gradients(m, x, baseline, steps: int, cls: int, refine_depth: int = 16) -> np.ndarray:
    """Path integral of the gradient from ``baseline`` to ``x`` on a ``steps`` grid.

    ReLU networks have piecewise-constant gradients along the path. A grid cell
    whose two end gradients agree is integrated exactly; a cell where they
    differ holds an activation switch and is bisected, up to ``refine_depth``
    times, after which the midpoint gradient is used. ``refine_depth=0`` gives
    the plain midpoint rule.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    baseline = np.broadcast_to(np.asarray(baseline, dtype=np.float64), x.shape)
    if baseline.shape != x.shape:
        raise ShapeError("baseline and input shapes differ")
    single = x.ndim == 1
    x2, b2 = np.atleast_2d(x), np.atleast_2d(baseline)
    n, d = x2.shape
    delta = x2 - b2

    def grads(rows, alphas):
        pts = b2[rows] + alphas[:, None] * delta[rows]
        return _grad(m, pts, cls)

    if refine_depth <= 0:
        alphas = (np.arange(steps) + 0.5) / steps
        path = b2[None, :, :] + alphas[:, None, None] * delta[None, :, :]
        g = _grad(m, path.reshape(-1, d), cls).reshape(steps, n, d)
        out = delta * g.mean(axis=0)
        return out[0] if single else out

    edges = np.arange(steps + 1) / steps
    rows = np.repeat(np.arange(n), steps)
    lo = np.tile(edges[:-1], n)
    hi = np.tile(edges[1:], n)
    g_edge = grads(np.repeat(np.arange(n), steps + 1), np.tile(edges, n)).reshape(n, steps + 1, d)
    g_lo = g_edge[:, :-1].reshape(-1, d)
    g_hi = g_edge[:, 1:].reshape(-1, d)
    integral = np.zeros((n, d))
    for depth in range(refine_depth + 1):
        flat = np.all(np.abs(g_lo - g_hi) <= 1e-12 * (1.0 + np.abs(g_lo)), axis=1)
        np.add.at(integral, rows[flat], (hi[flat] - lo[flat])[:, None] * g_lo[flat])
        keep = ~flat
        if not keep.any():
            break
        rows, lo, hi, g_lo, g_hi = rows[keep], lo[keep], hi[keep], g_lo[keep], g_hi[keep]
        mid = 0.5 * (lo + hi)
        g_mid = grads(rows, mid)
        if depth == refine_depth:
            np.add.at(integral, rows, (hi - lo)[:, None] * g_mid)
            break
        rows = np.concatenate([rows, rows])
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
        g_lo, g_hi = np.concatenate([g_lo, g_mid]), np.concatenate([g_mid, g_hi])
    out = delta * integral
    return out[0] if single else out


def noise_ensemble(m, x, cls: int, mode: str = "smooth", n: int = 50, sigma: float = 0.1,
                   seed: int = 0) -> np.ndarray:
    """SmoothGrad (``smooth``), SquareGrad (``square``) or VarGrad (``var``).

    Gradients at ``n`` Gaussian perturbations ``x + N(0, sigma^2 I)``; the mean,
    mean of squares, or (population) variance across draws.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if sigma == 0:
        # every draw is x itself
        g = _grad(m, x2, cls)
        out = {"smooth": g, "square": g * g, "var": np.zeros_like(g)}.get(mode)
        if out is None:
            raise ValueError(f"unknown noise mode {mode!r}")
        return out[0] if single else out
    rng = np.random.default_rng(seed)
    noisy = x2[None, :, :] + sigma * rng.standard_normal((n, *x2.shape))
    g = _grad(m, noisy.reshape(-1, x2.shape[1]), cls).reshape(n, *x2.shape)
    if mode == "smooth":
        out = g.mean(axis=0)
    elif mode == "square":
        out = (g * g).mean(axis=0)
    elif mode == "var":
        out = g.var(axis=0)
    else:
        raise ValueError(f"unknown noise mode {mode!r}")
    return out[0] if single else out


def deconvnet_relu(m, x, cls: int) -> np.ndarray:
    """Backward pass in which each ReLU passes only positive upstream signal."""
    return _grad(m, x, cls, rule="deconvnet")
