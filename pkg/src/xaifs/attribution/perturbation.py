"""Model-agnostic perturbation attributions: occlusion and tabular LIME.

Both explain the class probability (or, for plain callables, whatever
column ``cls`` of the callable's output is).
"""

from __future__ import annotations

import warnings

import numpy as np

from ..models import as_predict_fn


class RidgeIncreasedWarning(UserWarning):
    pass


def occlusion(m, x, cls: int, baseline_value: float = 0.0) -> np.ndarray:
    """output(x) - output(x with feature j set to ``baseline_value``), per feature j."""
    f = as_predict_fn(m)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    n, d = x2.shape
    occluded = np.repeat(x2[:, None, :], d, axis=1)
    idx = np.arange(d)
    occluded[:, idx, idx] = baseline_value
    ref = f(x2)[:, cls]
    out = ref[:, None] - f(occluded.reshape(-1, d))[:, cls].reshape(n, d)
    return out[0] if single else out


def _weighted_ridge(z: np.ndarray, t: np.ndarray, w: np.ndarray, ridge: float) -> np.ndarray:
    """Coefficients (no intercept) of a weighted ridge fit with a free, unpenalised intercept."""
    sw = w.sum()
    zc = z - (w @ z) / sw
    tc = t - (w @ t) / sw
    gram = (zc * w[:, None]).T @ zc
    rhs = (zc * w[:, None]).T @ tc
    lam = ridge
    for _ in range(8):
        system = gram + lam * np.eye(gram.shape[0])
        if np.linalg.cond(system) < 1e12:
            return np.linalg.solve(system, rhs)
        lam = max(lam * 10, 1e-6)
        warnings.warn(f"ill-conditioned LIME system; ridge raised to {lam:g}", RidgeIncreasedWarning,
                      stacklevel=3)
    return np.linalg.lstsq(system, rhs, rcond=None)[0]


def lime_tabular(m, x, cls: int, n_perturb: int = 500, kernel_width: float | None = None,
                 seed: int = 0, sigma: float = 0.1, ridge: float = 1e-3) -> np.ndarray:
    """Local linear surrogate coefficients around ``x``.

    Samples ``n_perturb`` points ``x + N(0, sigma^2 I)``, weights them by
    ``exp(-d^2 / kernel_width^2)`` with ``d`` the Euclidean distance to ``x``,
    and fits a weighted ridge regression of the class output on the
    perturbations. ``kernel_width`` defaults to ``0.75 * sqrt(n_features)``.
    """
    f = as_predict_fn(m)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    n, d = x2.shape
    if n_perturb <= d:
        raise ValueError(f"n_perturb must exceed the feature count ({d})")
    kw = 0.75 * np.sqrt(d) if kernel_width is None else kernel_width
    rng = np.random.default_rng(seed)
    eps = sigma * rng.standard_normal((n, n_perturb, d))
    targets = f((x2[:, None, :] + eps).reshape(-1, d))[:, cls].reshape(n, n_perturb)
    weights = np.exp(-(eps ** 2).sum(axis=2) / kw ** 2)
    out = np.array([_weighted_ridge(eps[i], targets[i], weights[i], ridge) for i in range(n)])
    return out[0] if single else out
