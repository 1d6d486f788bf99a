"""Kernel SHAP and a brute-force Shapley oracle.

The value of a coalition S at input x is the mean model output over the
background rows, with the features in S overwritten by x (marginal /
interventional imputation). Kernel SHAP recovers Shapley values as the
solution of a Shapley-kernel weighted least-squares fit over coalitions,
with the efficiency constraint (sum of phi equals f(x) - v(empty))
eliminated exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ConfigError, ShapeError
from ..models import as_predict_fn

ALL = "all"
MAX_EXACT_FEATURES = 25
MAX_ORACLE_FEATURES = 12
_EVAL_CHUNK = 200_000  # rows per model call


@dataclass(frozen=True)
class BackgroundSet:
    data: np.ndarray
    seed: int = 0

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        if data.shape[0] < 1:
            raise ValueError("background set needs at least one row")
        object.__setattr__(self, "data", data)

    @property
    def n_features(self) -> int:
        return self.data.shape[1]

    @classmethod
    def sample(cls, x: np.ndarray, size: int, seed: int) -> "BackgroundSet":
        rng = np.random.default_rng(seed)
        size = min(size, x.shape[0])
        rows = np.sort(rng.choice(x.shape[0], size=size, replace=False))
        return cls(x[rows], seed)


@dataclass
class ShapleyResult:
    phi: np.ndarray   # [n_outputs, n_features]
    base: np.ndarray  # [n_outputs]
    fx: np.ndarray    # [n_outputs], model output at x
    exact: bool


def _evaluate(f, rows: np.ndarray) -> np.ndarray:
    if rows.shape[0] <= _EVAL_CHUNK:
        return f(rows)
    return np.concatenate([f(rows[i:i + _EVAL_CHUNK]) for i in range(0, rows.shape[0], _EVAL_CHUNK)])


def coalition_values(f, x: np.ndarray, bg: BackgroundSet, masks: np.ndarray) -> np.ndarray:
    """v(S) for each boolean mask row, shape [n_masks, n_outputs]."""
    b = bg.data.shape[0]
    out = []
    step = max(1, _EVAL_CHUNK // b)
    for i in range(0, masks.shape[0], step):
        chunk = masks[i:i + step]
        rows = np.where(chunk[:, None, :], x[None, None, :], bg.data[None, :, :])
        preds = _evaluate(f, rows.reshape(-1, x.size))
        out.append(preds.reshape(chunk.shape[0], b, -1).mean(axis=1))
    return np.concatenate(out)


def _size_weights(m: int) -> np.ndarray:
    """Total Shapley-kernel mass of all coalitions of each size 1..m-1."""
    s = np.arange(1, m)
    return (m - 1) / (s * (m - s))


def _all_masks(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Every proper non-empty coalition with its Shapley-kernel weight."""
    codes = np.arange(1, 2 ** m - 1)
    masks = ((codes[:, None] >> np.arange(m)) & 1).astype(bool)
    sizes = masks.sum(axis=1)
    comb = np.array([math.comb(m, int(s)) for s in sizes], dtype=np.float64)
    weights = (m - 1) / (comb * sizes * (m - sizes))
    return masks, weights


def _sampled_masks(m: int, budget: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Coalitions for the sampled estimator.

    Coalition sizes are filled in complementary pairs (s, m-s), smallest first,
    while the whole size class fits in the remaining budget; those coalitions
    carry their exact kernel weight. The leftover budget is spent on paired
    random draws from the remaining sizes, which share the remaining kernel
    mass equally (repeats accumulate weight).
    """
    n_pairs = (m - 1) // 2
    size_w = _size_weights(m)  # index s-1
    masks, weights = [], []
    remaining = budget
    mass_left = 1.0  # share of the total kernel mass not yet assigned
    total_mass = size_w.sum()
    done_sizes = set()
    for s in range(1, n_pairs + 2):
        if m - s < s:
            break
        paired = s != m - s
        count = math.comb(m, s) * (2 if paired else 1)
        if count > remaining:
            break
        mass = size_w[s - 1] * (2 if paired else 1) / total_mass
        for combo in itertools.combinations(range(m), s):
            mk = np.zeros(m, dtype=bool)
            mk[list(combo)] = True
            w = mass / count
            masks.append(mk)
            weights.append(w)
            if paired:
                masks.append(~mk)
                weights.append(w)
        done_sizes.update({s, m - s})
        remaining -= count
        mass_left -= mass
    left_sizes = np.array([s for s in range(1, m) if s not in done_sizes])
    if left_sizes.size and remaining >= 2 and mass_left > 1e-12:
        probs = size_w[left_sizes - 1] / size_w[left_sizes - 1].sum()
        drawn: dict[bytes, list] = {}
        n_draws = remaining // 2
        for _ in range(n_draws):
            s = rng.choice(left_sizes, p=probs)
            mk = np.zeros(m, dtype=bool)
            mk[rng.choice(m, size=s, replace=False)] = True
            for candidate in (mk, ~mk):
                key = candidate.tobytes()
                if key in drawn:
                    drawn[key][1] += 1.0
                else:
                    drawn[key] = [candidate, 1.0]
        total_hits = sum(v[1] for v in drawn.values())
        for mk, hits in drawn.values():
            masks.append(mk)
            weights.append(mass_left * hits / total_hits)
    return np.array(masks), np.array(weights)


def _solve_constrained(masks: np.ndarray, weights: np.ndarray, y: np.ndarray, total: np.ndarray,
                       ridge: float) -> np.ndarray:
    """Weighted least squares for phi with sum(phi) == total, per output column.

    y: [n_masks, n_out] centred coalition values v(S) - v(empty); total: [n_out].
    """
    m = masks.shape[1]
    z = masks.astype(np.float64)
    if weights.sum() <= 0 or not np.all(np.isfinite(weights)):
        raise ValueError("degenerate coalition weights")
    # eliminate the last feature: phi_last = total - sum(phi_rest)
    a = z[:, :-1] - z[:, -1:]
    rhs = y - z[:, -1:] * total[None, :]
    aw = a * weights[:, None]
    normal = aw.T @ a
    if ridge:
        normal = normal + ridge * np.eye(m - 1)
    try:
        rest = np.linalg.solve(normal, aw.T @ rhs)
    except np.linalg.LinAlgError:
        raise ValueError("singular coalition design; increase the coalition budget") from None
    last = total[None, :] - rest.sum(axis=0, keepdims=True)
    return np.vstack([rest, last]).T  # [n_out, m]


def kernel_shap(model, x, bg: BackgroundSet, n_coalitions: int | str = ALL, seed: int = 0,
                ridge: float = 1e-3) -> ShapleyResult:
    """Shapley values of every model output at ``x``.

    ``n_coalitions=ALL`` enumerates all 2^M - 2 proper coalitions and solves the
    unregularised system, which reproduces exact Shapley values. A numeric
    budget uses the paired sampling scheme of :func:`_sampled_masks` with a
    ``ridge`` penalty; budgets that cover every coalition fall back to the
    exact enumeration.
    """
    f = as_predict_fn(model)
    x = np.asarray(x, dtype=np.float64).ravel()
    m = x.size
    if bg.n_features != m:
        raise ShapeError(f"background has {bg.n_features} features, input has {m}")
    ends = coalition_values(f, x, bg, np.array([np.zeros(m, bool), np.ones(m, bool)]))
    base, fx = ends[0], ends[1]
    if m == 1:
        return ShapleyResult((fx - base)[:, None], base, fx, True)

    if n_coalitions == ALL:
        if m > MAX_EXACT_FEATURES:
            raise ConfigError(f"refusing exact enumeration over {m} features (limit {MAX_EXACT_FEATURES})")
        exact = True
    else:
        n_coalitions = int(n_coalitions)
        if n_coalitions < m + 2:
            raise ConfigError(f"need at least {m + 2} coalitions for {m} features, got {n_coalitions}")
        exact = m <= MAX_EXACT_FEATURES and n_coalitions >= 2 ** m - 2
    if exact:
        masks, weights = _all_masks(m)
        ridge = 0.0
    else:
        masks, weights = _sampled_masks(m, n_coalitions, np.random.default_rng(seed))
    y = coalition_values(f, x, bg, masks) - base[None, :]
    phi = _solve_constrained(masks, weights, y, fx - base, ridge)
    return ShapleyResult(phi, base, fx, exact)


def shapley_from_value_function(v: Callable[[frozenset], np.ndarray | float], n_players: int) -> np.ndarray:
    """Textbook Shapley values by subset enumeration.

    phi_j = sum over S not containing j of |S|!(n-|S|-1)!/n! * (v(S+j) - v(S)).
    ``v`` maps a frozenset of player indices to a scalar or vector; results have
    shape [n_players, ...].
    """
    if n_players > MAX_ORACLE_FEATURES:
        raise ConfigError(f"oracle limited to {MAX_ORACLE_FEATURES} players, got {n_players}")
    cache: dict[frozenset, np.ndarray] = {}

    def value(s: frozenset) -> np.ndarray:
        if s not in cache:
            cache[s] = np.asarray(v(s), dtype=np.float64)
        return cache[s]

    n = n_players
    fact = [math.factorial(i) for i in range(n + 1)]
    phis = []
    for j in range(n):
        others = [i for i in range(n) if i != j]
        acc = 0.0
        for size in range(n):
            coef = fact[size] * fact[n - size - 1] / fact[n]
            for subset in itertools.combinations(others, size):
                s = frozenset(subset)
                acc = acc + coef * (value(s | {j}) - value(s))
        phis.append(acc)
    return np.array(phis)


def exact_shapley_oracle(model, x, bg: BackgroundSet) -> np.ndarray:
    """Brute-force Shapley values, shape [n_outputs, n_features].

    Independent of :func:`kernel_shap`: coalition values are computed one
    background row at a time and the Shapley sum is taken literally.
    """
    f = as_predict_fn(model)
    x = np.asarray(x, dtype=np.float64).ravel()
    m = x.size
    if m > MAX_ORACLE_FEATURES:
        raise ConfigError(f"oracle limited to {MAX_ORACLE_FEATURES} features, got {m}")
    if bg.n_features != m:
        raise ShapeError(f"background has {bg.n_features} features, input has {m}")

    def v(s: frozenset) -> np.ndarray:
        total = 0.0
        for row in bg.data:
            z = row.copy()
            for j in s:
                z[j] = x[j]
            total = total + f(z[None, :])[0]
        return total / bg.data.shape[0]

    return shapley_from_value_function(v, m).T
