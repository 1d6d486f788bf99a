"""Classical filter/embedded feature rankings used as comparison baselines."""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.feature_selection import f_classif

from .flowdata import Dataset
from .ranking import FeatureRanking, _ranking

BASELINE_METHODS = ("chi2", "correlation", "impurity", "infogain", "kbest")
N_BINS = 20
CORRELATION_THRESHOLD = 0.95


class ConstantFeatureWarning(UserWarning):
    pass


def quantile_bins(col: np.ndarray, n_bins: int = N_BINS) -> np.ndarray:
    """Bin index per value: one bin per distinct value when there are at most
    ``n_bins`` of them, otherwise equal-frequency bins on the value quantiles."""
    uniq = np.unique(col)
    if uniq.size <= n_bins:
        return np.searchsorted(uniq, col)
    edges = np.unique(np.quantile(col, np.linspace(0, 1, n_bins + 1)[1:-1]))
    return np.searchsorted(edges, col, side="right")


def contingency(bins: np.ndarray, y: np.ndarray, n_classes: int) -> np.ndarray:
    n_b = int(bins.max()) + 1
    return np.bincount(bins * n_classes + y, minlength=n_b * n_classes).reshape(n_b, n_classes)


def chi2_statistic(table: np.ndarray) -> float:
    table = table.astype(np.float64)
    n = table.sum()
    expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0, keepdims=True) / n
    mask = expected > 0
    return float((((table - expected) ** 2)[mask] / expected[mask]).sum())


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def mutual_information_bits(table: np.ndarray) -> float:
    """I(B; Y) = H(Y) - H(Y | B) in bits from a bins x classes contingency table."""
    table = table.astype(np.float64)
    n = table.sum()
    h_y = _entropy(table.sum(axis=0) / n)
    row_tot = table.sum(axis=1)
    h_cond = sum(row_tot[i] / n * _entropy(table[i] / row_tot[i]) for i in range(table.shape[0]) if row_tot[i])
    return max(h_y - h_cond, 0.0)


def _constant_columns(x: np.ndarray) -> np.ndarray:
    return np.ptp(x, axis=0) == 0


def _binned_scores(d: Dataset, stat) -> np.ndarray:
    return np.array([stat(contingency(quantile_bins(d.x[:, j]), d.y, d.n_classes))
                     for j in range(d.n_features)])


def correlation_ranking(d: Dataset, threshold: float = CORRELATION_THRESHOLD) -> FeatureRanking:
    """|Pearson(feature, class index)| order with redundancy pruning.

    Walking the features from best to worst label correlation, a feature is
    pruned when its |correlation| with an already kept feature exceeds
    ``threshold``. Kept features come first; pruned ones follow in pruning
    order with score ``|corr| - 2`` so scores stay non-increasing.
    """
    x, y = d.x, d.y.astype(np.float64)
    const = _constant_columns(x)
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    norms = np.sqrt((xc ** 2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        label_corr = np.abs(xc.T @ yc) / (norms * np.sqrt(yc @ yc))
    label_corr = np.where(const | ~np.isfinite(label_corr), 0.0, label_corr)
    order = np.lexsort((np.arange(d.n_features), -label_corr))
    kept, pruned = [], []
    for j in order:
        redundant = False
        if not const[j]:
            for k in kept:
                if const[k]:
                    continue
                c = abs(xc[:, j] @ xc[:, k]) / (norms[j] * norms[k])
                if c > threshold:
                    redundant = True
                    break
        (pruned if redundant else kept).append(int(j))
    entries = [(j, float(label_corr[j])) for j in kept] + [(j, float(label_corr[j]) - 2.0) for j in pruned]
    r = FeatureRanking("correlation", entries, True, d.schema.feature_names)
    r.flags.extend(f"pruned {d.schema.feature_names[j]}" for j in pruned)
    return r


def baseline_rank(method: str, train: Dataset, seed: int = 0, n_trees: int = 100) -> FeatureRanking:
    """Rank features of ``train`` with one of :data:`BASELINE_METHODS`."""
    if len(train) == 0:
        raise ValueError("training set is empty")
    const = _constant_columns(train.x)
    flags = [f"constant feature {train.schema.feature_names[j]}" for j in np.flatnonzero(const)]
    if flags:
        warnings.warn("; ".join(flags), ConstantFeatureWarning, stacklevel=2)
    if method == "correlation":
        r = correlation_ranking(train)
        r.flags.extend(flags)
        return r
    if method == "chi2":
        scores = _binned_scores(train, chi2_statistic)
    elif method == "infogain":
        scores = _binned_scores(train, mutual_information_bits)
    elif method == "kbest":
        with np.errstate(invalid="ignore", divide="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            scores, _ = f_classif(train.x, train.y)
        scores = np.where(np.isfinite(scores), scores, 0.0)
    elif method == "impurity":
        rf = RandomForestClassifier(n_estimators=n_trees, random_state=seed, n_jobs=1)
        scores = rf.fit(train.x, train.y).feature_importances_
    else:
        raise ValueError(f"unknown baseline method {method!r}")
    scores = np.where(const, 0.0, scores)
    r = _ranking(method, scores, names=train.schema.feature_names)
    r.flags.extend(flags)
    return r
