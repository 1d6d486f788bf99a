"""Feature rankings built from attribution importances.

Every ranking is a full permutation of the feature ids with rank 1 the most
important. Ties are always broken by ascending feature index.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError

PROPOSED_METHODS = ("model_specific", "overall_rank", "weighted_rank", "normalized_weighted_rank",
                    "models_attacks", "combined_selection")


class ClampedKWarning(UserWarning):
    pass


@dataclass
class FeatureRanking:
    method: str
    entries: list[tuple[int, float]]
    # False when smaller scores are better (rank means, r_i)
    higher_is_better: bool = True
    feature_names: tuple[str, ...] | None = field(default=None, compare=False)
    flags: list[str] = field(default_factory=list, compare=False)

    def __post_init__(self):
        ids = [f for f, _ in self.entries]
        if sorted(ids) != list(range(len(ids))):
            raise ValueError(f"{self.method}: ranking is not a permutation of the feature ids")

    def __len__(self):
        return len(self.entries)

    @property
    def order(self) -> list[int]:
        return [f for f, _ in self.entries]

    @property
    def scores(self) -> list[float]:
        return [s for _, s in self.entries]

    def positions(self) -> np.ndarray:
        """1-based rank position of each feature id."""
        pos = np.empty(len(self.entries), dtype=np.int64)
        pos[self.order] = np.arange(1, len(self.entries) + 1)
        return pos

    def name_of(self, feature_id: int) -> str:
        return self.feature_names[feature_id] if self.feature_names else str(feature_id)

    def with_names(self, names: Sequence[str]) -> "FeatureRanking":
        self.feature_names = tuple(names)
        return self

    def rows(self) -> list[tuple[str, int, str, float]]:
        return [(self.method, i + 1, self.name_of(f), s) for i, (f, s) in enumerate(self.entries)]


def _order(scores: np.ndarray, descending: bool) -> np.ndarray:
    idx = np.arange(scores.size)
    key = -scores if descending else scores
    return np.lexsort((idx, key))


def _ranking(method: str, scores, descending: bool = True, names=None) -> FeatureRanking:
    scores = np.asarray(scores, dtype=np.float64)
    order = _order(scores, descending)
    return FeatureRanking(method, [(int(i), float(scores[i])) for i in order], descending,
                          tuple(names) if names is not None else None)


def rank_from_importance(importance, method: str = "importance", names=None) -> FeatureRanking:
    """Descending importance; ``importance`` is an array indexed by feature id or an id->score map."""
    if isinstance(importance, Mapping):
        n = len(importance)
        if sorted(importance) != list(range(n)):
            raise ValueError("importance map must score every feature id 0..n-1")
        importance = [importance[i] for i in range(n)]
    return _ranking(method, importance, True, names)


@dataclass
class RankContext:
    model_names: list[str]
    accuracies: np.ndarray            # [n_models]
    importance: np.ndarray            # [n_models, n_features], overall per model
    class_importance: np.ndarray      # [n_models, n_classes, n_features]
    attack_names: list[str]
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.accuracies = np.asarray(self.accuracies, dtype=np.float64)
        self.importance = np.atleast_2d(np.asarray(self.importance, dtype=np.float64))
        self.class_importance = np.asarray(self.class_importance, dtype=np.float64)
        n_models = len(self.model_names)
        if n_models < 1:
            raise ValueError("need at least one model")
        if self.accuracies.shape != (n_models,) or self.importance.shape[0] != n_models:
            raise ValueError("one accuracy and one importance vector per model required")
        if np.any((self.accuracies < 0) | (self.accuracies > 1)):
            raise ValueError("accuracies must lie in [0, 1]")
        if np.any(self.importance < 0) or np.any(self.class_importance < 0):
            raise ValueError("importances must be non-negative")
        if self.class_importance.shape != (n_models, len(self.attack_names), self.n_features):
            raise ValueError("class_importance must be [models, attacks, features]")

    @property
    def n_features(self) -> int:
        return self.importance.shape[1]

    @classmethod
    def from_importances(cls, models: Mapping[str, tuple[float, np.ndarray]], attack_names: Sequence[str],
                         feature_names=None) -> "RankContext":
        """``models`` maps name -> (accuracy, per-class importance [classes, features])."""
        names = list(models)
        accs = np.array([models[m][0] for m in names])
        per_class = np.stack([np.asarray(models[m][1], dtype=np.float64) for m in names])
        return cls(names, accs, per_class.mean(axis=1), per_class, list(attack_names),
                   tuple(feature_names) if feature_names is not None else None)


def model_specific(ctx: RankContext) -> dict[str, FeatureRanking]:
    """Each model's own importance ranking."""
    return {m: rank_from_importance(ctx.importance[i], f"model_specific[{m}]", ctx.feature_names)
            for i, m in enumerate(ctx.model_names)}


def _positions_matrix(importances: np.ndarray) -> np.ndarray:
    return np.stack([rank_from_importance(v).positions() for v in importances])


def overall_rank(ctx: RankContext) -> FeatureRanking:
    """Mean rank position across models; lower is better."""
    mean_pos = _positions_matrix(ctx.importance).mean(axis=0)
    return _ranking("overall_rank", mean_pos, descending=False, names=ctx.feature_names)


def weighted_rank(ctx: RankContext, method: str = "weighted_rank") -> FeatureRanking:
    """Mean over models of accuracy * importance; higher is better."""
    scores = (ctx.accuracies[:, None] * ctx.importance).mean(axis=0)
    return _ranking(method, scores, names=ctx.feature_names)


def normalized_weighted_rank(ctx: RankContext) -> FeatureRanking:
    """:func:`weighted_rank` after scaling each model's importances to sum to one."""
    sums = ctx.importance.sum(axis=1)
    if np.any(sums == 0):
        bad = [m for m, s in zip(ctx.model_names, sums) if s == 0]
        raise DataError(f"all-zero importance vector for model(s) {bad}")
    normed = RankContext(ctx.model_names, ctx.accuracies, ctx.importance / sums[:, None],
                         ctx.class_importance, ctx.attack_names, ctx.feature_names)
    return weighted_rank(normed, "normalized_weighted_rank")


def attack_ranks(ctx: RankContext, pooling: str = "rank") -> np.ndarray:
    """Rank of each feature for each attack class, shape [n_attacks, n_features].

    ``pooling="rank"`` averages the per-model rank positions for the class and
    re-ranks; ``pooling="importance"`` ranks the mean of the per-model class
    importances.
    """
    out = []
    for a in range(len(ctx.attack_names)):
        per_model = ctx.class_importance[:, a, :]
        if pooling == "rank":
            pooled = _positions_matrix(per_model).mean(axis=0)
            out.append(_ranking("", pooled, descending=False).positions())
        elif pooling == "importance":
            out.append(rank_from_importance(per_model.mean(axis=0)).positions())
        else:
            raise ValueError(f"unknown pooling {pooling!r}")
    return np.stack(out)


def models_attacks_score(ctx: RankContext, pooling: str = "rank") -> FeatureRanking:
    """r_i = (mean rank across models + mean rank across attack classes) / 2; lower is better."""
    r_m = _positions_matrix(ctx.importance)
    r_a = attack_ranks(ctx, pooling)
    return _ranking("models_attacks", models_attacks_from_ranks(r_m, r_a), descending=False,
                    names=ctx.feature_names)


def models_attacks_from_ranks(model_ranks: np.ndarray, attack_ranks_: np.ndarray) -> np.ndarray:
    """r_i from rank matrices [n_models, n_features] and [n_attacks, n_features]."""
    r_m = np.atleast_2d(np.asarray(model_ranks, dtype=np.float64))
    r_a = np.atleast_2d(np.asarray(attack_ranks_, dtype=np.float64))
    return 0.5 * (r_m.sum(axis=0) / r_m.shape[0] + r_a.sum(axis=0) / r_a.shape[0])


def _check_same_features(rankings: Sequence[FeatureRanking]) -> int:
    if not rankings:
        raise ValueError("need at least one ranking")
    n = len(rankings[0])
    for r in rankings:
        if len(r) != n:
            raise DataError(f"ranking {r.method!r} covers {len(r)} features, expected {n}")
    return n


def combined_selection(rankings: Sequence[FeatureRanking], k: int) -> FeatureRanking:
    """Count of appearances in each input's top-k; ties by mean rank position, then index."""
    n = _check_same_features(rankings)
    flags = []
    if k > n:
        warnings.warn(f"k={k} exceeds {n} features; clamped", ClampedKWarning, stacklevel=2)
        flags.append(f"k clamped from {k} to {n}")
        k = n
    counts = np.zeros(n)
    for r in rankings:
        counts[r.order[:k]] += 1
    mean_pos = np.mean([r.positions() for r in rankings], axis=0)
    order = np.lexsort((np.arange(n), mean_pos, -counts))
    names = rankings[0].feature_names
    return FeatureRanking("combined_selection", [(int(i), float(counts[i])) for i in order], True, names, flags)


def voting(rankings: Sequence[FeatureRanking]) -> FeatureRanking:
    """Borda points: n for the top feature down to 1 for the last, summed over inputs."""
    n = _check_same_features(rankings)
    points = np.zeros(n)
    for r in rankings:
        points += n + 1 - r.positions()
    return _ranking("voting", points, names=rankings[0].feature_names)


def select_top_k(r: FeatureRanking, k: int) -> list[int]:
    if not 1 <= k <= len(r):
        raise ValueError(f"k must lie in [1, {len(r)}], got {k}")
    return r.order[:k]


def proposed_rankings(ctx: RankContext, k: int, pooling: str = "rank") -> dict[str, FeatureRanking | dict]:
    """All proposed methods. ``model_specific`` maps model name -> ranking.

    Combined selection counts top-k appearances over the four cross-model
    rankings (overall, weighted, normalized weighted, models+attacks).
    """
    out: dict = {
        "model_specific": model_specific(ctx),
        "overall_rank": overall_rank(ctx),
        "weighted_rank": weighted_rank(ctx),
        "normalized_weighted_rank": normalized_weighted_rank(ctx),
        "models_attacks": models_attacks_score(ctx, pooling),
    }
    inputs = [out[m] for m in ("overall_rank", "weighted_rank", "normalized_weighted_rank", "models_attacks")]
    out["combined_selection"] = combined_selection(inputs, k)
    return out


def write_rankings_csv(rankings: Sequence[FeatureRanking], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "rank", "feature", "score"])
        for r in rankings:
            for method, rank, feat, score in r.rows():
                w.writerow([method, rank, feat, repr(score)])


def read_rankings_csv(path: str | Path) -> dict[str, list[tuple[str, float]]]:
    out: dict[str, list[tuple[str, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["method"], []).append((row["feature"], float(row["score"])))
    return out
