from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from sklearn.ensemble import AdaBoostClassifier, HistGradientBoostingClassifier, RandomForestClassifier
from sklearn.neighbors import KNeighborsClassifier
from sklearn.tree import DecisionTreeClassifier

from ..errors import CapabilityError, DataError, ShapeError
from ..flowdata import Dataset
from .linear_svm import LinearSVMNet, fit_linear_svm
from .mlp import MLPNet, fit_mlp


class ModelKind(str, enum.Enum):
    DECISION_TREE = "DecisionTree"
    RANDOM_FOREST = "RandomForest"
    ADABOOST = "AdaBoost"
    KNN = "KNN"
    LINEAR_SVM = "LinearSVM"
    MLP = "MLP"
    GBDT = "GBDT"

    @classmethod
    def parse(cls, text: str) -> "ModelKind":
        for k in cls:
            if text.lower() in (k.value.lower(), k.name.lower()):
                return k
        raise ValueError(f"unknown model kind {text!r}")


@dataclass(frozen=True)
class DecisionTreeParams:
    max_depth: int | None = 10
    min_samples_split: int = 2


@dataclass(frozen=True)
class RandomForestParams:
    n_trees: int = 100
    max_depth: int | None = 10
    min_samples_split: int = 2


@dataclass(frozen=True)
class AdaBoostParams:
    n_stages: int = 50
    learning_rate: float = 1.0


@dataclass(frozen=True)
class KNNParams:
    k: int = 5


@dataclass(frozen=True)
class LinearSVMParams:
    C: float = 0.5
    epochs: int = 20
    batch_size: int = 256
    learning_rate: float = 0.5


@dataclass(frozen=True)
class MLPParams:
    hidden: tuple[int, ...] = (16,)
    # prepend a ReLU layer as wide as the input (the "DNN" configuration)
    input_layer: bool = False
    dropout: float = 0.01
    epochs: int = 11
    batch_size: int = 1024
    learning_rate: float = 1e-3
    # lower bound on Adam updates; extends ``epochs`` on small training sets (0 = off)
    min_updates: int = 0


@dataclass(frozen=True)
class GBDTParams:
    n_trees: int = 100
    learning_rate: float = 0.1
    max_leaf_nodes: int = 31
    max_bins: int = 255


PARAM_TYPES: dict[ModelKind, type] = {
    ModelKind.DECISION_TREE: DecisionTreeParams,
    ModelKind.RANDOM_FOREST: RandomForestParams,
    ModelKind.ADABOOST: AdaBoostParams,
    ModelKind.KNN: KNNParams,
    ModelKind.LINEAR_SVM: LinearSVMParams,
    ModelKind.MLP: MLPParams,
    ModelKind.GBDT: GBDTParams,
}


def default_hyperparams(kind: ModelKind):
    return PARAM_TYPES[kind]()


def validate_hyperparams(kind: ModelKind, hp) -> None:
    if not isinstance(hp, PARAM_TYPES[kind]):
        raise TypeError(f"{kind.value} expects {PARAM_TYPES[kind].__name__}, got {type(hp).__name__}")
    for f in dataclasses.fields(hp):
        value = getattr(hp, f.name)
        if f.name in ("dropout",):
            if not 0.0 <= value < 1.0:
                raise ValueError("dropout must lie in [0, 1)")
        elif f.name == "hidden":
            if any(h <= 0 for h in value):
                raise ValueError("hidden layer widths must be positive")
        elif f.name == "min_updates":
            if value < 0:
                raise ValueError("min_updates must be >= 0")
        elif isinstance(value, (int, float)) and not isinstance(value, bool) and value is not None:
            if value <= 0:
                raise ValueError(f"{kind.value}.{f.name} must be positive, got {value}")


def hyperparams_from_dict(kind: ModelKind, values: dict) -> Any:
    cls = PARAM_TYPES[kind]
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown {kind.value} hyperparameters: {sorted(unknown)}")
    values = dict(values)
    if "hidden" in values:
        values["hidden"] = tuple(values["hidden"])
    return cls(**values)


class _SklearnBackend:
    """Wraps a fitted sklearn classifier, padding probability columns to all classes."""

    def __init__(self, estimator, n_classes: int):
        self.estimator = estimator
        self.n_classes = n_classes

    def _pad(self, proba: np.ndarray) -> np.ndarray:
        out = np.zeros((proba.shape[0], self.n_classes))
        out[:, self.estimator.classes_.astype(int)] = proba
        return out

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return self._pad(self.estimator.predict_proba(x))


class _ForestBackend(_SklearnBackend):
    def tree_probas(self, x: np.ndarray) -> list[np.ndarray]:
        return [self._pad(t.predict_proba(x)) for t in self.estimator.estimators_]

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return average_tree_probas(self.tree_probas(x))


def average_tree_probas(per_tree: list[np.ndarray]) -> np.ndarray:
    """Forest output: the plain mean of the trees' leaf class distributions."""
    return np.mean(np.stack(per_tree), axis=0)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    kind: ModelKind
    hyperparams: Any
    n_features: int
    n_classes: int
    train_seed: int
    backend: Any = field(repr=False)

    @property
    def differentiable(self) -> bool:
        return isinstance(self.backend, MLPNet)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} columns, got shape {x.shape}")
        return x

    def predict_proba(self, x) -> np.ndarray:
        x = self._check(x)
        if x.shape[0] == 0:
            return np.zeros((0, self.n_classes))
        p = self.backend.predict_proba(x)
        # renormalise away float drift so rows sum to one
        return p / p.sum(axis=1, keepdims=True)

    def predict_labels(self, x) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def logits(self, x) -> np.ndarray:
        if not self.differentiable:
            raise CapabilityError(f"{self.kind.value} has no logits")
        return self.backend.logits(self._check(x))

    def input_gradient(self, x, cls: int, rule: str = "gradient") -> np.ndarray:
        """Gradient of the pre-softmax logit of ``cls`` w.r.t. the input.

        A 1-D ``x`` gives a 1-D gradient; a matrix gives one gradient per row.
        """
        if not self.differentiable:
            raise CapabilityError(f"{self.kind.value} models are not differentiable")
        if not 0 <= cls < self.n_classes:
            raise ValueError(f"class index {cls} out of range")
        single = np.ndim(x) == 1
        g = self.backend.logit_gradient(self._check(x), cls, rule)
        return g[0] if single else g

    @classmethod
    def from_network(cls, net: MLPNet, seed: int = 0) -> "TrainedModel":
        """Wrap hand-built network weights (tests, imported models)."""
        hp = MLPParams(hidden=tuple(w.shape[1] for w in net.weights[:-1]))
        return cls(ModelKind.MLP, hp, net.n_features, net.n_classes, seed, net)


def _fit_sklearn(kind: ModelKind, hp, x, y, seed):
    if kind is ModelKind.DECISION_TREE:
        est = DecisionTreeClassifier(max_depth=hp.max_depth, min_samples_split=hp.min_samples_split,
                                     random_state=seed)
    elif kind is ModelKind.RANDOM_FOREST:
        est = RandomForestClassifier(n_estimators=hp.n_trees, max_depth=hp.max_depth,
                                     min_samples_split=hp.min_samples_split, random_state=seed, n_jobs=1)
    elif kind is ModelKind.ADABOOST:
        est = AdaBoostClassifier(DecisionTreeClassifier(max_depth=1), n_estimators=hp.n_stages,
                                 learning_rate=hp.learning_rate, random_state=seed)
    elif kind is ModelKind.KNN:
        est = KNeighborsClassifier(n_neighbors=hp.k, weights="uniform", algorithm="auto")
    elif kind is ModelKind.GBDT:
        est = HistGradientBoostingClassifier(learning_rate=hp.learning_rate, max_iter=hp.n_trees,
                                             max_leaf_nodes=hp.max_leaf_nodes, max_bins=hp.max_bins,
                                             early_stopping=False, random_state=seed)
    else:
        raise AssertionError(kind)
    return est.fit(x, y)


def train(kind: ModelKind, hp, train_set: Dataset, seed: int) -> TrainedModel:
    kind = ModelKind(kind)
    hp = default_hyperparams(kind) if hp is None else hp
    validate_hyperparams(kind, hp)
    x, y = train_set.x, train_set.y
    if x.shape[0] == 0:
        raise DataError("training set is empty")
    if not np.all(np.isfinite(x)):
        raise DataError("training features contain NaN or infinite values")
    if np.unique(y).size < 2:
        raise DataError("training set holds a single class")
    n_classes = train_set.n_classes
    seed = int(seed) % (2 ** 32)
    if kind is ModelKind.MLP:
        hidden = ([x.shape[1]] if hp.input_layer else []) + list(hp.hidden)
        batches = -(-x.shape[0] // hp.batch_size)
        epochs = max(hp.epochs, -(-hp.min_updates // batches))
        backend = fit_mlp(x, y, n_classes, hidden, hp.dropout, epochs, hp.batch_size,
                          hp.learning_rate, seed)
    elif kind is ModelKind.LINEAR_SVM:
        backend = fit_linear_svm(x, y, n_classes, hp.C, hp.epochs, hp.batch_size, hp.learning_rate, seed)
    elif kind is ModelKind.RANDOM_FOREST:
        backend = _ForestBackend(_fit_sklearn(kind, hp, x, y, seed), n_classes)
    else:
        backend = _SklearnBackend(_fit_sklearn(kind, hp, x, y, seed), n_classes)
    return TrainedModel(kind, hp, x.shape[1], n_classes, seed, backend)


def predict_proba(m: TrainedModel, x) -> np.ndarray:
    return m.predict_proba(x)


def predict_labels(m: TrainedModel, x) -> np.ndarray:
    return m.predict_labels(x)


def input_gradient(m: TrainedModel, x, cls: int) -> np.ndarray:
    return m.input_gradient(x, cls)


def as_predict_fn(model) -> Callable[[np.ndarray], np.ndarray]:
    """Accept a TrainedModel or any ``f(matrix) -> [n, n_out]`` callable."""
    if isinstance(model, TrainedModel):
        return model.predict_proba
    if callable(model):
        def f(x):
            out = np.asarray(model(np.atleast_2d(x)), dtype=np.float64)
            return out[:, None] if out.ndim == 1 else out
        return f
    raise TypeError(f"cannot evaluate {type(model).__name__}")
