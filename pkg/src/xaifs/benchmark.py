"""End-to-end experiment grid: preprocess, train, explain, rank, retrain on top-k, score."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from joblib import Parallel, delayed

from . import attribution, baselines, ranking
from .errors import ConfigError, DataError
from .flowdata import (Dataset, FeatureSchema, PreprocessReport, SplitSpec, deduplicate_and_shuffle,
                       load_csv, minmax_fit_apply, oversample_random, split_train_test, synth_planted)
from .metrics import (MetricSet, classification_metrics, confusion, evaluate, false_positive_rate,
                      per_class_accuracy)
from .models import ModelKind, TrainedModel, hyperparams_from_dict, train

logger = logging.getLogger(__name__)

ALL_K = "all"
SHAP_METHODS = ("model_specific", "overall_rank", "weighted_rank", "normalized_weighted_rank",
                "models_attacks", "combined_selection")
DEFAULT_METHODS = SHAP_METHODS + baselines.BASELINE_METHODS
XPLIQUE_RANKINGS = tuple(f"xplique_{m}" for m in attribution.XPLIQUE_METHODS)
KNOWN_METHODS = DEFAULT_METHODS + ("voting",) + XPLIQUE_RANKINGS
TIE_BREAK_ORDER = ("acc", "prec", "rec", "f1", "bacc", "mcc", "aucroc")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    kind: str
    hyperparams: dict = field(default_factory=dict)

    def build_hyperparams(self):
        kind = ModelKind.parse(self.kind)
        return kind, hyperparams_from_dict(kind, self.hyperparams)


# The seven models of the study. DNN adds an input-width ReLU layer before the 16-unit layer.
STUDY_MODELS = (
    ModelSpec("DNN", "MLP", {"input_layer": True}),
    ModelSpec("RF", "RandomForest"),
    ModelSpec("ADA", "AdaBoost"),
    ModelSpec("KNN", "KNN"),
    ModelSpec("SVM", "LinearSVM"),
    ModelSpec("MLP", "MLP"),
    ModelSpec("LightGBM", "GBDT"),
)


def desk_scale_models(min_updates: int = 1000) -> list[ModelSpec]:
    """The study models with a floor on MLP optimiser updates.

    Eleven epochs over millions of flows amount to tens of thousands of Adam
    steps; over a few thousand rows they are ~150 steps and the networks stop
    far from convergence. The floor restores a comparable training budget.
    """
    out = []
    for spec in STUDY_MODELS:
        if ModelKind.parse(spec.kind) is ModelKind.MLP:
            spec = ModelSpec(spec.name, spec.kind, {**spec.hyperparams, "min_updates": min_updates})
        out.append(spec)
    return out


@dataclass
class DataSpec:
    path: str | None = None
    schema: str | None = None  # built-in schema name or schema file path
    nonfinite_policy: str = "drop-row"
    subsample: int | None = None  # seeded stratified subsample of the loaded rows
    synth: dict | None = None     # synth_planted keyword arguments when path is None

    def load(self, seed: int) -> tuple[Dataset, PreprocessReport]:
        if self.path is None:
            if not self.synth:
                raise ConfigError("data spec needs a CSV path or synthetic parameters")
            d = synth_planted(**self.synth)
            rep = PreprocessReport(rows_in=len(d))
        else:
            d, rep = load_csv(self.path, self.resolve_schema(), self.nonfinite_policy)
        if self.subsample and self.subsample < len(d):
            d = stratified_subsample(d, self.subsample, seed)
        return d, rep

    def resolve_schema(self) -> FeatureSchema:
        if self.schema is None:
            return infer_schema(self.path)
        if Path(self.schema).exists():
            return FeatureSchema.from_file(self.schema)
        return FeatureSchema.builtin(self.schema)


def infer_schema(path: str | Path, label_column: str = "label") -> FeatureSchema:
    """Schema for files written by :meth:`Dataset.to_csv`: every other column is a feature,
    and the classes are the distinct label strings in sorted order."""
    import pandas as pd

    df = pd.read_csv(path, nrows=None, usecols=None)
    df.columns = [str(c).strip() for c in df.columns]
    if label_column not in df.columns:
        raise DataError(f"{path}: no {label_column!r} column and no schema given")
    classes = sorted(df[label_column].astype(str).str.strip().unique())
    feats = [c for c in df.columns if c != label_column]
    return FeatureSchema.identity(feats, classes, label_column)


def stratified_subsample(d: Dataset, n: int, seed: int) -> Dataset:
    """Seeded subsample keeping class proportions (at least one row per present class)."""
    rng = np.random.default_rng(seed)
    counts = np.bincount(d.y, minlength=d.n_classes)
    quota = np.floor(counts * n / len(d)).astype(int)
    quota = np.where((counts > 0) & (quota == 0), 1, quota)
    # hand out the rounding remainder to the largest classes
    short = n - quota.sum()
    for c in np.argsort(-counts, kind="stable"):
        if short <= 0:
            break
        room = counts[c] - quota[c]
        add = min(room, short)
        quota[c] += add
        short -= add
    rows = [rng.choice(np.flatnonzero(d.y == c), size=quota[c], replace=False) for c in range(d.n_classes)
            if quota[c]]
    return d.take(np.sort(np.concatenate(rows)))


@dataclass
class AttributionBudget:
    background_size: int = 100
    explain_samples: int = 2000
    n_coalitions: int | str = 512
    xplique_samples: int = 500
    xplique_model: str | None = "DNN"  # name of the differentiable model for the nine-method suite
    pooling: str = "rank"


@dataclass
class ExperimentConfig:
    data: DataSpec = field(default_factory=DataSpec)
    models: list[ModelSpec] = field(default_factory=lambda: list(STUDY_MODELS))
    methods: list[str] = field(default_factory=lambda: list(DEFAULT_METHODS))
    k_values: list[int | str] = field(default_factory=lambda: [5, 10, 15, ALL_K])
    seed: int = 0
    train_fraction: float = 0.70
    oversample: bool = True
    normal_class: int = 0
    per_class_mode: str = "ovr"
    budget: AttributionBudget = field(default_factory=AttributionBudget)
    n_jobs: int = 1

    def validate(self, n_features: int | None = None) -> None:
        if not self.k_values:
            raise ConfigError("k_values must not be empty")
        for k in self.k_values:
            if k != ALL_K and (not isinstance(k, int) or k < 1 or (n_features is not None and k > n_features)):
                raise ConfigError(f"invalid k={k!r} for {n_features} features")
        unknown = [m for m in self.methods if m not in KNOWN_METHODS]
        if unknown:
            raise ConfigError(f"unknown selection methods {unknown}; known: {list(KNOWN_METHODS)}")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError("model names must be unique")
        needs_shap = any(m in SHAP_METHODS for m in self.methods)
        if needs_shap and self.budget.explain_samples <= 0:
            raise ConfigError("SHAP-based methods requested but the attribution budget is 0")
        needs_xplique = any(m == "voting" or m in XPLIQUE_RANKINGS for m in self.methods)
        if needs_xplique:
            if self.budget.xplique_samples <= 0:
                raise ConfigError("voting requested but the xplique sample budget is 0")
            target = self.budget.xplique_model
            spec = next((m for m in self.models if m.name == target), None)
            if spec is None or ModelKind.parse(spec.kind) is not ModelKind.MLP:
                raise ConfigError(f"voting needs a differentiable model; {target!r} is not an MLP in the model list")
        for spec in self.models:
            spec.build_hyperparams()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        data = DataSpec(**d.pop("data", {}))
        models = [ModelSpec(**m) for m in d.pop("models", [dataclasses.asdict(m) for m in STUDY_MODELS])]
        budget = AttributionBudget(**d.pop("budget", {}))
        return cls(data=data, models=models, budget=budget, **d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def derive_seed(master: int, *keys: Any) -> int:
    """Stable per-unit seed from the master seed and string/int keys."""
    words = [int(master) % 2 ** 32] + [zlib.crc32(str(k).encode()) for k in keys]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def measure_runtime(f: Callable, *args, warmup: bool = False, **kwargs) -> tuple[Any, float]:
    """Run ``f`` and return (result, wall-clock seconds) on the monotonic clock.

    With ``warmup=True`` one untimed call precedes the timed one.
    """
    if warmup:
        f(*args, **kwargs)
    start = time.perf_counter()
    out = f(*args, **kwargs)
    return out, max(time.perf_counter() - start, 0.0)


@dataclass
class ResultRow:
    model: str
    method: str
    k: int | str
    metrics: MetricSet
    per_class_accuracy: list[float]
    alert_fpr: float
    train_time_s: float
    test_time_s: float
    explain_time_s: float = 0.0
    features: list[int] = field(default_factory=list)

    def __post_init__(self):
        if min(self.train_time_s, self.test_time_s, self.explain_time_s) < 0:
            raise ValueError("times must be non-negative")


@dataclass
class PreparedData:
    train: Dataset
    test: Dataset
    report: PreprocessReport


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    """Load, deduplicate/shuffle, split, oversample the training split, min-max scale."""
    d, report = cfg.data.load(derive_seed(cfg.seed, "subsample"))
    d, delta = deduplicate_and_shuffle(d, derive_seed(cfg.seed, "shuffle"))
    report = report.merge(delta)
    tr, te = split_train_test(d, SplitSpec(cfg.train_fraction, derive_seed(cfg.seed, "split")))
    report.per_class_counts_before_oversample = tr.class_counts()
    if cfg.oversample:
        tr = oversample_random(tr, derive_seed(cfg.seed, "oversample"))
    report.per_class_counts_after_oversample = tr.class_counts()
    (tr, te), params = minmax_fit_apply(tr, [te])
    report.minmax_params = params
    return PreparedData(tr, te, report)


@dataclass
class Evaluation:
    metrics: MetricSet
    per_class: np.ndarray
    alert_fpr: float
    test_time_s: float


def evaluate_model(m: TrainedModel, test: Dataset, normal_class: int = 0, per_class_mode: str = "ovr") -> Evaluation:
    probs, t = measure_runtime(m.predict_proba, test.x, warmup=True)
    ms = evaluate(test.y, probs, test.n_classes)
    cm = confusion(test.y, np.argmax(probs, axis=1), test.n_classes)
    try:
        fpr = false_positive_rate(cm, normal_class)
    except DataError:
        fpr = float("nan")
    return Evaluation(ms, per_class_accuracy(cm, per_class_mode), fpr, t)


def _fit_and_score(spec: ModelSpec, train_set: Dataset, test: Dataset, features: Sequence[int] | None,
                   seed: int, normal_class: int, per_class_mode: str):
    kind, hp = spec.build_hyperparams()
    tr = train_set if features is None else train_set.select_features(features)
    te = test if features is None else test.select_features(features)
    model, t_train = measure_runtime(train, kind, hp, tr, seed)
    ev = evaluate_model(model, te, normal_class, per_class_mode)
    return model, t_train, ev


@dataclass
class BenchmarkResult:
    config: ExperimentConfig
    prepared: PreparedData
    rows: list[ResultRow]
    rankings: dict[str, Any]              # method -> FeatureRanking, or {model: FeatureRanking}; combined per k
    shap_importance: dict[str, attribution.GlobalImportance]
    xplique_importance: dict[str, attribution.GlobalImportance]
    explain_times: dict[str, float]
    models: dict[str, TrainedModel]
    boards: dict[str, "ScoreBoard"] = field(default_factory=dict)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.prepared.train.schema.feature_names

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.prepared.train.schema.class_names


def explain_all(cfg: ExperimentConfig, models: dict[str, TrainedModel], prep: PreparedData,
                n_jobs: int = 1):
    """Kernel SHAP global importances for every model, and the nine-method suite for the DNN."""
    b = cfg.budget
    shap_imp, xpl_imp, times = {}, {}, {}
    if b.explain_samples > 0 and any(m in SHAP_METHODS for m in cfg.methods):
        bg = attribution.BackgroundSet.sample(prep.train.x, b.background_size, derive_seed(cfg.seed, "background"))
        rng = np.random.default_rng(derive_seed(cfg.seed, "explain-set"))
        n = min(b.explain_samples, len(prep.test))
        ids = np.sort(rng.choice(len(prep.test), size=n, replace=False))
        for name, model in models.items():
            am, t = measure_runtime(attribution.explain_kernel_shap, model, prep.test.x[ids], bg, b.n_coalitions,
                                    derive_seed(cfg.seed, "shap", name), ids, n_jobs)
            shap_imp[name] = attribution.global_importance(am)
            times[name] = t
    wants_xplique = any(m == "voting" or m in XPLIQUE_RANKINGS for m in cfg.methods)
    if wants_xplique and b.xplique_samples > 0 and b.xplique_model in models:
        model = models[b.xplique_model]
        rng = np.random.default_rng(derive_seed(cfg.seed, "xplique-set"))
        n = min(b.xplique_samples, len(prep.test))
        ids = np.sort(rng.choice(len(prep.test), size=n, replace=False))
        for method in attribution.XPLIQUE_METHODS:
            am = attribution.explain_method(method, model, prep.test.x[ids],
                                            seed=derive_seed(cfg.seed, "xplique", method), sample_ids=ids)
            xpl_imp[method] = attribution.global_importance(am)
    return shap_imp, xpl_imp, times


def build_rank_context(shap_imp: dict[str, attribution.GlobalImportance], accuracies: dict[str, float],
                       schema: FeatureSchema) -> ranking.RankContext:
    return ranking.RankContext.from_importances(
        {m: (accuracies[m], gi.per_class) for m, gi in shap_imp.items()},
        schema.class_names, schema.feature_names)


def build_rankings(cfg: ExperimentConfig, prep: PreparedData, shap_imp, xpl_imp, accuracies) -> dict[str, Any]:
    """Every requested ranking. ``combined_selection`` is k-dependent and stored as ``{k: ranking}``."""
    out: dict[str, Any] = {}
    names = prep.train.schema.feature_names
    n = prep.train.n_features
    if shap_imp:
        ctx = build_rank_context(shap_imp, accuracies, prep.train.schema)
        prop = ranking.proposed_rankings(ctx, k=n, pooling=cfg.budget.pooling)
        for m in SHAP_METHODS:
            if m in cfg.methods and m != "combined_selection":
                out[m] = prop[m]
        if "combined_selection" in cfg.methods:
            inputs = [prop[m] for m in ("overall_rank", "weighted_rank", "normalized_weighted_rank",
                                        "models_attacks")]
            out["combined_selection"] = {k: ranking.combined_selection(inputs, _k_int(k, n)) for k in cfg.k_values}
    for m in baselines.BASELINE_METHODS:
        if m in cfg.methods:
            out[m] = baselines.baseline_rank(m, prep.train, seed=derive_seed(cfg.seed, "baseline", m))
    if xpl_imp:
        per_method = {m: ranking.rank_from_importance(gi.overall, f"xplique_{m}", names)
                      for m, gi in xpl_imp.items()}
        for m, r in per_method.items():
            if f"xplique_{m}" in cfg.methods:
                out[f"xplique_{m}"] = r
        if "voting" in cfg.methods:
            out["voting"] = ranking.voting(list(per_method.values()))
    return out


def _k_int(k, n: int) -> int:
    return n if k == ALL_K else int(k)


def ranking_for(rankings: dict[str, Any], method: str, model: str, k) -> ranking.FeatureRanking:
    r = rankings[method]
    if method == "model_specific":
        return r[model]
    if method == "combined_selection":
        return r[k]
    return r


def run_experiment_matrix(cfg: ExperimentConfig) -> BenchmarkResult:
    """Run the whole grid; rows come out ordered by (method, k, model) as configured."""
    prep = prepare_data(cfg)
    cfg.validate(prep.train.n_features)
    n_jobs = cfg.n_jobs

    # full-feature models
    full = Parallel(n_jobs=n_jobs)(
        delayed(_fit_and_score)(spec, prep.train, prep.test, None, derive_seed(cfg.seed, "train", spec.name),
                                cfg.normal_class, cfg.per_class_mode)
        for spec in cfg.models) if n_jobs != 1 else [
        _fit_and_score(spec, prep.train, prep.test, None, derive_seed(cfg.seed, "train", spec.name),
                       cfg.normal_class, cfg.per_class_mode) for spec in cfg.models]
    models = {spec.name: res[0] for spec, res in zip(cfg.models, full)}
    base = {spec.name: res for spec, res in zip(cfg.models, full)}
    accuracies = {name: res[2].metrics.acc for name, res in base.items()}

    shap_imp, xpl_imp, explain_times = explain_all(cfg, models, prep, n_jobs)
    rankings = build_rankings(cfg, prep, shap_imp, xpl_imp, accuracies)

    n = prep.train.n_features
    cells = []  # (method, k, spec, features)
    for method in cfg.methods:
        for k in cfg.k_values:
            for spec in cfg.models:
                # column order must not change the retrained model, so subsets are sorted
                feats = None if k == ALL_K or _k_int(k, n) == n else \
                    sorted(ranking.select_top_k(ranking_for(rankings, method, spec.name, k), _k_int(k, n)))
                cells.append((method, k, spec, feats))

    # retrain each distinct (model, feature subset) once
    unique: dict[tuple, tuple] = {}
    for method, k, spec, feats in cells:
        if feats is not None:
            unique.setdefault((spec.name, tuple(feats)), (spec, feats))
    keys = list(unique)
    jobs = [(unique[key][0], unique[key][1]) for key in keys]

    def work(spec, feats):
        _, t_train, ev = _fit_and_score(spec, prep.train, prep.test, feats,
                                        derive_seed(cfg.seed, "train", spec.name), cfg.normal_class,
                                        cfg.per_class_mode)
        return t_train, ev

    if n_jobs == 1:
        retrained = [work(s, f) for s, f in jobs]
    else:
        retrained = Parallel(n_jobs=n_jobs)(delayed(work)(s, f) for s, f in jobs)
    cache = dict(zip(keys, retrained))

    rows = []
    for method, k, spec, feats in cells:
        if feats is None:
            _, t_train, ev = base[spec.name]
            feats_out = list(range(n))
        else:
            t_train, ev = cache[(spec.name, tuple(feats))]
            feats_out = list(feats)
        rows.append(ResultRow(spec.name, method, k, ev.metrics, [float(v) for v in ev.per_class], ev.alert_fpr,
                              t_train, ev.test_time_s, explain_times.get(spec.name, 0.0), feats_out))

    result = BenchmarkResult(cfg, prep, rows, rankings, shap_imp, xpl_imp, explain_times, models)
    result.boards = build_boards(rows, cfg.methods, cfg.k_values)
    return result


def build_boards(rows: Sequence[ResultRow], methods: Sequence[str], k_values) -> dict[str, "ScoreBoard"]:
    """One scoreboard per selective k and one over all of them; k=all is not scored."""
    boards = {}
    for k in k_values:
        if k != ALL_K:
            boards[f"k={k}"] = weighted_scoring([r for r in rows if str(r.k) == str(k)], methods)
    scored_rows = [r for r in rows if r.k != ALL_K]
    if scored_rows:
        boards["overall"] = weighted_scoring(scored_rows, methods)
    return boards


@dataclass
class ScoreBoard:
    methods: list[str]
    first: dict[str, int]
    second: dict[str, int]
    third: dict[str, int]
    cells: int = 0

    def score(self, method: str) -> int:
        return 3 * self.first[method] + 2 * self.second[method] + self.third[method]

    @property
    def scores(self) -> dict[str, int]:
        return {m: self.score(m) for m in self.methods}

    @classmethod
    def from_counts(cls, counts: dict[str, tuple[int, int, int]]) -> "ScoreBoard":
        methods = list(counts)
        return cls(methods, {m: counts[m][0] for m in methods}, {m: counts[m][1] for m in methods},
                   {m: counts[m][2] for m in methods})


def _sort_key(ms: MetricSet) -> tuple[float, ...]:
    # NaN metrics sort last
    return tuple(-v if np.isfinite(v) else np.inf for v in (getattr(ms, n) for n in TIE_BREAK_ORDER))


def weighted_scoring(rows: Sequence[ResultRow], methods: Sequence[str]) -> ScoreBoard:
    """3/2/1 points for the best three methods of every (model, k) cell.

    Methods are ordered by accuracy, then precision, recall, F1, balanced
    accuracy, MCC and AUC. Methods whose whole metric chain ties share a
    placement, and the next distinct result takes the next placement.
    """
    methods = list(methods)
    board = ScoreBoard(methods, dict.fromkeys(methods, 0), dict.fromkeys(methods, 0), dict.fromkeys(methods, 0))
    by_cell: dict[tuple, dict[str, ResultRow]] = {}
    for r in rows:
        if r.method in board.first:
            by_cell.setdefault((r.model, str(r.k)), {})[r.method] = r
    for cell in sorted(by_cell):
        entries = by_cell[cell]
        missing = [m for m in methods if m not in entries]
        if missing:
            raise DataError(f"cell model={cell[0]} k={cell[1]} lacks results for {missing}")
        keyed = sorted(((_sort_key(entries[m].metrics), m) for m in methods), key=lambda t: t[0])
        place, prev = 0, None
        for key, m in keyed:
            if key != prev:
                place += 1
                prev = key
            if place > 3:
                break
            (board.first, board.second, board.third)[place - 1][m] += 1
        board.cells += 1
    return board


def confusion_for(m: TrainedModel, d: Dataset):
    return confusion(d.y, m.predict_labels(d.x), d.n_classes)


def metrics_for(m: TrainedModel, d: Dataset) -> MetricSet:
    return classification_metrics(confusion_for(m, d))
