"""Flow-table ingestion and preprocessing.

Loading, exact-duplicate removal, shuffling, random oversampling, min-max
scaling and the train/test split, plus a synthetic generator with planted
informative features for desk-scale runs.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, InputError, LabelError, SchemaError

logger = logging.getLogger(__name__)

NONFINITE_POLICIES = ("drop-row", "zero", "median")


@dataclass(frozen=True)
class FeatureSchema:
    feature_names: tuple[str, ...]
    label_column: str
    label_map: dict[str, int]
    class_names: tuple[str, ...]
    # column -> {category string: numeric code}
    encodings: dict[str, dict[str, float]] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if len(set(self.feature_names)) != len(self.feature_names):
            dupes = sorted({f for f in self.feature_names if self.feature_names.count(f) > 1})
            raise SchemaError(f"duplicate feature names: {dupes}")
        if self.label_column in self.feature_names:
            raise SchemaError(f"label column {self.label_column!r} is also listed as a feature")
        for raw, idx in self.label_map.items():
            if not 0 <= idx < len(self.class_names):
                raise SchemaError(f"label {raw!r} maps to class index {idx} outside {len(self.class_names)} classes")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, feature_ids: Sequence[int]) -> "FeatureSchema":
        names = tuple(self.feature_names[i] for i in feature_ids)
        return replace(self, feature_names=names,
                       encodings={k: v for k, v in self.encodings.items() if k in names})

    @classmethod
    def from_file(cls, path: str | Path) -> "FeatureSchema":
        return parse_schema(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def builtin(cls, name: str) -> "FeatureSchema":
        """Load one of the shipped schemas: ``cicids2017`` or ``simargl2021``."""
        try:
            text = resources.files("xaifs").joinpath("schemas", f"{name}.schema").read_text(encoding="utf-8")
        except FileNotFoundError:
            raise SchemaError(f"no built-in schema named {name!r}") from None
        return parse_schema(text)

    @classmethod
    def identity(cls, feature_names: Sequence[str], class_names: Sequence[str],
                 label_column: str = "label") -> "FeatureSchema":
        """Schema whose label strings are the class names themselves."""
        return cls(tuple(feature_names), label_column,
                   {c: i for i, c in enumerate(class_names)}, tuple(class_names))

    def to_text(self) -> str:
        lines = []
        if self.name:
            lines.append(f"name: {self.name}")
        lines.append(f"label_column: {self.label_column}")
        lines += [f"class: {c}" for c in self.class_names]
        lines += [f"label: {raw} = {self.class_names[i]}" for raw, i in self.label_map.items()]
        for col, codes in self.encodings.items():
            parts = " | ".join(f"{k} = {v:g}" for k, v in codes.items())
            lines.append(f"encode: {col} | {parts}")
        lines += [f"feature: {f}" for f in self.feature_names]
        return "\n".join(lines) + "\n"


def parse_schema(text: str) -> FeatureSchema:
    """Parse the line-oriented ``key: value`` schema format.

    Keys: ``name``, ``label_column`` (once); ``class``, ``feature`` (repeated,
    order-preserving); ``label: <raw string> = <class name>``;
    ``encode: <column> | <category> = <code> | ...``. ``#`` starts a comment line.
    """
    name = ""
    label_column = None
    classes: list[str] = []
    features: list[str] = []
    raw_labels: list[tuple[str, str]] = []
    encodings: dict[str, dict[str, float]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition(":")
        if not sep:
            raise SchemaError(f"line {lineno}: expected 'key: value', got {stripped!r}")
        key, value = key.strip(), value.strip()
        if key == "name":
            name = value
        elif key == "label_column":
            label_column = value
        elif key == "class":
            classes.append(value)
        elif key == "feature":
            features.append(value)
        elif key == "label":
            raw, sep, cls = value.rpartition(" = ")
            if not sep:
                raw, cls = value, value
            raw_labels.append((raw.strip(), cls.strip()))
        elif key == "encode":
            col, *pairs = [p.strip() for p in value.split("|")]
            codes = {}
            for pair in pairs:
                cat, _, code = pair.rpartition("=")
                codes[cat.strip()] = float(code)
            encodings[col] = codes
        else:
            raise SchemaError(f"line {lineno}: unknown key {key!r}")
    if label_column is None:
        raise SchemaError("schema has no label_column")
    if not classes:
        raise SchemaError("schema declares no classes")
    index = {c: i for i, c in enumerate(classes)}
    label_map = {}
    for raw, cls in raw_labels:
        if cls not in index:
            raise SchemaError(f"label {raw!r} maps to undeclared class {cls!r}")
        label_map[raw] = index[cls]
    if not label_map:
        label_map = dict(index)
    return FeatureSchema(tuple(features), label_column, label_map, tuple(classes), encodings, name)


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    schema: FeatureSchema

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 2:
            raise DataError(f"x must be 2-D, got shape {x.shape}")
        if x.shape[0] != y.shape[0]:
            raise DataError(f"x has {x.shape[0]} rows but y has {y.shape[0]} labels")
        if x.shape[1] != self.schema.n_features:
            raise DataError(f"x has {x.shape[1]} columns, schema lists {self.schema.n_features} features")
        if not np.all(np.isfinite(x)):
            raise DataError("x contains non-finite values")
        if y.size and (y.min() < 0 or y.max() >= self.schema.n_classes):
            raise DataError("label index outside the schema's class range")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    @property
    def n_classes(self) -> int:
        return self.schema.n_classes

    def take(self, rows) -> "Dataset":
        return Dataset(self.x[rows], self.y[rows], self.schema)

    def select_features(self, feature_ids: Sequence[int]) -> "Dataset":
        ids = list(feature_ids)
        return Dataset(self.x[:, ids], self.y, self.schema.subset(ids))

    def class_counts(self) -> dict[str, int]:
        counts = np.bincount(self.y, minlength=self.n_classes)
        return {name: int(c) for name, c in zip(self.schema.class_names, counts)}

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.x, columns=list(self.schema.feature_names))
        df[self.schema.label_column] = [self.schema.class_names[i] for i in self.y]
        return df

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


@dataclass
class PreprocessReport:
    rows_in: int = 0
    duplicates_removed: int = 0
    nonfinite_cells_handled: int = 0
    nonfinite_rows_dropped: int = 0
    per_class_counts_before_oversample: dict[str, int] = field(default_factory=dict)
    per_class_counts_after_oversample: dict[str, int] = field(default_factory=dict)
    minmax_params: dict[str, tuple[float, float]] = field(default_factory=dict)

    def merge(self, other: "PreprocessReport") -> "PreprocessReport":
        """Fold a stage's delta report into this one; non-empty fields of ``other`` win."""
        return PreprocessReport(
            rows_in=self.rows_in or other.rows_in,
            duplicates_removed=self.duplicates_removed + other.duplicates_removed,
            nonfinite_cells_handled=self.nonfinite_cells_handled + other.nonfinite_cells_handled,
            nonfinite_rows_dropped=self.nonfinite_rows_dropped + other.nonfinite_rows_dropped,
            per_class_counts_before_oversample=other.per_class_counts_before_oversample
            or self.per_class_counts_before_oversample,
            per_class_counts_after_oversample=other.per_class_counts_after_oversample
            or self.per_class_counts_after_oversample,
            minmax_params=other.minmax_params or self.minmax_params,
        )

    def rows(self) -> list[tuple[str, str, str]]:
        out = [
            ("rows_in", "", str(self.rows_in)),
            ("duplicates_removed", "", str(self.duplicates_removed)),
            ("nonfinite_cells_handled", "", str(self.nonfinite_cells_handled)),
            ("nonfinite_rows_dropped", "", str(self.nonfinite_rows_dropped)),
        ]
        out += [("count_before_oversample", k, str(v)) for k, v in self.per_class_counts_before_oversample.items()]
        out += [("count_after_oversample", k, str(v)) for k, v in self.per_class_counts_after_oversample.items()]
        for k, (lo, hi) in self.minmax_params.items():
            out.append(("minmax_min", k, repr(lo)))
            out.append(("minmax_max", k, repr(hi)))
        return out

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["field", "key", "value"])
            w.writerows(self.rows())

    @classmethod
    def from_csv(cls, path: str | Path) -> "PreprocessReport":
        rep = cls()
        mins, maxs = {}, {}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                f, k, v = row["field"], row["key"], row["value"]
                if f == "count_before_oversample":
                    rep.per_class_counts_before_oversample[k] = int(v)
                elif f == "count_after_oversample":
                    rep.per_class_counts_after_oversample[k] = int(v)
                elif f == "minmax_min":
                    mins[k] = float(v)
                elif f == "minmax_max":
                    maxs[k] = float(v)
                else:
                    setattr(rep, f, int(v))
        rep.minmax_params = {k: (mins[k], maxs[k]) for k in mins}
        return rep


def _encode_column(col: pd.Series, name: str, schema: FeatureSchema) -> pd.Series:
    if name in schema.encodings:
        codes = schema.encodings[name]
        as_text = col.astype(str).str.strip()
        unknown = sorted(set(as_text) - set(codes))
        if unknown:
            raise SchemaError(f"column {name!r} has categories without an encoding: {unknown[:5]}")
        return as_text.map(codes).astype(np.float64)
    if col.dtype.kind in "biuf":
        return col.astype(np.float64)
    # "Infinity", "NaN" and friends parse to floats; anything else is a data error
    converted = pd.to_numeric(col.astype(str).str.strip(), errors="coerce")
    bad = converted.isna() & ~col.astype(str).str.strip().str.lower().isin(["nan", "", "inf", "-inf", "infinity", "-infinity"])
    if bad.any():
        raise DataError(f"column {name!r} holds non-numeric value {col[bad].iloc[0]!r}")
    return converted.astype(np.float64)


def load_csv(path: str | Path, schema: FeatureSchema,
             nonfinite_policy: str = "drop-row") -> tuple[Dataset, PreprocessReport]:
    """Read a flow CSV into a :class:`Dataset`.

    Header cells are whitespace-stripped. Raw label strings are mapped through
    ``schema.label_map``; non-finite feature cells (Infinity/NaN) are handled
    per ``nonfinite_policy``.
    """
    if nonfinite_policy not in NONFINITE_POLICIES:
        raise ValueError(f"nonfinite_policy must be one of {NONFINITE_POLICIES}")
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    try:
        df = pd.read_csv(path, encoding="utf-8", encoding_errors="replace",
                         skipinitialspace=True, low_memory=False, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise InputError(f"{path}: file is empty") from None
    df.columns = [str(c).strip() for c in df.columns]
    if df.empty:
        raise InputError(f"{path}: no data rows")
    for col in (schema.label_column, *schema.feature_names):
        if col not in df.columns:
            raise SchemaError(f"{path}: missing column {col!r}")

    raw_labels = df[schema.label_column].astype(str).str.strip()
    mapped = raw_labels.map(schema.label_map)
    if mapped.isna().any():
        bad = raw_labels[mapped.isna()].iloc[0]
        raise LabelError(f"{path}: label {bad!r} has no class mapping")

    x = np.column_stack([_encode_column(df[f], f, schema).to_numpy() for f in schema.feature_names]) \
        if schema.n_features else np.empty((len(df), 0))
    y = mapped.to_numpy(dtype=np.int64)
    report = PreprocessReport(rows_in=len(df))

    bad_cells = ~np.isfinite(x)
    report.nonfinite_cells_handled = int(bad_cells.sum())
    if report.nonfinite_cells_handled:
        if nonfinite_policy == "drop-row":
            keep = ~bad_cells.any(axis=1)
            report.nonfinite_rows_dropped = int((~keep).sum())
            x, y = x[keep], y[keep]
        elif nonfinite_policy == "zero":
            x = np.where(bad_cells, 0.0, x)
        else:
            masked = np.where(bad_cells, np.nan, x)
            med = np.nanmedian(masked, axis=0)
            med = np.where(np.isfinite(med), med, 0.0)
            x = np.where(bad_cells, med[None, :], x)
        logger.info("%s: %d non-finite cells handled with policy %s",
                    path.name, report.nonfinite_cells_handled, nonfinite_policy)
    return Dataset(x, y, schema), report


def deduplicate_and_shuffle(d: Dataset, seed: int) -> tuple[Dataset, PreprocessReport]:
    """Drop rows that repeat an earlier (features, label) row, then permute the survivors."""
    if len(d) == 0:
        return d, PreprocessReport()
    full = np.column_stack([d.x, d.y.astype(np.float64)])
    # -0.0 and 0.0 are the same value; normalise before byte-wise comparison
    full = full + 0.0
    _, first = np.unique(full, axis=0, return_index=True)
    first.sort()
    removed = len(d) - first.size
    rng = np.random.default_rng(seed)
    order = first[rng.permutation(first.size)]
    return d.take(order), PreprocessReport(duplicates_removed=removed)


def oversample_random(d: Dataset, seed: int) -> Dataset:
    """Duplicate minority-class rows (with replacement) until every class matches the majority."""
    counts = np.bincount(d.y, minlength=d.n_classes)
    empty = [d.schema.class_names[c] for c in np.flatnonzero(counts == 0)]
    if empty:
        raise DataError(f"cannot oversample: no samples for class(es) {empty}")
    target = counts.max()
    rng = np.random.default_rng(seed)
    extra = []
    for c in range(d.n_classes):
        need = target - counts[c]
        if need:
            members = np.flatnonzero(d.y == c)
            extra.append(rng.choice(members, size=need, replace=True))
    if not extra:
        return d
    rows = np.concatenate([np.arange(len(d)), *extra])
    return d.take(rows)


def minmax_fit_apply(train: Dataset, others: Iterable[Dataset] = ()) -> tuple[list[Dataset], dict[str, tuple[float, float]]]:
    """Scale columns to [0, 1] with the training split's min/max.

    Returns the scaled ``[train, *others]`` and a ``{feature: (min, max)}`` map.
    Constant training columns map to 0 everywhere.
    """
    if len(train) == 0:
        raise DataError("cannot fit min-max scaling on an empty training set")
    lo = train.x.min(axis=0)
    hi = train.x.max(axis=0)
    params = {name: (float(a), float(b)) for name, a, b in zip(train.schema.feature_names, lo, hi)}
    return [apply_minmax(ds, params) for ds in (train, *others)], params


def apply_minmax(d: Dataset, params: dict[str, tuple[float, float]]) -> Dataset:
    lo = np.array([params[f][0] for f in d.schema.feature_names])
    hi = np.array([params[f][1] for f in d.schema.feature_names])
    span = hi - lo
    constant = span == 0
    scaled = (d.x - lo) / np.where(constant, 1.0, span)
    scaled[:, constant] = 0.0
    return Dataset(scaled, d.y, d.schema)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.70
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def split_train_test(d: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    n = len(d)
    if n < 2:
        raise DataError("need at least two rows to split")
    n_train = min(max(int(round(spec.train_fraction * n)), 1), n - 1)
    perm = np.random.default_rng(spec.seed).permutation(n)
    return d.take(np.sort(perm[:n_train])), d.take(np.sort(perm[n_train:]))


def synth_planted(n_samples: int, n_features: int, n_informative: int, n_classes: int,
                  seed: int, separation: float = 2.0) -> Dataset:
    """Gaussian class-conditional data where only the first ``n_informative`` columns carry signal.

    Labels are drawn uniformly. Each class ``c`` gets a mean vector
    ``separation * m_c`` on the informative coordinates, where ``m_c`` is a
    random sign pattern (re-drawn until class means are distinct and every
    informative column takes both signs, so each one is label-dependent); every
    coordinate then receives unit-variance Gaussian noise. The remaining
    ``n_features - n_informative`` columns are pure N(0, 1) noise, independent
    of the label.
    """
    if n_samples < 1 or n_features < 1:
        raise ValueError("n_samples and n_features must be positive")
    if not 0 <= n_informative <= n_features:
        raise ValueError("n_informative must lie in [0, n_features]")
    if n_classes < 2:
        raise ValueError("n_classes must be at least 2")
    rng = np.random.default_rng(seed)
    means = np.zeros((n_classes, n_informative))
    if n_informative:
        if n_classes == 2:
            signs = rng.choice([-1.0, 1.0], size=n_informative)
            means = np.stack([signs, -signs])
        else:
            for _ in range(1000):
                means = rng.choice([-1.0, 1.0], size=(n_classes, n_informative))
                distinct = len({tuple(r) for r in means}) == n_classes or 2 ** n_informative < n_classes
                if distinct and np.all(means.min(axis=0) < means.max(axis=0)):
                    break
    y = rng.integers(0, n_classes, size=n_samples)
    x = rng.standard_normal((n_samples, n_features))
    x[:, :n_informative] += separation * means[y]
    names = [f"inf_{i}" if i < n_informative else f"noise_{i}" for i in range(n_features)]
    classes = [f"class_{c}" for c in range(n_classes)]
    return Dataset(x, y, FeatureSchema.identity(names, classes))
