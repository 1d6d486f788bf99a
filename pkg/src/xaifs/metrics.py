"""Classification metrics computed from a confusion matrix.

Conventions: precision, recall and F1 are macro averages over classes; MCC
is the multiclass (Gorodkin) form; ratios with a zero denominator count as
0 and are reported through ``MetricSet.flags``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DataError

AVERAGING = "macro"
METRIC_NAMES = ("acc", "prec", "rec", "f1", "bacc", "mcc", "aucroc", "fpr")


class UndefinedMetricWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def one_vs_rest(self, c: int) -> tuple[int, int, int, int]:
        """(TP, FP, FN, TN) of class ``c`` against all others."""
        tp = int(self.counts[c, c])
        fp = int(self.counts[:, c].sum()) - tp
        fn = int(self.counts[c, :].sum()) - tp
        return tp, fp, fn, self.total - tp - fp - fn


@dataclass
class MetricSet:
    acc: float
    prec: float
    rec: float
    f1: float
    bacc: float
    mcc: float
    fpr: float
    aucroc: float = math.nan
    flags: list[str] = field(default_factory=list, compare=False)

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, n) for n in METRIC_NAMES)

    def as_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in METRIC_NAMES}


def confusion(true, pred, n_classes: int) -> ConfusionMatrix:
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if true.shape != pred.shape:
        raise ValueError(f"length mismatch: {true.size} true labels vs {pred.size} predictions")
    if true.size and (min(true.min(), pred.min()) < 0 or max(true.max(), pred.max()) >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    counts = np.bincount(true * n_classes + pred, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes))


def _ratio(num: float, den: float, what: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(what)
        return 0.0
    return num / den


def classification_metrics(cm: ConfusionMatrix) -> MetricSet:
    """All metrics except AUC-ROC (which needs scores, see :func:`auc_roc_ovr`)."""
    total = cm.total
    if total == 0:
        raise DataError("confusion matrix is empty")
    flags: list[str] = []
    precs, recs, f1s, fprs = [], [], [], []
    for c in range(cm.n_classes):
        tp, fp, fn, tn = cm.one_vs_rest(c)
        p = _ratio(tp, tp + fp, f"precision[{c}]", flags)
        r = _ratio(tp, tp + fn, f"recall[{c}]", flags)
        precs.append(p)
        recs.append(r)
        f1s.append(0.0 if p + r == 0 else 2 * p * r / (p + r))
        fprs.append(_ratio(fp, fp + tn, f"fpr[{c}]", flags))
    if flags:
        warnings.warn(f"undefined per-class ratios set to 0: {', '.join(flags)}", UndefinedMetricWarning,
                      stacklevel=2)
    recall_arr = np.array(recs)
    return MetricSet(
        acc=float(np.trace(cm.counts)) / total,
        prec=float(np.mean(precs)),
        rec=float(np.mean(recs)),
        f1=float(np.mean(f1s)),
        bacc=float(np.mean(recall_arr)),
        mcc=matthews(cm),
        fpr=float(np.mean(fprs)),
        flags=flags,
    )


def matthews(cm: ConfusionMatrix) -> float:
    c = cm.counts.astype(np.float64)
    s = c.sum()
    correct = np.trace(c)
    t = c.sum(axis=1)  # true occurrences per class
    p = c.sum(axis=0)  # predictions per class
    num = correct * s - p @ t
    den = math.sqrt((s * s - p @ p) * (s * s - t @ t))
    return 0.0 if den == 0 else float(num / den)


def auc_roc_ovr(probs, true, n_classes: int | None = None) -> tuple[float, list[str]]:
    """Macro one-vs-rest AUC over the classes present in ``true``.

    Uses the Mann-Whitney rank statistic with mid-ranks for ties. Returns the
    AUC and the list of skipped classes (absent from ``true``, or with no
    negatives).
    """
    probs = np.asarray(probs, dtype=np.float64)
    true = np.asarray(true, dtype=np.int64)
    n_classes = probs.shape[1] if n_classes is None else n_classes
    aucs, skipped = [], []
    for c in range(n_classes):
        pos = true == c
        n_pos = int(pos.sum())
        n_neg = true.size - n_pos
        if n_pos == 0 or n_neg == 0:
            skipped.append(f"auc[{c}]")
            continue
        ranks = rankdata(probs[:, c])
        aucs.append((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
    if not aucs:
        raise DataError("AUC undefined: need at least one class with positives and negatives")
    return float(np.mean(aucs)), skipped


def per_class_accuracy(cm: ConfusionMatrix, mode: str = "ovr") -> np.ndarray:
    """Per-class accuracy: one-vs-rest (TP+TN)/total, or per-class recall with ``mode="recall"``."""
    out = np.empty(cm.n_classes)
    for c in range(cm.n_classes):
        tp, fp, fn, tn = cm.one_vs_rest(c)
        if mode == "ovr":
            out[c] = (tp + tn) / cm.total if cm.total else 0.0
        elif mode == "recall":
            out[c] = tp / (tp + fn) if tp + fn else 0.0
        else:
            raise ValueError(f"unknown per-class accuracy mode {mode!r}")
    return out


def degenerate_classes(cm: ConfusionMatrix) -> list[int]:
    """Classes with neither true samples nor predictions."""
    return [c for c in range(cm.n_classes) if cm.counts[c, :].sum() == 0 and cm.counts[:, c].sum() == 0]


def false_positive_rate(cm: ConfusionMatrix, normal_class: int = 0) -> float:
    """Share of truly-normal samples flagged as any attack class."""
    if not 0 <= normal_class < cm.n_classes:
        raise ValueError(f"normal class {normal_class} out of range")
    normals = cm.counts[normal_class].sum()
    if normals == 0:
        raise DataError("no normal samples to compute a false positive rate")
    return float(normals - cm.counts[normal_class, normal_class]) / normals


def evaluate(true, probs, n_classes: int) -> MetricSet:
    """Full metric set from true labels and class-probability rows."""
    probs = np.asarray(probs)
    pred = np.argmax(probs, axis=1)
    cm = confusion(true, pred, n_classes)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UndefinedMetricWarning)
        ms = classification_metrics(cm)
    ms.aucroc, skipped = auc_roc_ovr(probs, true, n_classes)
    ms.flags.extend(skipped)
    return ms
