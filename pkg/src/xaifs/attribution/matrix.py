"""Attribution matrices, global importance, and batch explanation drivers."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from . import gradients, perturbation
from .shapley import ALL, BackgroundSet, kernel_shap


@dataclass
class AttributionMatrix:
    values: np.ndarray  # [n_samples, n_classes, n_features]
    base: np.ndarray    # [n_classes]
    method: str
    sample_ids: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.base = np.asarray(self.base, dtype=np.float64)
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        if self.values.ndim != 3:
            raise ValueError("values must be [samples, classes, features]")
        if self.values.shape[0] != self.sample_ids.size:
            raise ValueError("one sample id per explained sample required")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("attributions contain non-finite values")

    def to_csv(self, path: str | Path) -> None:
        """Long format ``sample_id,class,feature,value`` plus a ``<stem>.base.csv`` sidecar."""
        path = Path(path)
        n, c, d = self.values.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "class", "feature", "value"])
            for i in range(n):
                for k in range(c):
                    for j in range(d):
                        w.writerow([int(self.sample_ids[i]), k, j, repr(float(self.values[i, k, j]))])
        with open(_base_path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "class", "base"])
            for k, b in enumerate(self.base):
                w.writerow([self.method, k, repr(float(b))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "AttributionMatrix":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = [(int(r["sample_id"]), int(r["class"]), int(r["feature"]), float(r["value"]))
                    for r in csv.DictReader(fh)]
        with open(_base_path(path), newline="") as fh:
            base_rows = list(csv.DictReader(fh))
        ids = list(dict.fromkeys(r[0] for r in rows))
        pos = {s: i for i, s in enumerate(ids)}
        n_cls = max(r[1] for r in rows) + 1
        n_feat = max(r[2] for r in rows) + 1
        values = np.zeros((len(ids), n_cls, n_feat))
        for s, k, j, v in rows:
            values[pos[s], k, j] = v
        base = np.array([float(r["base"]) for r in base_rows])
        method = base_rows[0]["method"] if base_rows else ""
        return cls(values, base, method, np.array(ids))


def _base_path(path: Path) -> Path:
    return path.with_name(path.stem + ".base.csv")


@dataclass
class GlobalImportance:
    per_class: np.ndarray  # [n_classes, n_features]
    overall: np.ndarray    # [n_features]
    method: str = ""

    def to_csv(self, path: str | Path, feature_names: Sequence[str] | None = None,
               class_names: Sequence[str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "feature", "importance"])
            n_cls, n_feat = self.per_class.shape
            for k in range(n_cls):
                for j in range(n_feat):
                    w.writerow([class_names[k] if class_names else k,
                                feature_names[j] if feature_names else j,
                                repr(float(self.per_class[k, j]))])
            for j in range(n_feat):
                w.writerow(["__overall__", feature_names[j] if feature_names else j,
                            repr(float(self.overall[j]))])

    @classmethod
    def from_csv(cls, path: str | Path, method: str = "") -> "GlobalImportance":
        per_class: dict[str, list[float]] = {}
        overall: list[float] = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                v = float(row["importance"])
                if row["class"] == "__overall__":
                    overall.append(v)
                else:
                    per_class.setdefault(row["class"], []).append(v)
        return cls(np.array(list(per_class.values())), np.array(overall), method)


def global_importance(a: AttributionMatrix) -> GlobalImportance:
    """Mean absolute attribution per class, then the class mean per feature."""
    if a.values.shape[0] < 1:
        raise ValueError("need at least one explained sample")
    per_class = np.abs(a.values).mean(axis=0)
    return GlobalImportance(per_class, per_class.mean(axis=0), a.method)


def _sample_seed(seed: int, sample_id: int) -> int:
    return int(np.random.SeedSequence([seed, int(sample_id)]).generate_state(1)[0])


def explain_kernel_shap(model, x: np.ndarray, bg: BackgroundSet, n_coalitions: int | str = ALL,
                        seed: int = 0, sample_ids=None, n_jobs: int = 1) -> AttributionMatrix:
    """Kernel SHAP over the rows of ``x`` (class-probability outputs).

    Each row gets a seed derived from ``(seed, sample_id)``, so results do not
    depend on ``n_jobs`` or on which other rows are explained.
    """
    x = np.atleast_2d(x)
    ids = np.arange(x.shape[0]) if sample_ids is None else np.asarray(sample_ids)
    jobs = (delayed(kernel_shap)(model, x[i], bg, n_coalitions, _sample_seed(seed, ids[i]))
            for i in range(x.shape[0]))
    if n_jobs == 1:
        results = [fn(*args, **kw) for fn, args, kw in jobs]
    else:
        results = Parallel(n_jobs=n_jobs)(jobs)
    values = np.stack([r.phi for r in results])
    return AttributionMatrix(values, results[0].base, f"kernel_shap[probability,{n_coalitions}]", ids)


XPLIQUE_METHODS = ("saliency", "integrated_gradients", "occlusion", "smoothgrad", "vargrad",
                   "squaregrad", "deconvnet", "gradient_input", "lime")
TARGETS = {"occlusion": "probability", "lime": "probability"}


@dataclass(frozen=True)
class XpliqueConfig:
    ig_steps: int = 64
    ig_baseline: float = 0.0
    noise_samples: int = 32
    noise_sigma: float = 0.1
    occlusion_value: float = 0.0
    lime_perturbations: int = 200
    lime_kernel_width: float | None = None
    lime_sigma: float = 0.1


def explain_method(method: str, model, x: np.ndarray, cfg: XpliqueConfig = XpliqueConfig(),
                   seed: int = 0, sample_ids=None) -> AttributionMatrix:
    """Run one of the nine gradient/perturbation methods for every class on every row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    ids = np.arange(x.shape[0]) if sample_ids is None else np.asarray(sample_ids)
    n_classes = model.n_classes
    per_class = []
    for c in range(n_classes):
        s = _sample_seed(seed, c)
        if method == "saliency":
            v = gradients.saliency(model, x, c)
        elif method == "integrated_gradients":
            v = gradients.integrated_gradients(model, x, np.full(x.shape[1], cfg.ig_baseline), cfg.ig_steps, c)
        elif method == "occlusion":
            v = perturbation.occlusion(model, x, c, cfg.occlusion_value)
        elif method in ("smoothgrad", "vargrad", "squaregrad"):
            mode = {"smoothgrad": "smooth", "vargrad": "var", "squaregrad": "square"}[method]
            v = gradients.noise_ensemble(model, x, c, mode, cfg.noise_samples, cfg.noise_sigma, s)
        elif method == "deconvnet":
            v = gradients.deconvnet_relu(model, x, c)
        elif method == "gradient_input":
            v = gradients.gradient_input(model, x, c)
        elif method == "lime":
            v = perturbation.lime_tabular(model, x, c, cfg.lime_perturbations, cfg.lime_kernel_width, s,
                                          cfg.lime_sigma)
        else:
            raise ValueError(f"unknown attribution method {method!r}")
        per_class.append(np.atleast_2d(v))
    values = np.stack(per_class, axis=1)
    target = TARGETS.get(method, "logit")
    return AttributionMatrix(values, np.zeros(n_classes), f"{method}[{target}]", ids)
