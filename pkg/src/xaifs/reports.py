"""CSV and plain-text reports for a benchmark run, plus importance bar charts.

Run directory layout::

    config.json               effective configuration
    preprocess_report.csv
    models/<name>.model
    metrics/   metrics.csv, per_attack_accuracy.csv, alert_fpr.csv, per_model_k<k>.txt
    rankings/  rankings.csv, overall_importance.csv, per_attack_top5.csv
    boards/    scoreboard_<label>.csv / .txt
    runtimes/  runtimes.csv
    charts/    importance_<model>.png / .csv

Floats are written with ``repr`` so re-parsing gives identical values.
Wall-clock times only appear under ``runtimes/``, keeping every other table
deterministic for a fixed seed.
"""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .metrics import AVERAGING, METRIC_NAMES, MetricSet
from .ranking import FeatureRanking, rank_from_importance, write_rankings_csv

METRICS_HEADER = ["model", "method", "k", *METRIC_NAMES]
METRICS_NOTE = f"# prec, rec, f1 and fpr are {AVERAGING} averages over classes; mcc is the multiclass form"


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", str(name))


def _writer(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh)


def write_metrics_csv(rows, path: Path) -> None:
    fh, w = _writer(path)
    with fh:
        fh.write(METRICS_NOTE + "\n")
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow([r.model, r.method, r.k, *(repr(float(v)) for v in r.metrics.as_tuple())])


def read_metrics_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        rec = {"model": row["model"], "method": row["method"], "k": row["k"]}
        rec.update({m: float(row[m]) for m in METRIC_NAMES})
        out.append(rec)
    return out


def _num(v: float):
    # JSON has no NaN literal
    return None if not math.isfinite(v) else v


def write_results_json(rows, path: Path) -> None:
    """Raw result rows, enough to rebuild every table and scoreboard."""
    recs = []
    for r in rows:
        recs.append({"model": r.model, "method": r.method, "k": r.k,
                     "metrics": {n: _num(float(v)) for n, v in r.metrics.as_dict().items()},
                     "per_class_accuracy": [_num(float(v)) for v in r.per_class_accuracy],
                     "alert_fpr": _num(float(r.alert_fpr)), "train_time_s": r.train_time_s,
                     "test_time_s": r.test_time_s, "explain_time_s": r.explain_time_s,
                     "features": [int(f) for f in r.features]})
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(recs, indent=1) + "\n")


def read_results_json(path: str | Path) -> list:
    from .benchmark import ResultRow

    def f(v):
        return math.nan if v is None else float(v)

    rows = []
    for d in json.loads(Path(path).read_text()):
        ms = MetricSet(**{n: f(d["metrics"][n]) for n in METRIC_NAMES})
        rows.append(ResultRow(d["model"], d["method"], d["k"], ms, [f(v) for v in d["per_class_accuracy"]],
                              f(d["alert_fpr"]), d["train_time_s"], d["test_time_s"], d["explain_time_s"],
                              d["features"]))
    return rows


def format_table(header: Sequence[str], body: Iterable[Sequence], title: str = "") -> str:
    body = [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in row] for row in body]
    widths = [max(len(str(h)), *(len(r[i]) for r in body)) if body else len(str(h)) for i, h in enumerate(header)]
    line = "-+-".join("-" * w for w in widths)
    out = [title] if title else []
    out.append(" | ".join(str(h).ljust(w) for h, w in zip(header, widths)).rstrip())
    out.append(line)
    out += [" | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in body]
    return "\n".join(out) + "\n"


def flatten_rankings(rankings: Mapping[str, object]) -> list[FeatureRanking]:
    """Expand per-model and per-k ranking groups into named rankings."""
    flat = []
    for method, r in rankings.items():
        if isinstance(r, Mapping):
            for key, sub in r.items():
                label = f"k={key}" if method == "combined_selection" else key
                flat.append(FeatureRanking(f"{method}[{label}]", sub.entries, sub.higher_is_better,
                                           sub.feature_names))
        else:
            flat.append(r)
    return flat


def write_scoreboard(board, path: Path, title: str) -> None:
    fh, w = _writer(path.with_suffix(".csv"))
    with fh:
        w.writerow(["method", "first", "second", "third", "score"])
        for m in board.methods:
            w.writerow([m, board.first[m], board.second[m], board.third[m], board.score(m)])
    body = [[m, board.first[m], board.second[m], board.third[m], board.score(m)] for m in board.methods]
    path.with_suffix(".txt").write_text(format_table(["method", "first (3)", "second (2)", "third (1)", "score"],
                                                     body, title))


def read_scoreboard(path: str | Path) -> dict[str, tuple[int, int, int, int]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {r["method"]: (int(r["first"]), int(r["second"]), int(r["third"]), int(r["score"]))
                for r in csv.DictReader(fh)}


def importance_chart(importance: np.ndarray, feature_names: Sequence[str], path: Path, title: str,
                     top: int | None = 20) -> list[str]:
    """Horizontal bar chart, most important feature on top. Returns the plotted order."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    r = rank_from_importance(importance, names=feature_names)
    order = r.order[:top] if top else r.order
    names = [feature_names[i] for i in order]
    vals = [float(importance[i]) for i in order]
    fig, ax = plt.subplots(figsize=(7, 0.3 * len(order) + 1.2))
    ax.barh(range(len(order))[::-1], vals, color="#4c72b0")
    ax.set_yticks(range(len(order))[::-1])
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("mean |attribution|")
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    fh, w = _writer(path.with_suffix(".csv"))
    with fh:
        w.writerow(["rank", "feature", "importance"])
        for i, (n, v) in enumerate(zip(names, vals), 1):
            w.writerow([i, n, repr(v)])
    return names


def emit_reports(rows, boards: Mapping[str, object], rankings: Mapping[str, object], out_dir: str | Path, *,
                 feature_names: Sequence[str], class_names: Sequence[str],
                 importances: Mapping[str, object] | None = None, charts: bool = True) -> list[Path]:
    """Write every report table for a run; returns the files written."""
    out = Path(out_dir)
    written: list[Path] = []

    metrics_path = out / "metrics" / "metrics.csv"
    write_metrics_csv(rows, metrics_path)
    written.append(metrics_path)

    ks = list(dict.fromkeys(str(r.k) for r in rows))
    for k in ks:
        body = [[r.model, r.method, *r.metrics.as_tuple()] for r in rows if str(r.k) == k]
        p = out / "metrics" / f"per_model_k{_safe(k)}.txt"
        p.write_text(format_table(["model", "method", *METRIC_NAMES], body, f"Overall results, k = {k}"))
        written.append(p)

    p = out / "metrics" / "per_attack_accuracy.csv"
    fh, w = _writer(p)
    with fh:
        w.writerow(["model", "method", "k", "class", "accuracy"])
        for r in rows:
            for c, acc in zip(class_names, r.per_class_accuracy):
                w.writerow([r.model, r.method, r.k, c, repr(float(acc))])
    written.append(p)
    body = [[r.model, r.method, r.k, *[float(a) for a in r.per_class_accuracy]] for r in rows]
    p2 = p.with_suffix(".txt")
    p2.write_text(format_table(["model", "method", "k", *class_names], body, "Accuracy by traffic class"))
    written.append(p2)

    p = out / "metrics" / "alert_fpr.csv"
    fh, w = _writer(p)
    with fh:
        w.writerow(["model", "method", "k", "alert_fpr"])
        for r in rows:
            w.writerow([r.model, r.method, r.k, repr(float(r.alert_fpr))])
    written.append(p)

    p = out / "runtimes" / "runtimes.csv"
    fh, w = _writer(p)
    with fh:
        w.writerow(["model", "method", "k", "train_time_s", "test_time_s", "explain_time_s"])
        for r in rows:
            w.writerow([r.model, r.method, r.k, f"{r.train_time_s:.6f}", f"{r.test_time_s:.6f}",
                        f"{r.explain_time_s:.6f}"])
    written.append(p)

    if rankings:
        flat = flatten_rankings(rankings)
        for r in flat:
            if r.feature_names is None:
                r.feature_names = tuple(feature_names)
        p = out / "rankings" / "rankings.csv"
        p.parent.mkdir(parents=True, exist_ok=True)
        write_rankings_csv(flat, p)
        written.append(p)

    for label, board in boards.items():
        p = out / "boards" / f"scoreboard_{_safe(label)}"
        p.parent.mkdir(parents=True, exist_ok=True)
        write_scoreboard(board, p, f"Weighted scoring ({label})")
        written += [p.with_suffix(".csv"), p.with_suffix(".txt")]

    if importances:
        written += _importance_tables(importances, out, feature_names, class_names, charts)
    return written


def _importance_tables(importances, out: Path, feature_names, class_names, charts: bool) -> list[Path]:
    written = []
    p = out / "rankings" / "overall_importance.csv"
    fh, w = _writer(p)
    with fh:
        w.writerow(["model", "rank", "feature", "importance"])
        for model, gi in importances.items():
            r = rank_from_importance(gi.overall, names=feature_names)
            for i, (f, s) in enumerate(r.entries, 1):
                w.writerow([model, i, feature_names[f], repr(s)])
    written.append(p)

    # per-class top five, importances averaged over models
    pooled = np.mean([gi.per_class for gi in importances.values()], axis=0)
    p = out / "rankings" / "per_attack_top5.csv"
    fh, w = _writer(p)
    with fh:
        w.writerow(["class", "rank", "feature", "importance"])
        for c, cname in enumerate(class_names):
            r = rank_from_importance(pooled[c], names=feature_names)
            for i, (f, s) in enumerate(r.entries[:5], 1):
                w.writerow([cname, i, feature_names[f], repr(s)])
    written.append(p)

    if charts:
        for model, gi in importances.items():
            p = out / "charts" / f"importance_{_safe(model)}.png"
            importance_chart(gi.overall, feature_names, p, f"Global importance: {model}")
            written += [p, p.with_suffix(".csv")]
    return written
