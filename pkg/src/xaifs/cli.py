"""Command-line frontend: one subcommand per pipeline stage plus ``benchmark``.

Stages share a run directory (``--out``). ``prepare`` snapshots the effective
configuration there; later stages reuse that snapshot unless ``--config`` or
the ``XAIFS_CONFIG`` environment variable points elsewhere. Flags always win
over file values.

Exit status: 0 ok, 1 usage or configuration error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from . import attribution, benchmark, ranking, reports
from .benchmark import ALL_K, STUDY_MODELS, ExperimentConfig, ModelSpec, PreparedData
from .errors import ConfigError, DataError, XaifsError
from .flowdata import FeatureSchema, PreprocessReport, load_csv, synth_planted
from .models import ModelKind, load_model, save_model

log = logging.getLogger("xaifs")

CONFIG_ENV = "XAIFS_CONFIG"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _k_list(text: str) -> list:
    out = []
    for t in _csv_list(text):
        if t.lower() == ALL_K:
            out.append(ALL_K)
        else:
            try:
                out.append(int(t))
            except ValueError:
                raise argparse.ArgumentTypeError(f"k must be an integer or 'all', got {t!r}") from None
    return out


def _coalitions(text: str):
    return attribution.ALL if text == attribution.ALL else int(text)


def _config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (flags override the config file)")
    g.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV}, then the run snapshot)")
    g.add_argument("--out", default="run", help="run directory (default: %(default)s)")
    g.add_argument("--data", help="flow CSV path")
    g.add_argument("--schema", help="built-in schema name (cicids2017, simargl2021) or schema file")
    g.add_argument("--subsample", type=int, help="seeded stratified subsample size")
    g.add_argument("--nonfinite", choices=["drop-row", "zero", "median"], help="NaN/Inf handling")
    g.add_argument("--models", type=_csv_list, help="comma list of model names or kinds")
    g.add_argument("--methods", type=_csv_list, help="comma list of selection methods")
    g.add_argument("--k", type=_k_list, help="comma list of k values, e.g. 5,10,15,all")
    g.add_argument("--seed", type=int)
    g.add_argument("--n-jobs", type=int)
    g.add_argument("--train-fraction", type=float)
    g.add_argument("--no-oversample", action="store_true")
    g.add_argument("--min-updates", type=int, help="floor on MLP optimiser updates")
    g.add_argument("--background", type=int, help="SHAP background rows")
    g.add_argument("--explain-samples", type=int, help="test rows explained per model")
    g.add_argument("--coalitions", type=_coalitions, help="Kernel SHAP coalitions per sample, or 'all'")
    g.add_argument("--xplique-samples", type=int)
    g.add_argument("--pooling", choices=["rank", "importance"], help="per-attack rank pooling")


def _resolve_models(names: list[str]) -> list[ModelSpec]:
    known = {m.name.lower(): m for m in STUDY_MODELS}
    out = []
    for n in names:
        if n.lower() in known:
            out.append(known[n.lower()])
            continue
        try:
            kind = ModelKind.parse(n)
        except ValueError:
            raise ConfigError(f"unknown model {n!r}; use one of {[m.name for m in STUDY_MODELS]} "
                              f"or a kind {[k.value for k in ModelKind]}") from None
        out.append(ModelSpec(kind.value, kind.value))
    return out


def build_config(args) -> ExperimentConfig:
    """File config (explicit, env var, or run snapshot) with flag overrides applied."""
    path = args.config or os.environ.get(CONFIG_ENV)
    snapshot = Path(args.out) / "config.json"
    if path:
        if not Path(path).exists():
            raise ConfigError(f"config file {path} not found")
        cfg = ExperimentConfig.load(path)
    elif snapshot.exists() and args.command != "benchmark":
        cfg = ExperimentConfig.load(snapshot)
    else:
        cfg = ExperimentConfig()
    d = cfg.data
    if args.data:
        d.path, d.synth = args.data, None
    if args.schema:
        d.schema = args.schema
    if args.subsample is not None:
        d.subsample = args.subsample
    if args.nonfinite:
        d.nonfinite_policy = args.nonfinite
    if args.models:
        cfg.models = _resolve_models(args.models)
    if args.min_updates is not None:
        cfg.models = [ModelSpec(m.name, m.kind, {**m.hyperparams, "min_updates": args.min_updates})
                      if ModelKind.parse(m.kind) is ModelKind.MLP else m for m in cfg.models]
    if args.methods:
        cfg.methods = args.methods
    if args.k:
        cfg.k_values = args.k
    for flag, attr in (("seed", "seed"), ("n_jobs", "n_jobs"), ("train_fraction", "train_fraction")):
        if getattr(args, flag) is not None:
            setattr(cfg, attr, getattr(args, flag))
    if args.no_oversample:
        cfg.oversample = False
    b = cfg.budget
    for flag, attr in (("background", "background_size"), ("explain_samples", "explain_samples"),
                       ("coalitions", "n_coalitions"), ("xplique_samples", "xplique_samples"),
                       ("pooling", "pooling")):
        if getattr(args, flag) is not None:
            setattr(b, attr, getattr(args, flag))
    if d.path is None and not d.synth:
        raise ConfigError("no dataset: pass --data or a config with a data section")
    return cfg


# run-directory plumbing

def _save_prepared(prep: PreparedData, run: Path) -> None:
    (run / "data").mkdir(parents=True, exist_ok=True)
    (run / "data" / "schema.schema").write_text(prep.train.schema.to_text())
    prep.train.to_csv(run / "data" / "train.csv")
    prep.test.to_csv(run / "data" / "test.csv")
    prep.report.to_csv(run / "preprocess_report.csv")


def _load_prepared(run: Path) -> PreparedData:
    schema_path = run / "data" / "schema.schema"
    if not schema_path.exists():
        raise DataError(f"{run} holds no prepared data; run `xaifs prepare --out {run}` first")
    schema = FeatureSchema.from_file(schema_path)
    train, _ = load_csv(run / "data" / "train.csv", schema)
    test, _ = load_csv(run / "data" / "test.csv", schema)
    return PreparedData(train, test, PreprocessReport.from_csv(run / "preprocess_report.csv"))


def _load_models(cfg: ExperimentConfig, run: Path) -> dict:
    out = {}
    for spec in cfg.models:
        p = run / "models" / f"{spec.name}.model"
        if not p.exists():
            raise DataError(f"missing model artifact {p}; run `xaifs train` first")
        out[spec.name] = load_model(p)
    return out


def _save_importances(shap_imp, xpl_imp, run: Path, schema) -> None:
    (run / "attributions").mkdir(parents=True, exist_ok=True)
    for prefix, group in (("shap", shap_imp), ("xplique", xpl_imp)):
        for name, gi in group.items():
            gi.to_csv(run / "attributions" / f"{prefix}_{name}.csv", schema.feature_names, schema.class_names)


def _load_importances(cfg: ExperimentConfig, run: Path):
    shap_imp, xpl_imp = {}, {}
    for spec in cfg.models:
        p = run / "attributions" / f"shap_{spec.name}.csv"
        if p.exists():
            shap_imp[spec.name] = attribution.GlobalImportance.from_csv(p, "kernel_shap")
    for m in attribution.XPLIQUE_METHODS:
        p = run / "attributions" / f"xplique_{m}.csv"
        if p.exists():
            xpl_imp[m] = attribution.GlobalImportance.from_csv(p, m)
    return shap_imp, xpl_imp


def _read_accuracies(run: Path) -> dict[str, float]:
    p = run / "metrics" / "evaluation.csv"
    if not p.exists():
        raise DataError(f"missing {p}; run `xaifs evaluate` first")
    return {r["model"]: r["acc"] for r in reports.read_metrics_csv(p)}


def _snapshot(cfg: ExperimentConfig, run: Path) -> None:
    run.mkdir(parents=True, exist_ok=True)
    cfg.save(run / "config.json")


# subcommands

def cmd_synth(args) -> int:
    d = synth_planted(args.samples, args.features, args.informative, args.classes, args.seed, args.separation)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    d.to_csv(args.out)
    print(f"wrote {len(d)} rows x {d.n_features} features ({args.informative} informative) to {args.out}")
    return EXIT_OK


def cmd_prepare(args) -> int:
    cfg = build_config(args)
    run = Path(args.out)
    prep = benchmark.prepare_data(cfg)
    cfg.validate(prep.train.n_features)
    _snapshot(cfg, run)
    _save_prepared(prep, run)
    print(f"train {len(prep.train)} rows, test {len(prep.test)} rows, {prep.train.n_features} features -> {run}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = build_config(args)
    run = Path(args.out)
    prep = _load_prepared(run)
    _snapshot(cfg, run)
    (run / "models").mkdir(parents=True, exist_ok=True)
    for spec in cfg.models:
        kind, hp = spec.build_hyperparams()
        m, t = benchmark.measure_runtime(benchmark.train, kind, hp, prep.train,
                                         benchmark.derive_seed(cfg.seed, "train", spec.name))
        save_model(m, run / "models" / f"{spec.name}.model")
        print(f"{spec.name}: trained in {t:.2f}s")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = build_config(args)
    run = Path(args.out)
    prep = _load_prepared(run)
    rows = []
    for name, m in _load_models(cfg, run).items():
        ev = benchmark.evaluate_model(m, prep.test, cfg.normal_class, cfg.per_class_mode)
        rows.append(benchmark.ResultRow(name, "all_features", ALL_K, ev.metrics, list(ev.per_class),
                                        ev.alert_fpr, 0.0, ev.test_time_s))
    reports.write_metrics_csv(rows, run / "metrics" / "evaluation.csv")
    body = [[r.model, *r.metrics.as_tuple()] for r in rows]
    print(reports.format_table(["model", *reports.METRIC_NAMES], body, "Full-feature evaluation"), end="")
    return EXIT_OK


def cmd_explain(args) -> int:
    cfg = build_config(args)
    run = Path(args.out)
    prep = _load_prepared(run)
    models = _load_models(cfg, run)
    shap_imp, xpl_imp, times = benchmark.explain_all(cfg, models, prep, cfg.n_jobs)
    _save_importances(shap_imp, xpl_imp, run, prep.train.schema)
    for name, t in times.items():
        print(f"{name}: explained in {t:.2f}s")
    if xpl_imp:
        print(f"gradient/perturbation suite: {', '.join(xpl_imp)}")
    return EXIT_OK


def _rankings_from_run(cfg: ExperimentConfig, run: Path, prep: PreparedData) -> dict:
    shap_imp, xpl_imp = _load_importances(cfg, run)
    accs = _read_accuracies(run) if shap_imp else {}
    return benchmark.build_rankings(cfg, prep, shap_imp, xpl_imp, accs)


def _pick(rankings: dict, method: str, model: str | None, k):
    if method not in rankings:
        raise ConfigError(f"no ranking for {method!r}; available: {sorted(rankings)}")
    r = rankings[method]
    if method == "model_specific":
        if model not in r:
            raise ConfigError(f"model_specific needs --model, one of {sorted(r)}")
        return r[model]
    if method == "combined_selection":
        return r[k]
    return r


def cmd_rank(args) -> int:
    cfg = build_config(args)
    run = Path(args.out)
    prep = _load_prepared(run)
    if args.method:
        cfg.methods = [args.method]
    cfg.validate(prep.train.n_features)
    rankings = _rankings_from_run(cfg, run, prep)
    n = prep.train.n_features
    if not args.method:
        flat = reports.flatten_rankings(rankings)
        (run / "rankings").mkdir(parents=True, exist_ok=True)
        ranking.write_rankings_csv(flat, run / "rankings" / "rankings.csv")
        print(f"wrote {len(flat)} rankings to {run / 'rankings' / 'rankings.csv'}")
        return EXIT_OK
    k = cfg.k_values[0]
    kk = n if k == ALL_K else int(k)
    r = _pick(rankings, args.method, args.model, k)
    path = Path(args.output) if args.output else run / "rankings" / f"{args.method}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "rank", "feature", "score", "selected"])
        for method, pos, feat, score in r.rows():
            w.writerow([method, pos, feat, repr(score), int(pos <= kk)])
    print("top-{}: {}".format(kk, ", ".join(r.name_of(f) for f in r.order[:kk])))
    return EXIT_OK


def cmd_select(args) -> int:
    cfg = build_config(args)
    run = Path(args.out)
    prep = _load_prepared(run)
    names = list(prep.train.schema.feature_names)
    k = cfg.k_values[0]
    kk = len(names) if k == ALL_K else int(k)
    if args.ranking:
        with open(args.ranking, newline="", encoding="utf-8") as fh:
            ordered = [row["feature"] for row in csv.DictReader(fh)
                       if args.method is None or row["method"] == args.method]
        unknown = [f for f in ordered if f not in names]
        if unknown or len(set(ordered)) != len(ordered) or not ordered:
            raise DataError(f"{args.ranking} does not hold a single ranking over this dataset's features")
        feats = [names.index(f) for f in ordered[:kk]]
    elif args.method:
        cfg.methods = [args.method]
        r = _pick(_rankings_from_run(cfg, run, prep), args.method, args.model, k)
        feats = ranking.select_top_k(r, kk)
    else:
        raise ConfigError("select needs --method or --ranking")
    feats = sorted(feats)
    dest = run / "selected" / f"{args.method or Path(args.ranking).stem}_k{kk}"
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "features.txt").write_text("".join(names[f] + "\n" for f in feats))
    prep.train.select_features(feats).to_csv(dest / "train.csv")
    prep.test.select_features(feats).to_csv(dest / "test.csv")
    print(f"selected {len(feats)} features -> {dest}")
    return EXIT_OK


def write_run(result: benchmark.BenchmarkResult, run: Path, charts: bool = True) -> None:
    """Persist a finished benchmark: snapshot, data report, models, attributions, all reports."""
    _snapshot(result.config, run)
    (run / "data").mkdir(parents=True, exist_ok=True)
    (run / "data" / "schema.schema").write_text(result.prepared.train.schema.to_text())
    result.prepared.report.to_csv(run / "preprocess_report.csv")
    (run / "models").mkdir(parents=True, exist_ok=True)
    for name, m in result.models.items():
        save_model(m, run / "models" / f"{name}.model")
    _save_importances(result.shap_importance, result.xplique_importance, run, result.prepared.train.schema)
    reports.write_results_json(result.rows, run / "results.json")
    reports.emit_reports(result.rows, result.boards, result.rankings, run,
                         feature_names=result.feature_names, class_names=result.class_names,
                         importances=result.shap_importance, charts=charts)


def cmd_benchmark(args) -> int:
    cfg = build_config(args)
    run = Path(args.out)
    result = benchmark.run_experiment_matrix(cfg)
    write_run(result, run, charts=not args.no_charts)
    for label, board in result.boards.items():
        best = max(board.methods, key=board.score)
        print(f"{label}: best method {best} ({board.score(best)} points)")
    print(f"run directory: {run}")
    return EXIT_OK


def cmd_report(args) -> int:
    run = Path(args.out)
    if not (run / "results.json").exists():
        raise DataError(f"{run} holds no results.json; run `xaifs benchmark` first")
    cfg = ExperimentConfig.load(run / "config.json")
    rows = reports.read_results_json(run / "results.json")
    boards = benchmark.build_boards(rows, cfg.methods, cfg.k_values)
    schema_feats, classes = _names_from_run(run)
    shap_imp, _ = _load_importances(cfg, run)
    reports.emit_reports(rows, boards, {}, run, feature_names=schema_feats, class_names=classes,
                         importances=shap_imp or None, charts=not args.no_charts)
    for label in boards:
        print((run / "boards" / f"scoreboard_{reports._safe(label)}.txt").read_text())
    return EXIT_OK


def _names_from_run(run: Path):
    schema = FeatureSchema.from_file(run / "data" / "schema.schema")
    return schema.feature_names, schema.class_names


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="xaifs", description="Attribution-driven feature selection benchmark for flow-based IDS")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="write a planted-feature synthetic dataset")
    s.add_argument("--samples", type=int, default=20000)
    s.add_argument("--features", type=int, default=30)
    s.add_argument("--informative", type=int, default=5)
    s.add_argument("--classes", type=int, default=3)
    s.add_argument("--separation", type=float, default=2.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output CSV")
    s.set_defaults(func=cmd_synth)

    for name, func, help_ in (("prepare", cmd_prepare, "load, clean, split, oversample and scale"),
                              ("train", cmd_train, "train every configured model on prepared data"),
                              ("evaluate", cmd_evaluate, "score trained models on the test split"),
                              ("explain", cmd_explain, "global attributions for trained models"),
                              ("rank", cmd_rank, "feature rankings from attributions or baselines"),
                              ("select", cmd_select, "write top-k feature subsets"),
                              ("benchmark", cmd_benchmark, "full grid: train, explain, rank, retrain, score"),
                              ("report", cmd_report, "rebuild tables and charts from a finished run")):
        s = sub.add_parser(name, help=help_)
        if name == "report":
            s.add_argument("--out", default="run", help="run directory")
        else:
            _config_flags(s)
        if name in ("rank", "select"):
            s.add_argument("--method", help="ranking method")
            s.add_argument("--model", help="model for model_specific rankings")
        if name == "rank":
            s.add_argument("--output", help="CSV path (default: <out>/rankings/<method>.csv)")
        if name == "select":
            s.add_argument("--ranking", help="rankings CSV (method,rank,feature,score) to select from")
        if name in ("benchmark", "report"):
            s.add_argument("--no-charts", action="store_true")
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"xaifs: configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as e:
        print(f"xaifs: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except XaifsError as e:
        print(f"xaifs: error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as e:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"xaifs: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
