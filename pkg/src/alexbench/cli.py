"""Command-line entry point: fetch data, run experiments, render, export."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import idx
from .data import load_dataset, stratified_seed
from .explain import PatchSurrogateExplainer
from .harness import (
    ALConfig,
    ROLE_SEED_SET,
    ROLE_SURROGATE,
    RunReport,
    derived_rng,
    derived_seed,
    parse_report_csv,
    run_experiment,
)
from .net import load_model_blob, save_model_blob
from .output import export_curves, render_heatmap
from .strategies import STRATEGIES

DEFAULT_DATA_DIR = "data"
ENV_DATA_DIR = "ALEXBENCH_DATA_DIR"

# config-file keys map 1:1 onto ALConfig fields
_CONFIG_TYPES = {f.name: f.type for f in fields(ALConfig)}


def _coerce(key: str, value: str):
    kind = _CONFIG_TYPES[key]
    if kind in ("int", "int | None"):
        return None if value.lower() == "none" else int(value)
    if kind == "float":
        return float(value)
    if kind == "bool":
        return value.lower() in ("1", "true", "yes")
    return value


def load_config_file(path: str | Path) -> dict:
    """Flat key=value file; # starts a comment; unknown keys are rejected."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, value)
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alexbench",
        description="Active-learning bootstrapping runs with five selection strategies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fetch = sub.add_parser("fetch", help="download dataset files")
    fetch.add_argument("--dataset", choices=["mnist", "fmnist", "all"], default="all")
    fetch.add_argument("--data-dir", default=None)

    run = sub.add_parser("run", help="run an experiment and write report.csv")
    run.add_argument("--config", default=None, help="flat key=value config file")
    run.add_argument("--dataset", choices=["mnist", "fmnist"], default=None)
    run.add_argument(
        "--strategy", choices=[*STRATEGIES, "all"], default=None,
        help="selection strategy (or all five sharing seeds)",
    )
    run.add_argument("--q", type=int, default=None, help="seed instances per class")
    run.add_argument("--p", type=int, default=None, help="bootstrapping iterations")
    run.add_argument("--seed", type=int, default=None, help="master seed")
    run.add_argument("--arch", choices=["conv", "dense"], default=None)
    run.add_argument("--reps", type=int, default=None, help="repetitions")
    run.add_argument(
        "--pool-limit", type=int, default=None,
        help="subsample the train pool to this many instances",
    )
    run.add_argument("--epochs", type=int, default=None)
    run.add_argument(
        "--heatmaps", type=int, default=0,
        help="render this many per-class test heatmaps after the run",
    )
    run.add_argument("--out-dir", default="out")
    run.add_argument("--data-dir", default=None)
    run.add_argument("--jobs", type=int, default=1, help="parallel repetitions")
    run.add_argument(
        "--timings", action="store_true",
        help="write measured wall_ms into report.csv (breaks byte determinism)",
    )
    run.add_argument("--checkpoint", default=None, help="checkpoint file path")
    run.add_argument("--resume", action="store_true")

    render = sub.add_parser("render", help="render heatmaps from a model blob")
    render.add_argument("--model", required=True, help="model parameter blob")
    render.add_argument("--dataset", choices=["mnist", "fmnist"], default="mnist")
    render.add_argument("--data-dir", default=None)
    render.add_argument("--q", type=int, default=10, help="per-class surrogate pool")
    render.add_argument("--seed", type=int, default=7)
    render.add_argument("--heatmaps", type=int, default=1, help="images per class")
    render.add_argument("--out-dir", default="out")

    export = sub.add_parser("export", help="accuracy curves CSV from a report")
    export.add_argument("--report", required=True)
    export.add_argument("--out", default="curves.csv")
    return parser


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if ns.command == "run":
        try:
            cfg, _ = build_config(ns)
            cfg.validate()
        except (ValueError, OSError) as exc:
            parser.error(str(exc))
    return ns


def build_config(ns: argparse.Namespace) -> tuple[ALConfig, list[str]]:
    """Defaults, then config file, then command-line overrides.

    Returns the base config plus the strategy ids to run ("all" expands to
    the five registered strategies sharing the same seeds).
    """
    values = {}
    if ns.config:
        values.update(load_config_file(ns.config))
    overrides = {
        "dataset": ns.dataset,
        "strategy": ns.strategy,
        "q": ns.q,
        "p": ns.p,
        "master_seed": ns.seed,
        "arch": ns.arch,
        "repetitions": ns.reps,
        "pool_limit": ns.pool_limit,
        "epochs": ns.epochs,
    }
    values.update({key: v for key, v in overrides.items() if v is not None})
    if ns.timings:
        values["record_timings"] = True
    strategy = values.pop("strategy", "alex")
    strategy_ids = list(STRATEGIES) if strategy == "all" else [strategy]
    cfg = ALConfig(**values, strategy=strategy_ids[0])
    return cfg, strategy_ids


def _data_dir(ns: argparse.Namespace) -> Path:
    explicit = getattr(ns, "data_dir", None)
    return Path(explicit or os.environ.get(ENV_DATA_DIR, DEFAULT_DATA_DIR))


def _render_class_samples(
    out_dir: Path,
    strategy: str,
    surrogate: PatchSurrogateExplainer,
    test_ds,
    per_class: int,
) -> list[Path]:
    X_test = test_ds.feature_matrix()
    written = []
    for cls in range(test_ds.n_classes):
        members = np.flatnonzero(test_ds.labels == cls)[:per_class]
        for i, src in enumerate(members):
            e = surrogate.transform(X_test[src])
            path = out_dir / f"heatmap_{strategy}_class{cls}_{i}.ppm"
            render_heatmap(X_test[src], e, surrogate.grid_, path)
            written.append(path)
    return written


def cmd_run(ns: argparse.Namespace) -> int:
    base, strategy_ids = build_config(ns)
    data_dir = _data_dir(ns)
    train_ds = load_dataset(data_dir, base.dataset, "train")
    test_ds = load_dataset(data_dir, base.dataset, "test")
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    echo = base if len(strategy_ids) == 1 else replace(base, strategy="all")
    merged = RunReport(config=echo)
    for strategy in strategy_ids:
        cfg = replace(base, strategy=strategy)
        report = run_experiment(
            cfg,
            train_ds,
            test_ds,
            jobs=ns.jobs,
            checkpoint_path=ns.checkpoint,
            resume=ns.resume,
        )
        merged.records.extend(report.records)
        if report.final_model is not None:
            save_model_blob(out_dir / f"model_{strategy}.dat", report.final_model)
        if ns.heatmaps > 0 and report.final_model is not None:
            surrogate = PatchSurrogateExplainer(
                model=report.final_model,
                m_samples=cfg.m_samples,
                ridge=cfg.ridge,
                patch_size=cfg.patch_size,
                weighting=cfg.weighting,
                epsilon=cfg.dist_epsilon,
                random_state=derived_seed(cfg.master_seed, 0, ROLE_SURROGATE, cfg.p + 1),
                image_shape=train_ds.image_shape,
            ).fit(train_ds.feature_matrix()[report.final_labeled.indices])
            _render_class_samples(out_dir, strategy, surrogate, test_ds, ns.heatmaps)

    report_path = out_dir / "report.csv"
    report_path.write_bytes(merged.to_csv_bytes())
    if base.record_timings:
        (out_dir / "timings.csv").write_bytes(merged.timings_csv_bytes())
    print(f"wrote {report_path}")
    return 0


def cmd_fetch(ns: argparse.Namespace) -> int:
    data_dir = _data_dir(ns)
    names = ["mnist", "fmnist"] if ns.dataset == "all" else [ns.dataset]
    for name in names:
        written = idx.fetch_dataset(data_dir, name)
        for path in written:
            print(f"fetched {path}")
    return 0


def cmd_render(ns: argparse.Namespace) -> int:
    clf = load_model_blob(ns.model)
    data_dir = _data_dir(ns)
    train_ds = load_dataset(data_dir, ns.dataset, "train")
    test_ds = load_dataset(data_dir, ns.dataset, "test")
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    labeled, _ = stratified_seed(train_ds, ns.q, derived_rng(ns.seed, 0, ROLE_SEED_SET))
    surrogate = PatchSurrogateExplainer(
        model=clf, random_state=ns.seed, image_shape=train_ds.image_shape
    ).fit(train_ds.feature_matrix()[labeled.indices])
    written = _render_class_samples(out_dir, "model", surrogate, test_ds, ns.heatmaps)
    print(f"wrote {len(written)} heatmaps under {out_dir}")
    return 0


def cmd_export(ns: argparse.Namespace) -> int:
    config_echo, records = parse_report_csv(Path(ns.report).read_bytes())
    report = RunReport(config=ALConfig(strategy=records[0].strategy if records else "rs"))
    report.records = records
    export_curves(report, ns.out)
    print(f"wrote {ns.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    ns = parse_args(argv)
    handlers = {
        "run": cmd_run,
        "fetch": cmd_fetch,
        "render": cmd_render,
        "export": cmd_export,
    }
    try:
        return handlers[ns.command](ns)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"alexbench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
