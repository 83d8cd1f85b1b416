"""``coalscreen`` command line: validate, features, evaluate, synth, score.

Settings are resolved in this order, later winning: built-in defaults, the
JSON file given with ``--config``, the environment variables
``COALSCREEN_OUTPUT_DIR`` and ``COALSCREEN_WORKERS``, then explicit flags.

Exit codes: 0 success, 1 bad input or usage, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from .coalitions import FeatureTable, build_feature_table
from .data import DataError, parse_dataset, validate
from .learners import ALGORITHMS, fit_model, load_model, save_model
from .pipeline import (ExperimentConfig, class_medians_csv, class_medians_report, feature_subset,
                       run_experiment)
from .screens import SCREENS
from .synthgen import MarketParams, gen_market, gen_scenario_suite

ENV_OUTPUT_DIR = "COALSCREEN_OUTPUT_DIR"
ENV_WORKERS = "COALSCREEN_WORKERS"


class UsageError(Exception):
    pass


def load_config(path: str | None) -> dict:
    """Read a JSON run config: ``{"output_dir", "schema", "experiment": {...}}``."""
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path}: top level must be an object")
    unknown = set(cfg) - {"output_dir", "schema", "experiment", "synth"}
    if unknown:
        raise UsageError(f"config {path}: unknown key(s) {', '.join(sorted(unknown))}")
    return cfg


def resolve(args: argparse.Namespace) -> tuple[ExperimentConfig, Path, dict]:
    """Merge defaults, config file, environment and flags."""
    cfg = load_config(getattr(args, "config", None))
    exp = dict(cfg.get("experiment", {}))
    out = cfg.get("output_dir", ".")
    if os.environ.get(ENV_OUTPUT_DIR):
        out = os.environ[ENV_OUTPUT_DIR]
    if os.environ.get(ENV_WORKERS):
        try:
            exp["workers"] = int(os.environ[ENV_WORKERS])
        except ValueError:
            raise UsageError(f"{ENV_WORKERS} must be an integer") from None
    if getattr(args, "output_dir", None):
        out = args.output_dir
    flag_map = {"seed": "seed", "workers": "workers", "stats": "stats", "k": "k", "min_joint": "min_joint",
                "reps": "reps", "train_fraction": "train_fraction"}
    for flag, key in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            exp[key] = v
    if getattr(args, "algorithms", None):
        exp["algorithms"] = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    if getattr(args, "screens", None):
        exp["screens"] = args.screens.replace("-", "_")
    if getattr(args, "drop_screens", None):
        exp["drop_screens"] = [s.strip() for s in args.drop_screens.split(",") if s.strip()]
    if getattr(args, "columns", None):
        exp["screens"] = "custom"
        exp["columns"] = [c.strip() for c in args.columns.split(",") if c.strip()]
    if getattr(args, "no_stratify", False):
        exp["stratified"] = False
    try:
        config = ExperimentConfig.from_dict(exp)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad experiment settings: {exc}") from None
    bad = [a for a in config.algorithms if a not in ALGORITHMS]
    if bad:
        raise UsageError(f"unknown algorithm(s) {', '.join(bad)}; choose from {', '.join(ALGORITHMS)}")
    if config.stats not in ("base", "extended"):
        raise UsageError("stats must be 'base' or 'extended'")
    if config.k not in (3, 4):
        raise UsageError("k must be 3 or 4")
    return config, Path(out), dict(cfg.get("schema", {}))


def _schema(args, from_config: dict) -> dict:
    schema = dict(from_config)
    for item in getattr(args, "column", None) or []:
        if "=" not in item:
            raise UsageError(f"--column expects logical=header, got {item!r}")
        k, v = item.split("=", 1)
        schema[k.strip()] = v.strip()
    return schema


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _echo(path: Path, command: str, config: ExperimentConfig, extra: dict) -> None:
    blob = {"command": command, "experiment": config.to_dict(), **extra}
    _write(path, json.dumps(blob, indent=2, sort_keys=True) + "\n")


def cmd_validate(args) -> int:
    _, _, schema = resolve(args)
    report = validate(parse_dataset(args.input, _schema(args, schema)))
    print(report.summary())
    return 0


def cmd_features(args) -> int:
    config, out, schema = resolve(args)
    ds = parse_dataset(args.input, _schema(args, schema))
    table = build_feature_table(ds, k=config.k, min_joint=config.min_joint, stats=config.stats)
    target = Path(args.output) if args.output else out / "features.csv"
    _write(target, table.to_csv())
    _echo(target.with_suffix(".config.json"), "features", config, {"input": str(args.input)})
    labels, counts = np.unique(table.labels.astype(str), return_counts=True)
    print(f"{len(table)} coalitions, {len(table.feature_names)} features -> {target}")
    for lab, c in zip(labels, counts):
        print(f"  {lab}: {c}")
    return 0


def cmd_evaluate(args) -> int:
    config, out, _ = resolve(args)
    table = FeatureTable.from_csv(args.features)
    report = run_experiment(table, config)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "report.json", report.to_json() + "\n")
    _write(out / "tables.csv", report.table_csv())
    if report.importance is not None:
        _write(out / "importance.csv", report.importance_csv())
    pure = table.pure()
    if (pure.y == 1).any() and (pure.y == 0).any():
        _write(out / "class_medians.csv", class_medians_csv(class_medians_report(pure)))
    if args.save_model:
        alg = args.model_algorithm or config.algorithms[0]
        sub = feature_subset(pure, config.screens, config.drop_screens,
                             config.columns if config.screens == "custom" else None)
        model = fit_model(alg, sub.X, sub.y, config.learner_settings(alg), seed=config.seed,
                          feature_names=list(sub.feature_names))
        save_model(model, args.save_model)
    print(report.table_csv(), end="")
    print(f"report written to {out}")
    return 0


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    suite = gen_scenario_suite()
    if args.preset not in suite:
        raise UsageError(f"unknown preset {args.preset!r}; available presets: {', '.join(suite)}")
    overrides = dict(cfg.get("synth", {}))
    for key in ("seed", "n_tenders", "n_firms"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    try:
        params = MarketParams.from_dict({**suite[args.preset].to_dict(), **overrides})
        params.validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad generator settings: {exc}") from None
    text = gen_market(params).to_csv()
    if args.output:
        _write(Path(args.output), text)
        print(f"{args.preset}: {len(text.splitlines()) - 1} bids -> {args.output}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_score(args) -> int:
    table = FeatureTable.from_csv(args.features)
    model = load_model(args.model)
    names = list(table.feature_names)
    if model.feature_names is not None:
        missing = [c for c in model.feature_names if c not in names]
        if missing:
            raise UsageError(f"features lack column(s) the model was trained on: {', '.join(missing[:5])}")
        table = table.select(list(model.feature_names))
    elif len(names) != model.n_features:
        raise UsageError(f"model expects {model.n_features} features, table has {len(names)}")
    proba = model.predict_proba(table.X)
    lines = ["coalition_id,probability,predicted"]
    lines += [f"{cid},{p!r},{int(p > 0.5)}" for cid, p in zip(table.coalition_ids, proba.tolist())]
    text = "\n".join(lines) + "\n"
    if args.output:
        _write(Path(args.output), text)
        print(f"scored {len(table)} coalitions -> {args.output}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coalscreen", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, experiment=True):
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--output-dir")
        if experiment:
            sp.add_argument("--seed", type=int)
            sp.add_argument("--workers", type=int)

    v = sub.add_parser("validate", help="check a bid CSV and print counts")
    v.add_argument("input")
    v.add_argument("--column", action="append", metavar="LOGICAL=HEADER", help="map a logical column name")
    common(v, experiment=False)
    v.set_defaults(func=cmd_validate)

    f = sub.add_parser("features", help="build the coalition feature table")
    f.add_argument("input")
    f.add_argument("-o", "--output")
    f.add_argument("--k", type=int, choices=(3, 4))
    f.add_argument("--min-joint", type=int)
    f.add_argument("--stats", choices=("base", "extended"))
    f.add_argument("--column", action="append", metavar="LOGICAL=HEADER")
    common(f)
    f.set_defaults(func=cmd_features)

    e = sub.add_parser("evaluate", help="run the repeated balance/split/fit/score protocol")
    e.add_argument("features")
    e.add_argument("--algorithms", help=f"comma list from {','.join(ALGORITHMS)}")
    e.add_argument("--reps", type=int)
    e.add_argument("--train-fraction", type=float)
    e.add_argument("--screens", choices=("all", "asymmetry-only"))
    e.add_argument("--drop-screens", help=f"comma list from {','.join(SCREENS)}")
    e.add_argument("--columns", help="explicit comma list of feature columns")
    e.add_argument("--no-stratify", action="store_true")
    e.add_argument("--save-model", metavar="PATH", help="also fit one model on all labeled rows and save it")
    e.add_argument("--model-algorithm", choices=ALGORITHMS)
    common(e)
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", help="write a synthetic bid CSV from a preset")
    s.add_argument("preset")
    s.add_argument("-o", "--output")
    s.add_argument("--n-tenders", type=int)
    s.add_argument("--n-firms", type=int)
    common(s)
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("score", help="score unlabeled coalitions with a saved model")
    c.add_argument("features")
    c.add_argument("model")
    c.add_argument("-o", "--output")
    common(c, experiment=False)
    c.set_defaults(func=cmd_score)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (UsageError, DataError, FileNotFoundError, IsADirectoryError, PermissionError, KeyError,
            ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"coalscreen {args.command}: error: {msg}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
