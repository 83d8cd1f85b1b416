"""Experimental protocol: balance, split, train, score, repeat.

Each repetition downsamples the majority class to the minority count, splits
the balanced rows into training and test parts, fits every configured
algorithm on the training part and records correct classification rates
(overall and per class) on the test part. Repetitions are seeded from
``(seed, rep)`` only, so results do not depend on how many worker processes
run them.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .coalitions import COLLUSIVE, COMPETITIVE, FeatureTable
from .learners import fit_model, gini_importance
from .screens import ASYMMETRY_SCREENS, SCREENS

DEFAULT_ALGORITHMS = ("lasso", "forest", "svm", "super")
ALGORITHM_LABELS = {"lasso": "Lasso", "forest": "Random forest", "svm": "Support vector machines",
                    "super": "Super learner", "gbm": "Gradient boosting", "nnet": "Neural network",
                    "tree": "Decision tree"}


class SmallSampleWarning(UserWarning):
    pass


def default_learner_settings() -> dict[str, dict]:
    """Every learner hyperparameter, with the values used unless overridden."""
    return {
        "lasso": {"folds": 15, "n_lambda": 50, "lambda_ratio": 1e-2, "tol": 1e-7},
        "forest": {"n_trees": 1000, "mtry": None, "min_leaf": 1},
        "svm": {"C_grid": [0.1, 1.0, 10.0, 100.0], "gamma_grid": [0.1, 1.0, 10.0], "folds": 5, "tol": 1e-3},
        "gbm": {"rounds": 500, "max_depth": 3, "learning_rate": 0.1},
        "nnet": {"hidden": 8, "decay": 1e-3, "epochs": 2000, "learning_rate": 1.0, "momentum": 0.9},
        "tree": {"max_depth": None, "min_leaf": 1},
        "super": {"folds": 10},
    }


@dataclass
class ExperimentConfig:
    algorithms: tuple[str, ...] = DEFAULT_ALGORITHMS
    reps: int = 100
    train_fraction: float = 0.75
    seed: int = 0
    stats: str = "base"
    screens: str = "all"
    drop_screens: tuple[str, ...] = ()
    columns: tuple[str, ...] | None = None
    k: int = 3
    min_joint: int = 3
    stratified: bool = True
    workers: int = 1
    learners: dict = field(default_factory=default_learner_settings)

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        merged = default_learner_settings()
        for name, overrides in (self.learners or {}).items():
            if name not in merged:
                raise ValueError(f"unknown learner {name!r} in learner settings")
            merged[name].update(overrides)
        self.learners = merged
        self.algorithms = tuple(self.algorithms)
        self.drop_screens = tuple(self.drop_screens)
        if self.columns is not None:
            self.columns = tuple(self.columns)

    def learner_settings(self, algorithm: str) -> dict:
        s = copy.deepcopy(self.learners.get(algorithm, {}))
        if algorithm == "super":
            s["base"] = {"gbm": self.learners["gbm"], "forest": self.learners["forest"],
                         "lasso_logit": self.learners["lasso"], "nnet": self.learners["nnet"]}
        if algorithm == "forest" and s.get("mtry") is None:
            s.pop("mtry", None)
        if algorithm == "super" and s["base"]["forest"].get("mtry") is None:
            s["base"]["forest"] = {k: v for k, v in s["base"]["forest"].items() if k != "mtry"}
        return s

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithms"] = list(self.algorithms)
        d["drop_screens"] = list(self.drop_screens)
        d["columns"] = list(self.columns) if self.columns is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment setting(s): {', '.join(sorted(unknown))}")
        return cls(**d)


def balance_indices(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row indices of a balanced subsample (majority downsampled), in input order."""
    y = np.asarray(y)
    pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("both classes must be present to balance")
    m = min(len(pos), len(neg))
    if m < 3:
        warnings.warn(f"balanced sample has only {m} row(s) per class", SmallSampleWarning, stacklevel=2)
    if len(pos) > m:
        pos = np.sort(rng.choice(pos, m, replace=False))
    if len(neg) > m:
        neg = np.sort(rng.choice(neg, m, replace=False))
    return np.sort(np.concatenate([pos, neg]))


def balance(table: FeatureTable, seed: int | np.random.Generator = 0) -> FeatureTable:
    """Downsample the majority class to the minority count without replacement."""
    rng = np.random.default_rng(seed)
    return table.take(balance_indices(table.y, rng))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_indices(y: np.ndarray, train_fraction: float, rng: np.random.Generator,
                  stratified: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Random train/test row indices.

    Stratified: each class contributes ``round(fraction * n_class)`` training
    rows, keeping at least one row of the class on each side.
    """
    y = np.asarray(y)
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    groups = [np.flatnonzero(y == c) for c in (0, 1)] if stratified else [np.arange(len(y))]
    train, test = [], []
    for rows in groups:
        if len(rows) < 2:
            raise ValueError("need at least two rows per class to split")
        rows = rows[rng.permutation(len(rows))]
        n_train = min(max(_round_half_up(train_fraction * len(rows)), 1), len(rows) - 1)
        train.append(rows[:n_train])
        test.append(rows[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split(table: FeatureTable, train_fraction: float = 0.75, seed: int | np.random.Generator = 0,
          stratified: bool = True) -> tuple[FeatureTable, FeatureTable]:
    tr, te = split_indices(table.y, train_fraction, np.random.default_rng(seed), stratified)
    return table.take(tr), table.take(te)


class CCR(NamedTuple):
    ccr: float
    ccr_collusion: float | None
    ccr_competition: float | None


def ccr_metrics(predicted, truth) -> CCR:
    """Overall and per-class correct classification rates (1 = collusive).

    A class absent from ``truth`` gets ``None`` for its rate.
    """
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError("predicted and true labels differ in length")
    if truth.size == 0:
        raise ValueError("no observations to score")
    hit = predicted == truth
    coll = truth == 1
    return CCR(
        float(hit.mean()),
        float(hit[coll].mean()) if coll.any() else None,
        float(hit[~coll].mean()) if (~coll).any() else None,
    )


def feature_subset(table: FeatureTable, mode: str = "all", drop: Sequence[str] = (),
                   columns: Sequence[str] | None = None) -> FeatureTable:
    """Project a feature table onto a screen subset, keeping column order.

    ``mode`` is ``"all"``, ``"asymmetry_only"`` (the six asymmetry screens)
    or ``"custom"`` (explicit ``columns``). ``drop`` removes whole screens
    afterwards, e.g. ``drop=("diffp", "absdiff")``.
    """
    names = table.feature_names
    screen_of = {n: n.rsplit("_", 1)[0] for n in names}
    for s in drop:
        if s not in SCREENS:
            raise KeyError(f"unknown screen {s!r}")
    if mode == "all":
        keep = list(names)
    elif mode in ("asymmetry_only", "asymmetry-only"):
        keep = [n for n in names if screen_of[n] in ASYMMETRY_SCREENS]
    elif mode == "custom":
        if not columns:
            raise ValueError("custom mode needs a column list")
        missing = [c for c in columns if c not in names]
        if missing:
            raise KeyError(f"unknown column(s): {', '.join(missing)}")
        wanted = set(columns)
        keep = [n for n in names if n in wanted]
    else:
        raise ValueError(f"unknown subset mode {mode!r}")
    keep = [n for n in keep if screen_of[n] not in set(drop)]
    if keep == list(names):
        return table
    return table.select(keep)


def _summary(values: np.ndarray) -> dict:
    values = values[~np.isnan(values)]
    if len(values) == 0:
        return {"mean": None, "sd": None}
    sd = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return {"mean": float(values.mean()), "sd": sd}


@dataclass
class EvaluationReport:
    algorithms: tuple[str, ...]
    # algorithm -> (reps, 3) array of ccr, ccr_collusion, ccr_competition
    raw: dict
    importance: list | None
    config: dict
    rep_seeds: list
    n_rows: dict
    feature_names: tuple[str, ...]

    @property
    def summary(self) -> dict:
        out = {}
        for alg in self.algorithms:
            r = np.asarray(self.raw[alg], dtype=float)
            out[alg] = {m: _summary(r[:, i]) for i, m in enumerate(CCR._fields)}
        return out

    def mean_ccr(self, algorithm: str) -> float:
        return self.summary[algorithm]["ccr"]["mean"]

    def to_dict(self) -> dict:
        return {
            "config": copy.deepcopy(self.config),
            "n_rows": dict(self.n_rows),
            "feature_names": list(self.feature_names),
            "summary": self.summary,
            "importance": [[n, v] for n, v in self.importance] if self.importance is not None else None,
            "repetitions": {alg: [[None if np.isnan(v) else v for v in row] for row in np.asarray(self.raw[alg], float).tolist()]
                            for alg in self.algorithms},
            "rep_seeds": [list(r) for r in self.rep_seeds],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table_csv(self) -> str:
        """One row per algorithm, CCRs in percent."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["classifier", "CCR", "CCR collusion", "CCR competition",
                    "sd CCR", "sd CCR collusion", "sd CCR competition"])
        summ = self.summary
        for alg in self.algorithms:
            s = summ[alg]
            pct = [("" if s[m]["mean"] is None else f"{100 * s[m]['mean']:.1f}") for m in CCR._fields]
            sds = [("" if s[m]["sd"] is None else f"{100 * s[m]['sd']:.1f}") for m in CCR._fields]
            w.writerow([ALGORITHM_LABELS.get(alg, alg), *pct, *sds])
        return buf.getvalue()

    def importance_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "feature", "importance"])
        for i, (n, v) in enumerate(self.importance or [], start=1):
            w.writerow([i, n, f"{v:.6f}"])
        return buf.getvalue()


def _run_rep(X: np.ndarray, y: np.ndarray, config: ExperimentConfig, rep: int) -> dict:
    rng = np.random.default_rng([config.seed, rep])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallSampleWarning)
        rows = balance_indices(y, rng)
    tr, te = split_indices(y[rows], config.train_fraction, rng, config.stratified)
    tr, te = rows[tr], rows[te]
    seeds = rng.integers(0, 2**31 - 1, size=len(config.algorithms))
    out = {"rep": rep, "ccr": {}, "importance": None}
    for alg, s in zip(config.algorithms, seeds):
        model = fit_model(alg, X[tr], y[tr], config.learner_settings(alg), seed=int(s))
        pred = model.predict(X[te])
        m = ccr_metrics(pred, y[te])
        out["ccr"][alg] = [m.ccr, np.nan if m.ccr_collusion is None else m.ccr_collusion,
                           np.nan if m.ccr_competition is None else m.ccr_competition]
        if alg == "forest":
            out["importance"] = model.tree_importance.mean(axis=0)
    return out


def _run_rep_star(args):
    return _run_rep(*args)


def run_experiment(features: FeatureTable, config: ExperimentConfig | None = None) -> EvaluationReport:
    """Run ``config.reps`` balance-split-fit-score repetitions.

    Mixed and unlabeled rows are dropped first. Any failing repetition
    aborts the run.
    """
    config = config or ExperimentConfig()
    table = feature_subset(features.pure(), config.screens, config.drop_screens,
                           config.columns if config.screens == "custom" else None)
    X, y = table.X, table.y
    if y.min(initial=1) == y.max(initial=0):
        raise ValueError("both collusive and competitive coalitions are required")
    jobs = [(X, y, config, r) for r in range(config.reps)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_rep_star, jobs))
    else:
        records = [_run_rep(*j) for j in jobs]
    records.sort(key=lambda r: r["rep"])
    raw = {alg: np.array([r["ccr"][alg] for r in records]) for alg in config.algorithms}
    importance = None
    if "forest" in config.algorithms:
        imp = np.mean([r["importance"] for r in records], axis=0)
        top = imp.max()
        imp = imp * (100.0 / top) if top > 0 else imp
        order = np.argsort(-imp, kind="stable")
        importance = [(table.feature_names[i], float(imp[i])) for i in order]
    return EvaluationReport(
        algorithms=config.algorithms,
        raw=raw,
        importance=importance,
        config=config.to_dict(),
        rep_seeds=[[config.seed, r] for r in range(config.reps)],
        n_rows={"collusive": int((y == 1).sum()), "competitive": int((y == 0).sum())},
        feature_names=table.feature_names,
    )


def class_medians_report(features: FeatureTable) -> dict:
    """Mean and sd of every ``<screen>_median`` column, per class.

    Returns ``{class: {column: {"mean", "sd", "n"}}}``; with a single row in
    a class the sd is 0.
    """
    cols = [i for i, n in enumerate(features.feature_names) if n.endswith("_median")]
    if not cols:
        raise ValueError("feature table has no median columns")
    out = {}
    for cls in (COLLUSIVE, COMPETITIVE):
        rows = features.labels == cls
        if not rows.any():
            raise ValueError(f"no {cls} coalitions in the feature table")
        block = features.X[rows][:, cols]
        n = int(rows.sum())
        out[cls] = {
            features.feature_names[c]: {
                "mean": float(block[:, j].mean()),
                "sd": float(block[:, j].std(ddof=1)) if n > 1 else 0.0,
                "n": n,
            }
            for j, c in enumerate(cols)
        }
    return out


def class_medians_csv(report: dict) -> str:
    """One row per screen median: mean and sd per class."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "collusive_mean", "collusive_sd", "competitive_mean", "competitive_sd",
                "collusive_n", "competitive_n"])
    for name in report[COLLUSIVE]:
        a, b = report[COLLUSIVE][name], report[COMPETITIVE][name]
        w.writerow([name, f"{a['mean']:.6g}", f"{a['sd']:.6g}", f"{b['mean']:.6g}", f"{b['sd']:.6g}", a["n"], b["n"]])
    return buf.getvalue()
