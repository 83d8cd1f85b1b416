"""Common plumbing for the classifiers: input checks, scaling, persistence."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any, ClassVar, Sequence

import numpy as np

MODEL_FORMAT = "coalscreen-model"
MODEL_VERSION = 1


class ConvergenceError(RuntimeError):
    pass


def check_train(X, y) -> tuple[np.ndarray, np.ndarray]:
    """Validate a training matrix and 0/1 label vector.

    Single-class ``y`` is accepted; learners handle it as a degenerate case.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    if X.shape[0] < 2:
        raise ValueError("need at least two observations")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite values")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("y must contain only 0 and 1")
    return X, y.astype(np.int64)


def check_predict(X, n_features: int) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(f"model expects {n_features} feature columns, got {X.shape[-1] if X.ndim else 0}")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite values")
    return X


@dataclass(frozen=True)
class Standardizer:
    """Z-scoring with training-set constants. Constant columns keep sd = 1."""

    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd > 1e-12 * np.maximum(np.abs(mean), 1.0), sd, 1.0)
        return cls(mean, sd)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.sd

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.array(d["mean"], dtype=float), np.array(d["sd"], dtype=float))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def stratified_folds(y: np.ndarray, n_folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per row; classes are shuffled and dealt round-robin."""
    fold = np.empty(len(y), dtype=np.int64)
    offset = 0
    for cls in (0, 1):
        rows = np.flatnonzero(y == cls)
        rows = rows[rng.permutation(len(rows))]
        fold[rows] = (np.arange(len(rows)) + offset) % n_folds
        offset += len(rows)
    return fold


def effective_folds(y: np.ndarray, requested: int) -> int:
    """Largest fold count <= ``requested`` that leaves both classes in every training part."""
    smallest = int(min((y == 0).sum(), (y == 1).sum()))
    return max(0, min(requested, smallest)) if smallest >= 2 else 0


_REGISTRY: dict[str, type["Model"]] = {}


class Model:
    """A fitted probabilistic binary classifier.

    Subclasses set ``kind``, implement :meth:`predict_proba` and the
    ``_params``/``_from_params`` pair used by :func:`save_model`.
    """

    kind: ClassVar[str] = ""
    n_features: int
    seed: int | None = None
    feature_names: Sequence[str] | None = None

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)
        if cls.kind:
            _REGISTRY[cls.kind] = cls

    def predict_proba(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def _params(self) -> dict[str, Any]:
        raise NotImplementedError

    @classmethod
    def _from_params(cls, params: dict[str, Any]) -> "Model":
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "n_features": self.n_features,
            "seed": self.seed,
            "feature_names": list(self.feature_names) if self.feature_names is not None else None,
            "params": self._params(),
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "Model":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError("not a coalscreen model blob")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        try:
            cls = _REGISTRY[d["kind"]]
        except KeyError:
            raise ValueError(f"unknown model kind {d['kind']!r}") from None
        model = cls._from_params(d["params"])
        model.n_features = d["n_features"]
        model.seed = d["seed"]
        model.feature_names = d["feature_names"]
        return model


def predict(model: Model, X) -> tuple[np.ndarray, np.ndarray]:
    """Class-1 probabilities and hard labels (1 iff probability > 0.5)."""
    proba = model.predict_proba(X)
    return proba, (proba > 0.5).astype(np.int64)


def save_model(model: Model, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh)


def load_model(path: str | os.PathLike) -> Model:
    with open(path, "r", encoding="utf-8") as fh:
        return Model.from_dict(json.load(fh))
