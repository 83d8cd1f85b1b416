"""Stacked ensemble over probability-outputting base learners.

Base learners are fitted K times to produce out-of-fold probabilities. The
meta-weights minimize the squared error of the weighted out-of-fold
probabilities over the probability simplex (non-negative weights summing to
one). Each base learner is then refitted on all rows and the ensemble
predicts the weighted average of their probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import nnls

from .base import Model, check_predict, check_train, effective_folds, stratified_folds

# pulls the augmented NNLS row towards sum(w) == 1
_SIMPLEX_PENALTY = 1e4


def simplex_least_squares(P: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Weights ``w >= 0, sum(w) = 1`` minimizing ``||P w - y||^2``.

    Solved as NNLS on the system augmented with a heavily weighted
    ``sum(w) = 1`` row, then renormalized. If a single column does better
    (possible only through round-off), that vertex is returned instead.
    """
    P = np.asarray(P, dtype=float)
    y = np.asarray(y, dtype=float)
    m = P.shape[1]
    scale = _SIMPLEX_PENALTY * max(1.0, np.sqrt(len(y)))
    A = np.vstack([P, np.full((1, m), scale)])
    b = np.concatenate([y, [scale]])
    w, _ = nnls(A, b, maxiter=50 * m)
    total = w.sum()
    w = w / total if total > 0 else np.full(m, 1.0 / m)
    sse = ((P @ w - y) ** 2).sum()
    vertex = ((P - y[:, None]) ** 2).sum(axis=0)
    best = int(np.argmin(vertex))
    if vertex[best] < sse:
        w = np.zeros(m)
        w[best] = 1.0
    return w


@dataclass
class SuperLearner(Model):
    kind = "super"
    names: list
    learners: list
    weights: np.ndarray
    n_features: int
    oof: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 0)))
    oof_y: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    seed: int | None = None
    feature_names: list | None = None

    def base_proba(self, X) -> np.ndarray:
        X = check_predict(X, self.n_features)
        return np.column_stack([m.predict_proba(X) for m in self.learners])

    def predict_proba(self, X) -> np.ndarray:
        return np.clip(self.base_proba(X) @ self.weights, 0.0, 1.0)

    def oof_squared_error(self) -> dict[str, float]:
        """Mean squared error on the out-of-fold panel, per base learner and ensemble."""
        err = {n: float(np.mean((self.oof[:, i] - self.oof_y) ** 2)) for i, n in enumerate(self.names)}
        err["super"] = float(np.mean((self.oof @ self.weights - self.oof_y) ** 2))
        return err

    def _params(self):
        return {"names": list(self.names), "learners": [m.to_dict() for m in self.learners],
                "weights": self.weights.tolist(), "oof": self.oof.tolist(), "oof_y": self.oof_y.tolist()}

    @classmethod
    def _from_params(cls, p):
        learners = [Model.from_dict(d) for d in p["learners"]]
        oof = np.array(p["oof"], dtype=float).reshape(len(p["oof_y"]), len(learners))
        return cls(p["names"], learners, np.array(p["weights"]), 0, oof, np.array(p["oof_y"]))


Fitter = Callable[..., Model]


def default_base_learners(settings: Mapping[str, Mapping] | None = None) -> dict[str, Fitter]:
    """The four base learners with optional per-learner keyword overrides."""
    from .lasso import fit_lasso_logit
    from .nnet import fit_nnet
    from .trees import fit_forest, fit_gbm

    settings = settings or {}
    fitters = {"gbm": fit_gbm, "forest": fit_forest, "lasso_logit": fit_lasso_logit, "nnet": fit_nnet}

    def bind(fn, kw):
        return lambda X, y, seed=0: fn(X, y, seed=seed, **kw)

    return {name: bind(fn, dict(settings.get(name, {}))) for name, fn in fitters.items()}


def fit_superlearner(X, y, base: Mapping[str, Fitter] | None = None, folds: int = 10, seed: int = 0,
                     feature_names: Sequence[str] | None = None) -> SuperLearner:
    """Fit the stacked ensemble.

    Parameters
    ----------
    base : mapping of name -> fitter, optional
        Each fitter is called as ``fit(X, y, seed=...)`` and must return a
        :class:`Model`. Defaults to gbm, forest, lasso_logit and nnet.
    folds : int
        Cross-fitting folds, capped by the minority class count. With fewer
        than two rows in a class, in-sample predictions stand in for the
        out-of-fold panel.
    """
    X, y = check_train(X, y)
    base = dict(base or default_base_learners())
    names = list(base)
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**31 - 1, size=len(names))
    k = effective_folds(y, folds)
    full = [base[n](X, y, seed=int(s)) for n, s in zip(names, seeds)]
    oof = np.empty((len(y), len(names)))
    if k >= 2:
        fold = stratified_folds(y, k, rng)
        for f in range(k):
            tr, te = fold != f, fold == f
            for i, (n, s) in enumerate(zip(names, seeds)):
                oof[te, i] = base[n](X[tr], y[tr], seed=int(s) + f + 1).predict_proba(X[te])
    else:
        oof = np.column_stack([m.predict_proba(X) for m in full])
    weights = simplex_least_squares(oof, y.astype(float))
    return SuperLearner(names, full, weights, X.shape[1], oof, y.astype(float), seed, feature_names)
