"""CART classification trees, random forests and gradient boosting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._cart import apply_trees, boost, grow_tree
from .base import Model, check_predict, check_train, sigmoid


@dataclass
class TreeEnsemble:
    """Trees stored back to back with absolute child pointers."""

    roots: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def pack(cls, trees) -> "TreeEnsemble":
        roots, parts = [], []
        offset = 0
        for feat, thr, lft, rgt, val in trees:
            roots.append(offset)
            lft = np.where(lft >= 0, lft + offset, -1)
            rgt = np.where(rgt >= 0, rgt + offset, -1)
            parts.append((feat, thr, lft, rgt, val))
            offset += len(feat)
        cols = list(zip(*parts)) if parts else [[np.zeros(0, np.int64)]] * 2 + [[np.zeros(0)]] * 3
        return cls(
            np.array(roots, dtype=np.int64),
            np.concatenate(cols[0]).astype(np.int64),
            np.concatenate(cols[1]).astype(float),
            np.concatenate(cols[2]).astype(np.int64),
            np.concatenate(cols[3]).astype(np.int64),
            np.concatenate(cols[4]).astype(float),
        )

    def apply(self, X: np.ndarray) -> np.ndarray:
        return apply_trees(X, self.roots, self.feature, self.threshold, self.left, self.right, self.value)

    def depths(self) -> np.ndarray:
        out = []
        for r in self.roots:
            stack, deepest = [(r, 0)], 0
            while stack:
                node, d = stack.pop()
                deepest = max(deepest, d)
                if self.feature[node] >= 0:
                    stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
            out.append(deepest)
        return np.array(out)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("roots", "feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        ints = ("roots", "feature", "left", "right")
        return cls(**{k: np.array(v, dtype=np.int64 if k in ints else float) for k, v in d.items()})


def _grow(X, target, sample, mtry, max_depth, min_leaf, seed):
    feat, thr, lft, rgt, val, _, dec = grow_tree(X, target, sample, mtry, max_depth, min_leaf, seed)
    return (feat, thr, lft, rgt, val), dec


@dataclass
class DecisionTree(Model):
    kind = "tree"
    trees: TreeEnsemble
    n_features: int
    # size-weighted Gini decrease per feature
    importance: np.ndarray = field(repr=False)
    seed: int | None = None
    feature_names: list | None = None

    def predict_proba(self, X) -> np.ndarray:
        X = check_predict(X, self.n_features)
        return np.clip(self.trees.apply(X)[:, 0], 0.0, 1.0)

    @property
    def depth(self) -> int:
        return int(self.trees.depths()[0])

    def _params(self):
        return {"trees": self.trees.to_dict(), "importance": self.importance.tolist()}

    @classmethod
    def _from_params(cls, p):
        return cls(TreeEnsemble.from_dict(p["trees"]), 0, np.array(p["importance"]))


def fit_tree(X, y, max_depth: int | None = None, min_leaf: int = 1, feature_names=None) -> DecisionTree:
    """Fit a CART classification tree using the Gini criterion.

    Every feature is scanned at every node; thresholds sit halfway between
    consecutive distinct values. Leaves predict the class-1 share.
    """
    X, y = check_train(X, y)
    depth = -1 if max_depth is None else int(max_depth)
    tree, dec = _grow(X, y.astype(float), np.arange(len(y)), X.shape[1], depth, int(min_leaf), 0)
    return DecisionTree(TreeEnsemble.pack([tree]), X.shape[1], 2.0 * dec, None, feature_names)


@dataclass
class RandomForest(Model):
    """Bagged CART trees; probability is the share of trees voting class 1."""

    kind = "forest"
    trees: TreeEnsemble
    n_features: int
    mtry: int
    # (n_trees, p) size-weighted Gini decrease of each tree
    tree_importance: np.ndarray = field(repr=False)
    seed: int | None = None
    feature_names: list | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees.roots)

    def votes(self, X) -> np.ndarray:
        X = check_predict(X, self.n_features)
        return (self.trees.apply(X) > 0.5).astype(np.int64)

    def predict_proba(self, X) -> np.ndarray:
        return self.votes(X).mean(axis=1)

    def _params(self):
        return {"trees": self.trees.to_dict(), "mtry": self.mtry,
                "tree_importance": self.tree_importance.tolist()}

    @classmethod
    def _from_params(cls, p):
        return cls(TreeEnsemble.from_dict(p["trees"]), 0, p["mtry"], np.array(p["tree_importance"]))


def default_mtry(p: int) -> int:
    return max(1, math.isqrt(p))


def fit_forest(X, y, n_trees: int = 1000, mtry: int | None = None, min_leaf: int = 1, seed: int = 0,
               feature_names=None) -> RandomForest:
    """Random forest of fully grown Gini trees on bootstrap resamples.

    Parameters
    ----------
    n_trees : int
        Number of trees.
    mtry : int, optional
        Features drawn at each split; defaults to ``floor(sqrt(p))``.
    min_leaf : int
        Minimum number of (bootstrap) rows in a leaf.
    seed : int
        Seed for the bootstrap draws and feature subsets.
    """
    X, y = check_train(X, y)
    n, p = X.shape
    mtry = default_mtry(p) if mtry is None else int(mtry)
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must be in [1, {p}]")
    rng = np.random.default_rng(seed)
    boot = rng.integers(0, n, size=(n_trees, n))
    tree_seeds = rng.integers(0, 2**31 - 1, size=n_trees)
    target = y.astype(float)
    trees, imps = [], np.empty((n_trees, p))
    for t in range(n_trees):
        tree, dec = _grow(X, target, boot[t], mtry, -1, int(min_leaf), int(tree_seeds[t]))
        trees.append(tree)
        imps[t] = 2.0 * dec
    return RandomForest(TreeEnsemble.pack(trees), p, mtry, imps, seed, feature_names)


def gini_importance(forest: RandomForest) -> np.ndarray:
    """Mean Gini decrease per feature across trees, scaled so the maximum is 100.

    An all-zero importance vector (no split anywhere) is returned unscaled.
    """
    imp = forest.tree_importance.mean(axis=0)
    top = imp.max()
    return imp * (100.0 / top) if top > 0 else imp


def importance_ranking(importance, names) -> list[tuple[str, float]]:
    """``(name, value)`` pairs in descending order; ties keep feature order."""
    importance = np.asarray(importance, dtype=float)
    order = np.argsort(-importance, kind="stable")
    return [(names[i], float(importance[i])) for i in order]


@dataclass
class GradientBoosting(Model):
    """Additive logistic model built from shallow regression trees."""

    kind = "gbm"
    trees: TreeEnsemble
    n_features: int
    base_score: float
    learning_rate: float
    train_loss: np.ndarray = field(repr=False)
    seed: int | None = None
    feature_names: list | None = None

    def decision_function(self, X) -> np.ndarray:
        X = check_predict(X, self.n_features)
        if len(self.trees.roots) == 0:
            return np.full(len(X), self.base_score)
        return self.base_score + self.learning_rate * self.trees.apply(X).sum(axis=1)

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def _params(self):
        return {"trees": self.trees.to_dict(), "base_score": self.base_score,
                "learning_rate": self.learning_rate, "train_loss": self.train_loss.tolist()}

    @classmethod
    def _from_params(cls, p):
        return cls(TreeEnsemble.from_dict(p["trees"]), 0, p["base_score"], p["learning_rate"],
                   np.array(p["train_loss"]))


def logistic_loss(y: np.ndarray, score: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, score) - y * score))


def fit_gbm(X, y, rounds: int = 500, max_depth: int = 3, learning_rate: float = 0.1, min_leaf: int = 1,
            seed: int = 0, feature_names=None) -> GradientBoosting:
    """Gradient boosting on the logistic loss.

    Each round fits a depth-limited regression tree to the negative gradient
    ``y - p`` and adds ``learning_rate`` times its leaf means to the score.
    Because the logistic loss has curvature at most 1/4, such steps never
    increase the training loss for ``learning_rate < 8``; ``train_loss`` keeps
    the per-round history (entry 0 is the base-rate model).
    """
    X, y = check_train(X, y)
    n, p = X.shape
    rate = np.clip(y.mean(), 1e-6, 1 - 1e-6)
    base = float(np.log(rate / (1 - rate)))
    n_rounds = int(rounds) if learning_rate > 0 else 0
    feat, thr, lft, rgt, val, sizes, losses = boost(X, y.astype(float), n_rounds, int(max_depth), int(min_leaf),
                                                    float(learning_rate), base)
    trees = [(feat[r, :k], thr[r, :k], lft[r, :k], rgt[r, :k], val[r, :k]) for r, k in enumerate(sizes)]
    return GradientBoosting(TreeEnsemble.pack(trees), p, base, float(learning_rate), np.array(losses),
                            seed, feature_names)
