"""From-scratch probabilistic classifiers with a shared fit/predict contract."""

from .base import (ConvergenceError, Model, Standardizer, check_train, load_model, predict, save_model)
from .lasso import LassoLogit, fit_lasso_logit
from .nnet import NeuralNet, fit_nnet
from .superlearner import SuperLearner, default_base_learners, fit_superlearner, simplex_least_squares
from .svm import SVM, fit_svm
from .trees import (DecisionTree, GradientBoosting, RandomForest, default_mtry, fit_forest, fit_gbm, fit_tree,
                    gini_importance, importance_ranking)

__all__ = [
    "ConvergenceError", "Model", "Standardizer", "check_train", "load_model", "predict", "save_model",
    "LassoLogit", "fit_lasso_logit", "NeuralNet", "fit_nnet", "SuperLearner", "default_base_learners",
    "fit_superlearner", "simplex_least_squares", "SVM", "fit_svm", "DecisionTree", "GradientBoosting",
    "RandomForest", "default_mtry", "fit_forest", "fit_gbm", "fit_tree", "gini_importance",
    "importance_ranking", "fit_model", "ALGORITHMS",
]

ALGORITHMS = ("lasso", "forest", "svm", "super", "gbm", "nnet", "tree")


def fit_model(algorithm: str, X, y, settings: dict | None = None, seed: int = 0, feature_names=None) -> Model:
    """Fit one algorithm by name with keyword ``settings`` for that learner.

    For ``"super"``, ``settings`` may hold ``folds`` and a ``base`` mapping of
    per-learner keyword overrides (keys ``gbm``, ``forest``, ``lasso_logit``,
    ``nnet``).
    """
    settings = dict(settings or {})
    if algorithm == "lasso":
        return fit_lasso_logit(X, y, seed=seed, feature_names=feature_names, **settings)
    if algorithm == "forest":
        return fit_forest(X, y, seed=seed, feature_names=feature_names, **settings)
    if algorithm == "svm":
        return fit_svm(X, y, seed=seed, feature_names=feature_names, **settings)
    if algorithm == "gbm":
        return fit_gbm(X, y, seed=seed, feature_names=feature_names, **settings)
    if algorithm == "nnet":
        return fit_nnet(X, y, seed=seed, feature_names=feature_names, **settings)
    if algorithm == "tree":
        return fit_tree(X, y, feature_names=feature_names, **settings)
    if algorithm == "super":
        base = default_base_learners(settings.pop("base", None))
        return fit_superlearner(X, y, base=base, seed=seed, feature_names=feature_names, **settings)
    raise ValueError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}")
