import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalscreen.learners import (ALGORITHMS, ConvergenceError, Model, RandomForest, Standardizer, default_mtry,
                                 fit_forest, fit_gbm, fit_lasso_logit, fit_model, fit_nnet, fit_superlearner,
                                 fit_svm, fit_tree, gini_importance, importance_ranking, load_model, predict,
                                 save_model, simplex_least_squares)
from coalscreen.learners._cart import grow_tree, grow_tree_sorted
from coalscreen.learners.base import effective_folds, stratified_folds
from coalscreen.learners.lasso import (_kkt_violation, lambda_grid, lambda_max, loss_gradient,
                                       penalized_objective, solve_path)
from coalscreen.learners.nnet import loss_and_grad, n_params
from coalscreen.learners.svm import _smo, rbf_kernel
from oracles import brute_simplex_ls

FAST = {"forest": {"n_trees": 100}, "gbm": {"rounds": 50}, "nnet": {"epochs": 300},
        "lasso": {"folds": 5, "n_lambda": 20}, "svm": {}, "tree": {}}


def blobs(rng, n=40, p=4, gap=8.0):
    y = np.repeat([0, 1], n // 2)
    X = rng.normal(size=(n, p))
    X[:, 0] += gap * y
    return X, y


def central_diff(f, x, h=1e-6):
    g = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# --- trees -----------------------------------------------------------------

def test_tree_single_separating_feature():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 3))
    y = (X[:, 1] < 0.2).astype(int)
    tree = fit_tree(X, y)
    assert tree.depth == 1
    assert (tree.predict(X) == y).all()
    assert tree.trees.feature[0] == 1


def test_tree_constant_target():
    X = np.random.default_rng(1).normal(size=(10, 2))
    tree = fit_tree(X, np.ones(10, dtype=int))
    assert tree.depth == 0
    assert np.all(tree.predict_proba(X) == 1.0)


def test_tree_constant_features():
    X = np.ones((10, 3))
    y = np.array([1] * 7 + [0] * 3)
    tree = fit_tree(X, y)
    assert tree.depth == 0
    assert tree.predict_proba(X[:1])[0] == pytest.approx(0.7)


def test_tree_threshold_is_midpoint_and_ties_go_left():
    X = np.array([[1.0], [2.0], [4.0], [6.0]])
    y = np.array([0, 0, 1, 1])
    tree = fit_tree(X, y)
    assert tree.trees.threshold[0] == 3.0
    assert tree.predict(np.array([[3.0]]))[0] == 0


def test_gini_decrease_matches_definition():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 2))
    y = (X[:, 0] + 0.3 * rng.normal(size=30) > 0).astype(int)
    tree = fit_tree(X, y, max_depth=1)
    f, t = tree.trees.feature[0], tree.trees.threshold[0]

    def gini(v):
        q = v.mean()
        return 2 * q * (1 - q)

    left = X[:, f] <= t
    want = 30 * gini(y) - left.sum() * gini(y[left]) - (~left).sum() * gini(y[~left])
    assert tree.importance[f] == pytest.approx(want, rel=1e-12)


@settings(max_examples=100)
@given(st.integers(0, 2**31 - 1))
def test_split_gains_nonnegative(seed):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(25, 3)), 1)
    y = rng.integers(0, 2, 25).astype(float)
    *_, dec = grow_tree(X, y, rng.integers(0, 25, 25), 2, -1, 1, seed)
    assert np.all(dec >= 0)


@settings(max_examples=100)
@given(st.integers(0, 2**31 - 1), st.integers(-1, 4), st.integers(1, 3))
def test_presorted_growth_matches(seed, depth, min_leaf):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 60))
    X = np.round(rng.normal(size=(n, 4)), 1)
    y = rng.normal(size=n)
    order = np.argsort(X, axis=0, kind="mergesort").T.copy()
    a = grow_tree(X, y, np.arange(n), 4, depth, min_leaf, 0)
    b = grow_tree_sorted(X, y, order, depth, min_leaf)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-10, atol=1e-12)


def test_forest_mtry_default():
    assert default_mtry(36) == 6
    assert default_mtry(90) == 9
    assert default_mtry(16) == 4


def test_forest_separable_blobs():
    rng = np.random.default_rng(2)
    X, y = blobs(rng, 60)
    Xt, yt = blobs(rng, 200)
    forest = fit_forest(X, y, n_trees=200, seed=1)
    assert (forest.predict(Xt) == yt).mean() >= 0.95


def test_forest_deterministic_and_vote_share():
    rng = np.random.default_rng(3)
    X, y = blobs(rng, 30, gap=1.0)
    a = fit_forest(X, y, n_trees=50, seed=9)
    b = fit_forest(X, y, n_trees=50, seed=9)
    Xt = rng.normal(size=(20, 4))
    assert np.array_equal(a.predict_proba(Xt), b.predict_proba(Xt))
    assert np.array_equal(a.predict_proba(Xt), a.votes(Xt).sum(axis=1) / 50)
    assert a.n_trees == 50


def test_vote_share_probability():
    rng = np.random.default_rng(0)
    X, y = blobs(rng, 20)
    forest = fit_forest(X, y, n_trees=10, seed=0)
    votes = forest.votes(X[:1])
    assert forest.predict_proba(X[:1])[0] == votes.sum() / 10


def test_importance_single_signal():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(200, 8))
    y = (X[:, 3] > 0).astype(int)
    imp = gini_importance(fit_forest(X, y, n_trees=300, seed=0))
    assert imp[3] == 100.0
    assert np.all(np.delete(imp, 3) < 20)
    assert len(imp) == 8


def test_importance_noise_rank_unstable():
    winners = set()
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        X = rng.normal(size=(60, 6))
        y = rng.integers(0, 2, 60)
        winners.add(int(np.argmax(gini_importance(fit_forest(X, y, n_trees=100, seed=seed)))))
    assert len(winners) > 1


def test_importance_ranking_ties_keep_order():
    ranking = importance_ranking([50.0, 100.0, 50.0], ["a", "b", "c"])
    assert ranking == [("b", 100.0), ("a", 50.0), ("c", 50.0)]


# --- gradient boosting -------------------------------------------------------

def test_gbm_zero_rate_is_base_rate():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 3))
    y = np.array([1] * 5 + [0] * 15)
    m = fit_gbm(X, y, learning_rate=0.0)
    assert np.allclose(m.predict_proba(X), 0.25)


def test_gbm_loss_non_increasing_and_separable():
    rng = np.random.default_rng(1)
    X, y = blobs(rng, 40, gap=4.0)
    m = fit_gbm(X, y, rounds=100)
    assert np.all(np.diff(m.train_loss) <= 1e-15)
    assert (m.predict(X) == y).all()


def test_gbm_noisy_loss_monotone():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(60, 5))
    y = rng.integers(0, 2, 60)
    m = fit_gbm(X, y, rounds=200, learning_rate=0.5)
    assert np.all(np.diff(m.train_loss) <= 1e-15)


# --- lasso -------------------------------------------------------------------

def test_lasso_objective_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(40, 6))
    y = rng.integers(0, 2, 40).astype(float)
    theta = rng.normal(size=7)

    def loss(t):
        return penalized_objective(Z, y, t[0], t[1:], 0.0)

    g0, g = loss_gradient(Z, y, theta[0], theta[1:])
    fd = central_diff(loss, theta)
    analytic = np.concatenate([[g0], g])
    assert np.max(np.abs(fd - analytic)) / np.max(np.abs(analytic)) <= 1e-5


def test_lasso_kkt_along_path():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(10):
        n, p = int(rng.integers(20, 80)), int(rng.integers(2, 30))
        Z = rng.normal(size=(n, p))
        Z[:, 1] = Z[:, 0] + 1e-2 * rng.normal(size=n)
        y = (Z[:, 0] + rng.normal(size=n) > 0).astype(float)
        grid = lambda_grid(Z, y, 30, 1e-3)
        b0, B = solve_path(Z, y, grid)
        for k, lam in enumerate(grid):
            g0, g = loss_gradient(Z, y, b0[k], B[k])
            zero = B[k] == 0
            assert np.all(np.abs(g[zero]) <= lam + 1e-6)
            assert np.allclose(g[~zero], -lam * np.sign(B[k][~zero]), atol=1e-6)
            assert abs(g0) <= 1e-6
            worst = max(worst, _kkt_violation(Z, y, b0[k] + Z @ B[k], B[k], lam))
    assert worst <= 1e-7


def test_lasso_huge_penalty_gives_base_rate():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 4))
    y = np.array([1] * 10 + [0] * 20)
    m = fit_lasso_logit(X, y, lam=1e3)
    assert np.all(m.coef == 0)
    assert m.intercept == pytest.approx(np.log(0.5), abs=1e-7)


def test_lasso_separable_small_penalty():
    rng = np.random.default_rng(3)
    X, y = blobs(rng, 40, gap=6.0)
    Z = Standardizer.fit(X).transform(X)
    lam = lambda_grid(Z, y.astype(float), 50, 1e-3)[-1]
    m = fit_lasso_logit(X, y, lam=lam)
    assert (m.predict(X) == y).mean() >= 0.95


def test_lasso_support_shrinks_with_penalty():
    # golden instance: support size is monotone along this path
    rng = np.random.default_rng(11)
    Z = rng.normal(size=(60, 8))
    y = (Z[:, :3].sum(axis=1) + rng.normal(size=60) > 0).astype(float)
    grid = lambda_grid(Z, y, 25, 1e-2)
    _, B = solve_path(Z, y, grid)
    counts = (B != 0).sum(axis=1)
    assert np.all(np.diff(counts) >= 0)
    assert counts[0] == 0 and counts[-1] > 3


def test_lambda_max_zeroes_everything():
    rng = np.random.default_rng(4)
    Z = rng.normal(size=(30, 5))
    y = rng.integers(0, 2, 30).astype(float)
    _, B = solve_path(Z, y, [lambda_max(Z, y)])
    assert np.all(B == 0)


def test_lasso_grid_validation_and_convergence_error():
    Z = np.random.default_rng(5).normal(size=(20, 3))
    y = np.array([0, 1] * 10, dtype=float)
    with pytest.raises(ValueError):
        solve_path(Z, y, [0.1, 0.2])
    with pytest.raises(ConvergenceError, match="lambda"):
        solve_path(Z, y, [1e-4], max_iter=1)


def test_lasso_cv_is_seeded():
    rng = np.random.default_rng(6)
    X, y = blobs(rng, 40, gap=1.0)
    a = fit_lasso_logit(X, y, seed=3)
    b = fit_lasso_logit(X, y, seed=3)
    assert a.lam == b.lam and np.array_equal(a.coef, b.coef)
    assert len(a.lambdas) == 50 and np.all(np.diff(a.lambdas) < 0)


# --- svm ---------------------------------------------------------------------

def test_svm_separable_large_c():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    X[y == 1] += 0.5
    m = fit_svm(X, y, C_grid=(1000.0,), gamma_grid=(1.0,))
    assert (m.predict(X) == y).all()


def test_svm_contradictory_point():
    X = np.array([[1.0, 2.0], [1.0, 2.0]])
    y = np.array([0, 1])
    m = fit_svm(X, y)
    assert (m.predict(X) == y).mean() == 0.5
    assert np.allclose(m.predict_proba(X), 0.5)


def test_svm_invariant_to_feature_scale():
    rng = np.random.default_rng(1)
    X, y = blobs(rng, 30, p=3, gap=1.5)
    scaled = X.copy()
    scaled[:, 1] *= 1000.0
    a = fit_svm(X, y, seed=2)
    b = fit_svm(scaled, y, seed=2)
    Xt = rng.normal(size=(10, 3))
    St = Xt.copy()
    St[:, 1] *= 1000.0
    np.testing.assert_allclose(a.predict_proba(Xt), b.predict_proba(St), rtol=1e-6, atol=1e-9)


def test_smo_satisfies_kkt():
    rng = np.random.default_rng(2)
    Z = rng.normal(size=(50, 3))
    ys = np.where(Z[:, 0] + 0.5 * rng.normal(size=50) > 0, 1.0, -1.0)
    K = rbf_kernel(Z, Z, 0.5)
    C = 1.0
    alpha, rho, it = _smo(K, ys, C, 1e-3, 100000)
    assert it >= 0
    assert np.all(alpha >= 0) and np.all(alpha <= C)
    assert abs(alpha @ ys) < 1e-9
    grad = ys * (K @ (alpha * ys)) - 1.0
    up = ((ys > 0) & (alpha < C)) | ((ys < 0) & (alpha > 0))
    low = ((ys > 0) & (alpha > 0)) | ((ys < 0) & (alpha < C))
    assert np.max(-ys[up] * grad[up]) - np.min(-ys[low] * grad[low]) <= 1e-3


# --- neural network ------------------------------------------------------------

def test_nnet_gradient_check():
    rng = np.random.default_rng(0)
    for hidden, p in ((8, 5), (3, 36)):
        Z = rng.normal(size=(25, p))
        y = rng.integers(0, 2, 25).astype(float)
        theta = rng.normal(scale=0.5, size=n_params(p, hidden))
        _, g = loss_and_grad(theta, Z, y, hidden, 1e-3)
        fd = central_diff(lambda t: loss_and_grad(t, Z, y, hidden, 1e-3)[0], theta)
        assert np.max(np.abs(fd - g)) / np.max(np.abs(g)) <= 1e-5


def test_nnet_xor():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 5, dtype=float)
    y = np.array([0, 1, 1, 0] * 5)
    assert (fit_nnet(X, y, seed=0).predict(X) == y).all()


def test_nnet_constant_target():
    X = np.random.default_rng(1).normal(size=(20, 3))
    m = fit_nnet(X, np.ones(20, dtype=int))
    assert np.all(m.predict_proba(X) > 0.95)


def test_nnet_divergence_reported():
    X = np.random.default_rng(2).normal(size=(20, 3)) * 1e3
    y = np.array([0, 1] * 10)
    with pytest.raises(FloatingPointError, match="learning_rate"):
        fit_nnet(X, y, learning_rate=1e300, momentum=0.0)


# --- super learner -------------------------------------------------------------

def test_simplex_ls_prefers_exact_column():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 50).astype(float)
    P = np.column_stack([np.full(50, 0.5), y, np.full(50, 0.5)])
    w = simplex_least_squares(P, y)
    assert w[1] >= 0.99


def test_simplex_ls_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n, m = int(rng.integers(5, 40)), int(rng.integers(1, 5))
        y = rng.integers(0, 2, n).astype(float)
        P = np.clip(y[:, None] * rng.uniform(0, 1, (n, m)) + rng.uniform(0, 0.6, (n, m)), 0, 1)
        w = simplex_least_squares(P, y)
        _, best = brute_simplex_ls(P, y)
        assert np.all(w >= 0) and w.sum() == pytest.approx(1.0, abs=1e-12)
        assert ((P @ w - y) ** 2).sum() <= best * (1 + 1e-7) + 1e-10


def test_superlearner_contract():
    rng = np.random.default_rng(2)
    X, y = blobs(rng, 40, p=5, gap=1.5)
    base = {
        "gbm": lambda X, y, seed=0: fit_gbm(X, y, rounds=30, seed=seed),
        "forest": lambda X, y, seed=0: fit_forest(X, y, n_trees=50, seed=seed),
        "lasso_logit": lambda X, y, seed=0: fit_lasso_logit(X, y, folds=5, n_lambda=20, seed=seed),
        "nnet": lambda X, y, seed=0: fit_nnet(X, y, epochs=300, seed=seed),
    }
    m = fit_superlearner(X, y, base=base, folds=5, seed=1)
    assert np.all(m.weights >= 0) and m.weights.sum() == pytest.approx(1.0, abs=1e-12)
    err = m.oof_squared_error()
    assert err["super"] <= min(v for k, v in err.items() if k != "super") + 1e-12
    p = m.predict_proba(X)
    assert np.allclose(p, m.base_proba(X) @ m.weights)


def test_superlearner_tiny_sample_uses_in_sample_panel():
    X = np.array([[0.0], [1.0], [5.0], [6.0]])
    y = np.array([0, 0, 1, 1])
    base = {"forest": lambda X, y, seed=0: fit_forest(X, y, n_trees=10, seed=seed),
            "gbm": lambda X, y, seed=0: fit_gbm(X, y, rounds=10)}
    m = fit_superlearner(X, y, base=base)
    assert m.oof.shape == (4, 2)
    assert (m.predict(X) == y).all()


# --- shared contract -----------------------------------------------------------

@pytest.mark.parametrize("alg", ALGORITHMS)
def test_roundtrip_and_codomain(alg, tmp_path):
    rng = np.random.default_rng(7)
    X, y = blobs(rng, 30, p=3, gap=1.0)
    settings = dict(FAST.get(alg, {}))
    if alg == "super":
        settings = {"folds": 3, "base": {"forest": {"n_trees": 20}, "gbm": {"rounds": 20},
                                         "lasso_logit": {"folds": 3, "n_lambda": 10}, "nnet": {"epochs": 100}}}
    names = ["a", "b", "c"]
    m = fit_model(alg, X, y, settings, seed=4, feature_names=names)
    Xt = rng.normal(size=(15, 3)) * 3
    proba, labels = predict(m, Xt)
    assert np.all((proba >= 0) & (proba <= 1))
    assert np.array_equal(labels, (proba > 0.5).astype(int))
    path = tmp_path / "model.json"
    save_model(m, path)
    blob = json.loads(path.read_text())
    assert blob["format"] == "coalscreen-model" and blob["version"] == 1 and blob["kind"] == m.kind
    again = load_model(path)
    assert np.array_equal(again.predict_proba(Xt), proba)
    assert list(again.feature_names) == names
    # same seed, same data: identical model
    twin = fit_model(alg, X, y, settings, seed=4, feature_names=names)
    assert np.array_equal(twin.predict_proba(Xt), proba)
    with pytest.raises(ValueError):
        m.predict_proba(Xt[:, :2])


def test_unknown_algorithm():
    with pytest.raises(ValueError, match="unknown algorithm"):
        fit_model("knn", np.zeros((2, 1)), np.array([0, 1]))


def test_model_blob_rejects_foreign():
    with pytest.raises(ValueError):
        Model.from_dict({"format": "other"})
    with pytest.raises(ValueError):
        Model.from_dict({"format": "coalscreen-model", "version": 99})


@pytest.mark.parametrize("X, y", [
    (np.array([[np.nan]]), np.array([0])),
    (np.zeros((3, 2)), np.array([0, 1, 2])),
    (np.zeros((3, 2)), np.array([0, 1])),
])
def test_bad_training_input(X, y):
    with pytest.raises(ValueError):
        fit_tree(X, y)


def test_standardizer_uses_training_rows_only():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(20, 3))
    X[:, 2] = 4.0
    sc = Standardizer.fit(X[:15])
    before = sc.to_dict()
    X[15:] *= 100
    assert Standardizer.fit(X[:15]).to_dict() == before
    assert np.all(sc.transform(X[:15])[:, 2] == 0)


def test_stratified_folds_balance():
    y = np.array([0] * 10 + [1] * 6)
    folds = stratified_folds(y, 3, np.random.default_rng(0))
    for f in range(3):
        assert 1 <= (y[folds == f] == 1).sum() <= 3
    assert effective_folds(y, 15) == 6
    assert effective_folds(np.array([0, 0, 1]), 5) == 0
