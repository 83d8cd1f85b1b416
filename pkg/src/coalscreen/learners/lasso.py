"""L1-penalized logistic regression.

Each outer step builds the weighted least-squares model of the logistic loss
at the current fit and minimizes it plus the penalty by cyclic coordinate
descent; once the active set stops changing the quadratic is solved directly
on it. Steps are backtracked until the full objective decreases.

Minimizes ``mean(log(1 + exp(eta)) - y * eta) + lam * sum(|beta_j|)`` with
``eta = b0 + Z @ beta`` on z-scored features ``Z``; the intercept is not
penalized. The penalty is picked from a descending log-spaced grid by
stratified K-fold cross-validation on the squared error of the predicted
probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .base import (ConvergenceError, Model, Standardizer, check_predict, check_train, effective_folds,
                   sigmoid, stratified_folds)


@njit(cache=True)
def _expit(z):
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _softplus(z):
    if z > 0:
        return z + np.log1p(np.exp(-z))
    return np.log1p(np.exp(z))


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def _kkt_violation(Z, y, eta, beta, lam):
    n, p = Z.shape
    prob = np.empty(n)
    g0 = 0.0
    for i in range(n):
        prob[i] = _expit(eta[i])
        g0 += prob[i] - y[i]
    worst = abs(g0) / n
    for j in range(p):
        g = 0.0
        for i in range(n):
            g += Z[i, j] * (prob[i] - y[i])
        g /= n
        if beta[j] > 0:
            v = abs(g + lam)
        elif beta[j] < 0:
            v = abs(g - lam)
        else:
            v = max(0.0, abs(g) - lam)
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def _objective(y, eta, beta, lam):
    n = eta.shape[0]
    s = 0.0
    for i in range(n):
        s += _softplus(eta[i]) - y[i] * eta[i]
    return s / n + lam * np.abs(beta).sum()


@njit(cache=True)
def _quad_objective(Z, work, w, lam, b0, beta):
    n = Z.shape[0]
    fit = b0 + Z @ beta
    s = 0.0
    for i in range(n):
        s += w[i] * (work[i] - fit[i]) ** 2
    return 0.5 * s / n + lam * np.abs(beta).sum()


@njit(cache=True)
def _solve_on_support(Z, work, w, lam, nb0, nbeta):
    """Improve the weighted quadratic model by direct solves on the support.

    Solves the sign-fixed problem on the current support; if that would flip
    a sign, moves only as far as the first zero crossing, drops that
    coordinate and solves again. Returns ``(ok, b0, beta)`` with ``ok`` False
    when no improvement was found.
    """
    n, p = Z.shape
    sw = np.sqrt(w)
    start = _quad_objective(Z, work, w, lam, nb0, nbeta)
    cur_b0 = nb0
    cur = nbeta.copy()
    for _ in range(p + 1):
        support = np.flatnonzero(cur)
        m = support.shape[0] + 1
        A = np.empty((n, m))
        for i in range(n):
            A[i, 0] = sw[i]
            for a in range(m - 1):
                A[i, a + 1] = sw[i] * Z[i, support[a]]
        M = A.T @ A / n
        rhs = A.T @ (sw * work) / n
        for a in range(m - 1):
            rhs[a + 1] -= lam * np.sign(cur[support[a]])
        sol = np.linalg.lstsq(M, rhs)[0]
        t = 1.0
        hit = -1
        for a in range(m - 1):
            c = cur[support[a]]
            if np.sign(sol[a + 1]) != np.sign(c):
                frac = c / (c - sol[a + 1])
                if frac < t:
                    t = frac
                    hit = support[a]
        cur_b0 = cur_b0 + t * (sol[0] - cur_b0)
        for a in range(m - 1):
            j = support[a]
            cur[j] = cur[j] + t * (sol[a + 1] - cur[j])
        if hit < 0:
            break
        cur[hit] = 0.0
    if _quad_objective(Z, work, w, lam, cur_b0, cur) <= start:
        return True, cur_b0, cur
    return False, nb0, nbeta


@njit(cache=True)
def _newton_direction(Z, y, eta, b0, beta, lam, max_inner, inner_tol):
    """Minimize the penalized quadratic model of the loss at ``eta``.

    The quadratic model is a weighted least-squares problem (IRLS weights
    p(1-p)) solved by cyclic coordinate descent; once the support settles it
    is finished off by a direct solve on that support. Returns the minimizer.
    """
    n, p = Z.shape
    w = np.empty(n)
    r = np.empty(n)
    work = np.empty(n)
    for i in range(n):
        q = _expit(eta[i])
        w[i] = max(q * (1.0 - q), 1e-6)
        # residual of the working response z = eta + (y - q) / w
        r[i] = (y[i] - q) / w[i]
        work[i] = eta[i] + r[i]
    nb0 = b0
    nbeta = beta.copy()
    curv = np.empty(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += w[i] * Z[i, j] * Z[i, j]
        curv[j] = s / n
    wsum = w.sum() / n
    active = np.ones(p, np.bool_)
    full = True
    stable = 0
    for it in range(max_inner):
        biggest = 0.0
        changed = False
        s = 0.0
        for i in range(n):
            s += w[i] * r[i]
        d = s / n / wsum
        if d != 0.0:
            nb0 += d
            for i in range(n):
                r[i] -= d
            biggest = max(biggest, d * d * wsum)
        for j in range(p):
            if curv[j] <= 0.0 or not (full or active[j]):
                continue
            s = 0.0
            for i in range(n):
                s += w[i] * Z[i, j] * r[i]
            new = _soft(s / n + curv[j] * nbeta[j], lam) / curv[j]
            d = new - nbeta[j]
            if d != 0.0:
                if (new == 0.0) != (nbeta[j] == 0.0):
                    changed = True
                for i in range(n):
                    r[i] -= d * Z[i, j]
                nbeta[j] = new
                biggest = max(biggest, d * d * curv[j])
            if full:
                active[j] = new != 0.0
        # sweep the active set until it settles, then confirm with a full sweep
        if biggest < inner_tol:
            if full:
                break
            full = True
            continue
        full = False
        stable = 0 if changed else stable + 1
        if stable == 5:
            stable = 0
            ok, cb0, cbeta = _solve_on_support(Z, work, w, lam, nb0, nbeta)
            if ok:
                nb0 = cb0
                nbeta = cbeta
                for i in range(n):
                    fit = nb0
                    for j in range(p):
                        if nbeta[j] != 0.0:
                            fit += Z[i, j] * nbeta[j]
                    r[i] = work[i] - fit
                full = True
    return nb0, nbeta


@njit(cache=True)
def _cd_path(Z, y, lambdas, b0, beta, tol, max_iter):
    n, p = Z.shape
    L = len(lambdas)
    path_b0 = np.empty(L)
    path_beta = np.empty((L, p))
    eta = b0 + Z @ beta
    for k in range(L):
        lam = lambdas[k]
        converged = False
        for it in range(max_iter):
            viol = _kkt_violation(Z, y, eta, beta, lam)
            if viol <= tol:
                converged = True
                break
            # inexact Newton: solve the quadratic model only as well as the outer iterate needs
            inner_tol = max(min(1e-3 * viol * viol, 1e-6), 1e-24)
            nb0, nbeta = _newton_direction(Z, y, eta, b0, beta, lam, 100_000, inner_tol)
            db0 = nb0 - b0
            dbeta = nbeta - beta
            deta = db0 + Z @ dbeta
            f0 = _objective(y, eta, beta, lam)
            step = 1.0
            # backtracking keeps every outer iteration a descent step
            for _ in range(60):
                cand_beta = beta + step * dbeta
                if _objective(y, eta + step * deta, cand_beta, lam) <= f0:
                    break
                step *= 0.5
            b0 = b0 + step * db0
            beta = beta + step * dbeta
            eta = eta + step * deta
        if not converged:
            return path_b0, path_beta, k
        path_b0[k] = b0
        path_beta[k] = beta
    return path_b0, path_beta, -1


def lambda_max(Z: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty at which every slope is zero."""
    return float(np.abs(Z.T @ (y - y.mean())).max() / len(y)) if Z.shape[1] else 0.0


def lambda_grid(Z: np.ndarray, y: np.ndarray, n_lambda: int = 50, ratio: float = 1e-3) -> np.ndarray:
    top = lambda_max(Z, y)
    if top <= 0:
        return np.array([1.0])
    return np.geomspace(top, top * ratio, n_lambda)


def solve_path(Z, y, lambdas, tol: float = 1e-7, max_iter: int = 1000):
    """Coefficient path over a descending penalty grid, warm-started.

    Returns ``(intercepts, coefficients)`` with shapes ``(L,)`` and ``(L, p)``.
    """
    y = np.asarray(y, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas <= 0) or np.any(np.diff(lambdas) > 0):
        raise ValueError("penalty grid must be positive and descending")
    rate = min(max(y.mean(), 1e-6), 1 - 1e-6)
    b0 = float(np.log(rate / (1 - rate)))
    beta = np.zeros(Z.shape[1])
    path_b0, path_beta, failed = _cd_path(np.ascontiguousarray(Z), y, lambdas, b0, beta, tol, max_iter)
    if failed >= 0:
        raise ConvergenceError(
            f"coordinate descent did not reach tolerance {tol:g} within {max_iter} Newton iterations "
            f"at lambda={lambdas[failed]:.6g}")
    return path_b0, path_beta


def penalized_objective(Z, y, b0, beta, lam) -> float:
    eta = b0 + Z @ beta
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta) + lam * np.abs(beta).sum())


def loss_gradient(Z, y, b0, beta) -> tuple[float, np.ndarray]:
    """Gradient of the unpenalized mean logistic loss."""
    r = sigmoid(b0 + Z @ beta) - y
    return float(r.mean()), Z.T @ r / len(y)


@dataclass
class LassoLogit(Model):
    kind = "lasso_logit"
    scaler: Standardizer
    intercept: float
    coef: np.ndarray
    lam: float
    n_features: int
    lambdas: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    cv_error: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    seed: int | None = None
    feature_names: list | None = None

    def decision_function(self, X) -> np.ndarray:
        X = check_predict(X, self.n_features)
        return self.intercept + self.scaler.transform(X) @ self.coef

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def _params(self):
        return {"scaler": self.scaler.to_dict(), "intercept": self.intercept, "coef": self.coef.tolist(),
                "lam": self.lam, "lambdas": self.lambdas.tolist(), "cv_error": self.cv_error.tolist()}

    @classmethod
    def _from_params(cls, p):
        return cls(Standardizer.from_dict(p["scaler"]), p["intercept"], np.array(p["coef"]), p["lam"], 0,
                   np.array(p["lambdas"]), np.array(p["cv_error"]))


def fit_lasso_logit(X, y, folds: int = 15, n_lambda: int = 50, lambda_ratio: float = 1e-2,
                    lam: float | None = None, tol: float = 1e-7, max_iter: int = 1000,
                    seed: int = 0, feature_names=None) -> LassoLogit:
    """Fit the lasso logit, choosing the penalty by cross-validation.

    The grid runs from the smallest all-zero penalty down by ``lambda_ratio``.
    Passing ``lam`` skips cross-validation and fits at that penalty. Fold
    count is capped by the minority class size so every training part holds
    both classes; with fewer than two minority rows the largest grid penalty
    is used.
    """
    X, y = check_train(X, y)
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    yf = y.astype(float)
    if y.min() == y.max():
        rate = min(max(yf.mean(), 1e-6), 1 - 1e-6)
        return LassoLogit(scaler, float(np.log(rate / (1 - rate))), np.zeros(X.shape[1]), float("inf"),
                          X.shape[1], seed=seed, feature_names=feature_names)
    if lam is not None:
        top = lambda_max(Z, yf)
        grid = np.array([max(top, lam), lam]) if top > lam else np.array([lam])
        b0, beta = solve_path(Z, yf, grid, tol, max_iter)
        return LassoLogit(scaler, float(b0[-1]), beta[-1].copy(), float(lam), X.shape[1], grid,
                          seed=seed, feature_names=feature_names)

    grid = lambda_grid(Z, yf, n_lambda, lambda_ratio)
    k = effective_folds(y, folds)
    if k >= 2:
        fold = stratified_folds(y, k, np.random.default_rng(seed))
        err = np.zeros(len(grid))
        for f in range(k):
            tr, te = fold != f, fold == f
            sc = Standardizer.fit(X[tr])
            b0, beta = solve_path(sc.transform(X[tr]), yf[tr], grid, tol, max_iter)
            prob = sigmoid(b0[None, :] + sc.transform(X[te]) @ beta.T)
            err += ((prob - yf[te, None]) ** 2).sum(axis=0)
        err /= len(y)
        best = int(np.argmin(err))
    else:
        err = np.full(len(grid), np.nan)
        best = 0
    b0, beta = solve_path(Z, yf, grid[: best + 1], tol, max_iter)
    return LassoLogit(scaler, float(b0[-1]), beta[-1].copy(), float(grid[best]), X.shape[1], grid, err,
                      seed, feature_names)
