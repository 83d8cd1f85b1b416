"""Soft-margin RBF support vector machine trained by SMO.

The dual problem is solved with the pairwise working-set method of
Fan, Chen and Lin (second-order working set selection), stopping when the
maximal KKT violation drops below ``tol``. Probabilities come from a
sigmoid fitted to the training decision values (Platt scaling with the
Lin-Lin-Weng Newton iteration).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .base import (ConvergenceError, Model, Standardizer, check_predict, check_train, effective_folds,
                   stratified_folds)

C_GRID = (0.1, 1.0, 10.0, 100.0)
# multiples of 1 / n_features
GAMMA_GRID = (0.1, 1.0, 10.0)
TAU = 1e-12


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@njit(cache=True)
def _smo(K, y, C, tol, max_iter):
    """Solve the SVM dual; returns ``(alpha, rho, iterations)`` (-1 on failure)."""
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    for it in range(max_iter):
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            up = (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0)
            if up and -y[t] * G[t] >= gmax:
                gmax = -y[t] * G[t]
                i = t
        gmin = np.inf
        j = -1
        best = np.inf
        for t in range(n):
            low = (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C)
            if not low:
                continue
            v = -y[t] * G[t]
            if v < gmin:
                gmin = v
            if i >= 0:
                b = gmax - v
                if b > 0:
                    a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                    if a <= 0:
                        a = TAU
                    score = -(b * b) / a
                    if score <= best:
                        best = score
                        j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            break
        Qij = y[i] * y[j] * K[i, j]
        old_i = alpha[i]
        old_j = alpha[j]
        if y[i] != y[j]:
            quad = K[i, i] + K[j, j] + 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = K[i, i] + K[j, j] - 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        di = alpha[i] - old_i
        dj = alpha[j] - old_j
        for t in range(n):
            G[t] += y[t] * (y[i] * K[t, i] * di + y[j] * K[t, j] * dj)
    else:
        return alpha, 0.0, -1

    # offset from free vectors, or the midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    s = 0.0
    nfree = 0
    for t in range(n):
        yG = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        else:
            nfree += 1
            s += yG
    if nfree > 0:
        rho = s / nfree
    elif np.isfinite(ub) and np.isfinite(lb):
        rho = 0.5 * (ub + lb)
    elif np.isfinite(ub):
        rho = ub
    elif np.isfinite(lb):
        rho = lb
    else:
        rho = 0.0
    return alpha, rho, it


def platt_scaling(f: np.ndarray, y: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Fit ``P(y=1|f) = 1 / (1 + exp(A f + B))`` with Platt's smoothed targets."""
    n_pos = int((y == 1).sum())
    n_neg = len(y) - n_pos
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(y == 1, hi, lo)
    A, B = 0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))
    sigma = 1e-12

    def objective(A, B):
        z = f * A + B
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-z)), (t - 1) * z + np.log1p(np.exp(z)))))

    fval = objective(A, B)
    for _ in range(max_iter):
        z = f * A + B
        p = np.where(z >= 0, np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))), 1 / (1 + np.exp(-np.abs(z))))
        q = 1 - p
        d1 = t - p
        d2 = p * q
        h11 = sigma + (f * f * d2).sum()
        h22 = sigma + d2.sum()
        h21 = (f * d2).sum()
        g1 = (f * d1).sum()
        g2 = d1.sum()
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = objective(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2
        else:
            break
    return float(A), float(B)


@dataclass
class SVM(Model):
    kind = "svm"
    scaler: Standardizer
    support: np.ndarray
    dual_coef: np.ndarray
    rho: float
    gamma: float
    C: float
    platt: tuple
    n_features: int
    seed: int | None = None
    feature_names: list | None = None

    def decision_function(self, X) -> np.ndarray:
        X = check_predict(X, self.n_features)
        if len(self.support) == 0:
            return np.full(len(X), -self.rho)
        K = rbf_kernel(self.scaler.transform(X), self.support, self.gamma)
        return K @ self.dual_coef - self.rho

    def predict_proba(self, X) -> np.ndarray:
        A, B = self.platt
        z = A * self.decision_function(X) + B
        return 1.0 / (1.0 + np.exp(np.clip(z, -700, 700)))

    def _params(self):
        return {"scaler": self.scaler.to_dict(), "support": self.support.tolist(),
                "dual_coef": self.dual_coef.tolist(), "rho": self.rho, "gamma": self.gamma, "C": self.C,
                "platt": list(self.platt)}

    @classmethod
    def _from_params(cls, p):
        support = np.array(p["support"], dtype=float).reshape(len(p["dual_coef"]), -1)
        return cls(Standardizer.from_dict(p["scaler"]), support, np.array(p["dual_coef"]), p["rho"],
                   p["gamma"], p["C"], tuple(p["platt"]), 0)


def _train_dual(Z, y, C, gamma, tol, max_iter):
    ys = np.where(y == 1, 1.0, -1.0)
    K = rbf_kernel(Z, Z, gamma)
    alpha, rho, it = _smo(K, ys, float(C), float(tol), int(max_iter))
    if it < 0:
        raise ConvergenceError(f"SMO did not converge within {max_iter} iterations (C={C:g}, gamma={gamma:g})")
    sv = alpha > 0
    return Z[sv], alpha[sv] * ys[sv], rho, K[:, sv] @ (alpha[sv] * ys[sv]) - rho


def fit_svm(X, y, C_grid=C_GRID, gamma_grid=GAMMA_GRID, folds: int = 5, tol: float = 1e-3,
            max_iter: int = 1_000_000, seed: int = 0, feature_names=None) -> SVM:
    """Fit an RBF SVM, picking ``(C, gamma)`` by stratified CV accuracy.

    ``gamma_grid`` holds multiples of ``1 / p``. Grid points are tried with
    ``C`` outer and ``gamma`` inner; the first best accuracy wins. With a
    single grid point, or too few rows per class for two folds, no CV runs.
    """
    X, y = check_train(X, y)
    p = X.shape[1]
    grid = [(float(C), float(g) / p) for C in C_grid for g in gamma_grid]
    k = effective_folds(y, folds)
    best = grid[0]
    if len(grid) > 1 and k >= 2:
        fold = stratified_folds(y, k, np.random.default_rng(seed))
        correct = np.zeros(len(grid))
        for f in range(k):
            tr, te = fold != f, fold == f
            sc = Standardizer.fit(X[tr])
            Ztr, Zte = sc.transform(X[tr]), sc.transform(X[te])
            for g, (C, gamma) in enumerate(grid):
                sv, coef, rho, _ = _train_dual(Ztr, y[tr], C, gamma, tol, max_iter)
                dec = (rbf_kernel(Zte, sv, gamma) @ coef - rho) if len(sv) else np.full(te.sum(), -rho)
                correct[g] += ((dec > 0).astype(int) == y[te]).sum()
        best = grid[int(np.argmax(correct))]
    C, gamma = best
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    if y.min() == y.max():
        # one class: a constant decision value, calibrated to that class
        rho = -1.0 if y[0] == 1 else 1.0
        return SVM(scaler, np.zeros((0, p)), np.zeros(0), rho, gamma, C, platt_scaling(np.full(len(y), -rho), y),
                   p, seed, feature_names)
    sv, coef, rho, train_dec = _train_dual(Z, y, C, gamma, tol, max_iter)
    return SVM(scaler, sv, coef, float(rho), gamma, C, platt_scaling(train_dec, y), p, seed, feature_names)
