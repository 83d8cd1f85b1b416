"""Single-hidden-layer neural network with sigmoid units."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .base import Model, Standardizer, check_predict, check_train, sigmoid


def _unpack(theta: np.ndarray, p: int, hidden: int):
    a = hidden * p
    W1 = theta[:a].reshape(hidden, p)
    b1 = theta[a:a + hidden]
    w2 = theta[a + hidden:a + 2 * hidden]
    b2 = theta[a + 2 * hidden]
    return W1, b1, w2, b2


def n_params(p: int, hidden: int) -> int:
    return hidden * p + 2 * hidden + 1


@njit(cache=True)
def _loss_grad(theta, Z, y, hidden, decay, grad):
    n, p = Z.shape
    a = hidden * p
    H = np.empty((n, hidden))
    loss = 0.0
    for k in range(grad.shape[0]):
        grad[k] = 0.0
    for i in range(n):
        out = theta[a + 2 * hidden]
        for h in range(hidden):
            z = theta[a + h]
            for j in range(p):
                z += theta[h * p + j] * Z[i, j]
            H[i, h] = 1.0 / (1.0 + np.exp(-z))
            out += theta[a + hidden + h] * H[i, h]
        # log(1 + e^out) - y * out, evaluated without overflow
        if out > 0:
            loss += out + np.log1p(np.exp(-out)) - y[i] * out
            q = 1.0 / (1.0 + np.exp(-out))
        else:
            e = np.exp(out)
            loss += np.log1p(e) - y[i] * out
            q = e / (1.0 + e)
        d_out = (q - y[i]) / n
        grad[a + 2 * hidden] += d_out
        for h in range(hidden):
            grad[a + hidden + h] += d_out * H[i, h]
            d_h = d_out * theta[a + hidden + h] * H[i, h] * (1.0 - H[i, h])
            grad[a + h] += d_h
            for j in range(p):
                grad[h * p + j] += d_h * Z[i, j]
    penalty = 0.0
    for k in range(a):
        penalty += theta[k] * theta[k]
        grad[k] += decay * theta[k]
    for h in range(hidden):
        w = theta[a + hidden + h]
        penalty += w * w
        grad[a + hidden + h] += decay * w
    return loss / n + 0.5 * decay * penalty


@njit(cache=True)
def _descend(theta, Z, y, hidden, decay, epochs, learning_rate, momentum):
    grad = np.empty_like(theta)
    velocity = np.zeros_like(theta)
    for epoch in range(epochs):
        loss = _loss_grad(theta, Z, y, hidden, decay, grad)
        if not np.isfinite(loss):
            return theta, epoch
        for k in range(theta.shape[0]):
            velocity[k] = momentum * velocity[k] - learning_rate * grad[k]
            theta[k] += velocity[k]
    return theta, -1


def loss_and_grad(theta: np.ndarray, Z: np.ndarray, y: np.ndarray, hidden: int, decay: float):
    """Mean cross-entropy plus ``decay/2 * ||weights||^2`` and its gradient.

    Biases are not decayed.
    """
    grad = np.empty(len(theta))
    loss = _loss_grad(np.ascontiguousarray(theta, dtype=float), np.ascontiguousarray(Z, dtype=float),
                      np.asarray(y, dtype=float), int(hidden), float(decay), grad)
    return float(loss), grad


@dataclass
class NeuralNet(Model):
    kind = "nnet"
    scaler: Standardizer
    theta: np.ndarray
    hidden: int
    n_features: int
    seed: int | None = None
    feature_names: list | None = None

    def predict_proba(self, X) -> np.ndarray:
        X = check_predict(X, self.n_features)
        W1, b1, w2, b2 = _unpack(self.theta, self.n_features, self.hidden)
        H = sigmoid(self.scaler.transform(X) @ W1.T + b1)
        return sigmoid(H @ w2 + b2)

    def _params(self):
        return {"scaler": self.scaler.to_dict(), "theta": self.theta.tolist(), "hidden": self.hidden}

    @classmethod
    def _from_params(cls, p):
        return cls(Standardizer.from_dict(p["scaler"]), np.array(p["theta"]), p["hidden"], 0)


def fit_nnet(X, y, hidden: int = 8, decay: float = 1e-3, epochs: int = 2000, learning_rate: float = 1.0,
             momentum: float = 0.9, init_scale: float = 0.5, seed: int = 0, feature_names=None) -> NeuralNet:
    """Full-batch gradient descent (heavy-ball momentum) on standardized inputs.

    Weights start uniform in ``[-init_scale, init_scale]``. Raises
    ``FloatingPointError`` if the loss stops being finite.
    """
    X, y = check_train(X, y)
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    yf = y.astype(float)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-init_scale, init_scale, n_params(X.shape[1], hidden))
    theta, failed = _descend(theta, np.ascontiguousarray(Z), yf, int(hidden), float(decay), int(epochs),
                             float(learning_rate), float(momentum))
    if failed >= 0:
        raise FloatingPointError(
            f"network loss became non-finite at epoch {failed}; try a smaller learning_rate")
    return NeuralNet(scaler, theta, hidden, X.shape[1], seed, feature_names)
