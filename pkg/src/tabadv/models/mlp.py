"""Single-hidden-layer perceptron with hand-rolled backprop.

Architecture: input -> ReLU(hidden) -> softmax over two classes, trained by
mini-batch gradient descent on cross-entropy. Kept deliberately small so the
whole model trains in milliseconds and input gradients are cheap to verify
against finite differences.
"""

from __future__ import annotations

import numpy as np

from .base import Model, ModelError, _clip_prob


def _softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


class MLP(Model):
    kind = "mlp"
    differentiable = True

    DEFAULTS = {"hidden": 16, "lr": 0.2, "epochs": 80, "batch_size": 32}

    def __init__(self, n_features, hyperparams=None):
        super().__init__(n_features, hyperparams)
        h = {**self.DEFAULTS, **self.hyperparams}["hidden"]
        self.W1 = np.zeros((n_features, h))
        self.b1 = np.zeros(h)
        self.W2 = np.zeros((h, 2))
        self.b2 = np.zeros(2)
        self._initialized = False

    def init_params(self, rng):
        h = self.W1.shape[1]
        self.W1 = rng.normal(0.0, np.sqrt(2.0 / self.n_features), (self.n_features, h))
        self.b1 = np.zeros(h)
        self.W2 = rng.normal(0.0, np.sqrt(2.0 / h), (h, 2))
        self.b2 = np.zeros(2)
        self._initialized = True

    def _forward(self, X):
        Z1 = X @ self.W1 + self.b1
        H = np.maximum(Z1, 0.0)
        logits = H @ self.W2 + self.b2
        return Z1, H, logits

    def _proba(self, X):
        return _softmax(self._forward(X)[2])

    def fit(self, X, y, rng, sample_weight=None, epochs=None):
        hp = {**self.DEFAULTS, **self.hyperparams}
        if not self._initialized:
            self.init_params(rng)
        epochs = hp["epochs"] if epochs is None else epochs
        n = len(y)
        sw = np.ones(n) if sample_weight is None else np.asarray(sample_weight, float)
        Y = np.zeros((n, 2))
        Y[np.arange(n), np.asarray(y, int)] = 1.0
        bs = min(hp["batch_size"], n)
        for _ in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, bs):
                idx = order[start : start + bs]
                Xb, Yb, wb = X[idx], Y[idx], sw[idx]
                Z1, H, logits = self._forward(Xb)
                P = _softmax(logits)
                d_logits = (P - Yb) * wb[:, None] / wb.sum()
                gW2 = H.T @ d_logits
                gb2 = d_logits.sum(axis=0)
                dH = d_logits @ self.W2.T
                dZ1 = dH * (Z1 > 0)
                gW1 = Xb.T @ dZ1
                gb1 = dZ1.sum(axis=0)
                self.W2 -= hp["lr"] * gW2
                self.b2 -= hp["lr"] * gb2
                self.W1 -= hp["lr"] * gW1
                self.b1 -= hp["lr"] * gb1
            if not all(
                np.all(np.isfinite(a)) for a in (self.W1, self.b1, self.W2, self.b2)
            ):
                raise ModelError("mlp: non-finite parameters during training")
        return self

    def train_steps(self, X, y, rng, epochs, sample_weight=None):
        return self.fit(X, y, rng, sample_weight=sample_weight, epochs=epochs)

    def input_gradient(self, x, y):
        # backprop of cross-entropy down to the input vector
        x = np.asarray(x, dtype=float)
        Z1, H, logits = self._forward(x[None, :])
        P = _softmax(logits)[0]
        d_logits = P.copy()
        d_logits[int(y)] -= 1.0
        dH = d_logits @ self.W2.T
        dZ1 = dH * (Z1[0] > 0)
        return dZ1 @ self.W1.T

    def proba_gradient(self, x):
        # dp1/dx through the softmax Jacobian row for class 1
        x = np.asarray(x, dtype=float)
        Z1, H, logits = self._forward(x[None, :])
        P = _softmax(logits)[0]
        d_logits = P[1] * (np.array([0.0, 1.0]) - P)
        dH = d_logits @ self.W2.T
        dZ1 = dH * (Z1[0] > 0)
        return dZ1 @ self.W1.T

    def _params_dict(self):
        return {
            "W1": self.W1.tolist(),
            "b1": self.b1.tolist(),
            "W2": self.W2.tolist(),
            "b2": self.b2.tolist(),
        }

    def _load_params(self, d):
        self.W1 = np.array(d["W1"], dtype=float)
        self.b1 = np.array(d["b1"], dtype=float)
        self.W2 = np.array(d["W2"], dtype=float)
        self.b2 = np.array(d["b2"], dtype=float)
        self._initialized = True
