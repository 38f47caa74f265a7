"""Logistic regression and linear SVM with closed-form input gradients."""

from __future__ import annotations

import numpy as np

from .base import Model, ModelError, _clip_prob, cross_entropy


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


class LogisticRegression(Model):
    kind = "lr"
    differentiable = True

    DEFAULTS = {"lr": 0.5, "epochs": 300, "l2": 1e-4}

    def __init__(self, n_features, hyperparams=None):
        super().__init__(n_features, hyperparams)
        self.w = np.zeros(n_features)
        self.b = 0.0

    def _scores(self, X):
        return X @ self.w + self.b

    def _proba(self, X):
        p1 = _sigmoid(self._scores(X))
        return np.column_stack([1.0 - p1, p1])

    def fit(self, X, y, rng, sample_weight=None, epochs=None):
        hp = {**self.DEFAULTS, **self.hyperparams}
        epochs = hp["epochs"] if epochs is None else epochs
        sw = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, float)
        sw = sw / sw.sum()
        for _ in range(epochs):
            p1 = _sigmoid(self._scores(X))
            err = (p1 - y) * sw
            gw = X.T @ err + hp["l2"] * self.w
            gb = err.sum()
            self.w -= hp["lr"] * gw
            self.b -= hp["lr"] * gb
            if not (np.all(np.isfinite(self.w)) and np.isfinite(self.b)):
                raise ModelError("lr: non-finite parameters during training")
        return self

    def train_steps(self, X, y, rng, epochs, sample_weight=None):
        return self.fit(X, y, rng, sample_weight=sample_weight, epochs=epochs)

    def proba_gradient(self, x):
        p1 = float(self.predict_proba(x)[1])
        return p1 * (1.0 - p1) * self.w

    def input_gradient(self, x, y):
        # exact: dCE/dx = (sigma(wx+b) - y) w
        p1 = float(self.predict_proba(x)[1])
        return (p1 - int(y)) * self.w

    def _params_dict(self):
        return {"w": self.w.tolist(), "b": self.b}

    def _load_params(self, d):
        self.w = np.array(d["w"], dtype=float)
        self.b = float(d["b"])


class LinearSVM(Model):
    """Linear SVM trained by full-batch subgradient descent on the hinge loss.

    Probabilities come from a logistic squash of the margin score, so the
    model still satisfies the two-class distribution contract; `loss` is the
    hinge loss.
    """

    kind = "linear_svm"
    differentiable = True

    DEFAULTS = {"lr": 0.2, "epochs": 300, "l2": 1e-3}

    def __init__(self, n_features, hyperparams=None):
        super().__init__(n_features, hyperparams)
        self.w = np.zeros(n_features)
        self.b = 0.0

    def _scores(self, X):
        return X @ self.w + self.b

    def _proba(self, X):
        p1 = _sigmoid(self._scores(X))
        return np.column_stack([1.0 - p1, p1])

    def fit(self, X, y, rng, sample_weight=None, epochs=None):
        hp = {**self.DEFAULTS, **self.hyperparams}
        epochs = hp["epochs"] if epochs is None else epochs
        t = 2.0 * np.asarray(y) - 1.0
        sw = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, float)
        sw = sw / sw.sum()
        for _ in range(epochs):
            margins = t * self._scores(X)
            active = (margins < 1.0) * sw
            gw = hp["l2"] * self.w - X.T @ (t * active)
            gb = -(t * active).sum()
            self.w -= hp["lr"] * gw
            self.b -= hp["lr"] * gb
            if not (np.all(np.isfinite(self.w)) and np.isfinite(self.b)):
                raise ModelError("linear_svm: non-finite parameters during training")
        return self

    def train_steps(self, X, y, rng, epochs, sample_weight=None):
        return self.fit(X, y, rng, sample_weight=sample_weight, epochs=epochs)

    def loss(self, x, y):
        t = 2.0 * int(y) - 1.0
        return float(max(0.0, 1.0 - t * (np.asarray(x) @ self.w + self.b)))

    def input_gradient(self, x, y):
        t = 2.0 * int(y) - 1.0
        margin = t * (np.asarray(x) @ self.w + self.b)
        if margin < 1.0:
            return -t * self.w
        return np.zeros(self.n_features)

    def proba_gradient(self, x):
        p1 = float(self.predict_proba(x)[1])
        return p1 * (1.0 - p1) * self.w

    def _params_dict(self):
        return {"w": self.w.tolist(), "b": self.b}

    def _load_params(self, d):
        self.w = np.array(d["w"], dtype=float)
        self.b = float(d["b"])
