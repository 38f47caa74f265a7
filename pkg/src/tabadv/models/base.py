"""Classifier contracts shared by every model kind.

Every model emits a two-class probability distribution. Differentiable kinds
additionally expose exact input gradients (the probability gradient dp1/dx
and the loss gradient dL/dx). Prediction ties break toward label 0 (benign).
"""

from __future__ import annotations

import numpy as np

PROB_FLOOR = 1e-12  # keeps log-based losses finite


class ModelError(ValueError):
    """Bad training data or malformed model usage."""


class CapabilityError(ModelError):
    """Gradient requested from a query-only model."""


def _clip_prob(p):
    return np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


def cross_entropy(p1: float, y: int) -> float:
    p1 = float(_clip_prob(p1))
    return -np.log(p1) if y == 1 else -np.log(1.0 - p1)


class Model:
    """Base classifier interface.

    Subclasses implement `_proba(X)` over a 2-D batch and, when
    `differentiable`, `proba_gradient(x)` returning dp1/dx.
    """

    kind: str = "base"
    differentiable: bool = False
    format_version = 1

    def __init__(self, n_features: int, hyperparams: dict | None = None):
        self.n_features = int(n_features)
        self.hyperparams = dict(hyperparams or {})
        self.provenance: dict = {}

    # ---- prediction ---------------------------------------------------------

    def _proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_dim(self, X: np.ndarray) -> tuple[np.ndarray, bool]:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ModelError(
                f"{self.kind}: expected {self.n_features} features, got shape {X.shape}"
            )
        return X, single

    def predict_proba(self, X):
        """Two-class distribution; rows sum to 1."""
        X, single = self._check_dim(X)
        P = self._proba(X)
        return P[0] if single else P

    def predict(self, X):
        """Argmax label with ties broken toward 0 (benign)."""
        P = self.predict_proba(X)
        if P.ndim == 1:
            return int(P[1] > P[0])
        return (P[:, 1] > P[:, 0]).astype(int)

    def loss(self, x, y: int) -> float:
        """Cross-entropy of the predicted distribution (hinge for margin kinds)."""
        p = self.predict_proba(x)
        return cross_entropy(p[1], int(y))

    # ---- gradients ----------------------------------------------------------

    def proba_gradient(self, x) -> np.ndarray:
        """dp1/dx. Only available on differentiable kinds."""
        raise CapabilityError(f"{self.kind} is query-only; no input gradients")

    def input_gradient(self, x, y: int) -> np.ndarray:
        """dL/dx for the model's own loss at (x, y)."""
        if not self.differentiable:
            raise CapabilityError(f"{self.kind} is query-only; no input gradients")
        p1 = float(_clip_prob(self.predict_proba(x)[1]))
        # chain rule through cross-entropy: dL/dp1 = (p1 - y) / (p1 (1 - p1))
        dldp = (p1 - int(y)) / (p1 * (1.0 - p1))
        return dldp * self.proba_gradient(x)

    # ---- persistence --------------------------------------------------------

    def _params_dict(self) -> dict:
        raise NotImplementedError

    def _load_params(self, d: dict) -> None:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "kind": self.kind,
            "n_features": self.n_features,
            "hyperparams": self.hyperparams,
            "params": self._params_dict(),
            "provenance": self.provenance,
        }


class QueryCounter:
    """Wraps a model and counts every model evaluation it serves.

    Each probability evaluation of one sample counts as one query; loss,
    prediction, and gradient calls count the evaluations they perform
    (one per sample). Attacks route all model access through a counter so
    reported query counts are exact.
    """

    def __init__(self, model: Model):
        self.model = model
        self.count = 0

    @property
    def kind(self):
        return self.model.kind

    @property
    def differentiable(self):
        return self.model.differentiable

    @property
    def n_features(self):
        return self.model.n_features

    def predict_proba(self, X):
        X = np.asarray(X)
        self.count += 1 if X.ndim == 1 else X.shape[0]
        return self.model.predict_proba(X)

    def predict(self, X):
        P = self.predict_proba(X)
        if P.ndim == 1:
            return int(P[1] > P[0])
        return (P[:, 1] > P[:, 0]).astype(int)

    def loss(self, x, y):
        self.count += 1
        return self.model.loss(x, y)

    def proba_gradient(self, x):
        self.count += 1
        return self.model.proba_gradient(x)

    def input_gradient(self, x, y):
        self.count += 1
        return self.model.input_gradient(x, y)
