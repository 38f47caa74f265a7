"""Soft-vote ensembles over trained member models.

Three ensemble kinds exist: deep (all members differentiable, and the
ensemble itself exposes exact input gradients), tree (all members trees),
and heterogeneous (any mix, query-only). Predictions are the weight-convex
combination of member probability distributions.
"""

from __future__ import annotations

import numpy as np

from .base import Model, ModelError, _clip_prob

DEEP_ENS = "deep_ens"
TREE_ENS = "tree_ens"
HETERO_ENS = "hetero_ens"

TREE_KINDS = {"decision_tree", "random_forest", "grad_boost"}


class SoftVoteEnsemble(Model):
    format_version = 1

    def __init__(self, members: list[Model], weights, kind: str):
        if not members:
            raise ModelError("ensemble needs at least one member")
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(members),):
            raise ModelError(
                f"{len(members)} members but weight shape {w.shape}"
            )
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ModelError("ensemble weights must be nonnegative and sum to 1")
        dims = {m.n_features for m in members}
        if len(dims) != 1:
            raise ModelError(f"members disagree on feature dimension: {sorted(dims)}")
        if kind == DEEP_ENS:
            bad = [m.kind for m in members if not m.differentiable]
            if bad:
                raise ModelError(f"deep ensemble requires differentiable members, got {bad}")
        elif kind == TREE_ENS:
            bad = [m.kind for m in members if m.kind not in TREE_KINDS]
            if bad:
                raise ModelError(f"tree ensemble requires tree members, got {bad}")
        elif kind != HETERO_ENS:
            raise ModelError(f"unknown ensemble kind {kind!r}")
        super().__init__(members[0].n_features, {"weights": w.tolist()})
        self.kind = kind
        self.differentiable = kind == DEEP_ENS
        self.members = list(members)
        self.weights = w

    def _proba(self, X):
        P = np.zeros((X.shape[0], 2))
        for m, w in zip(self.members, self.weights):
            P += w * m.predict_proba(X)
        return P / P.sum(axis=1, keepdims=True)

    def proba_gradient(self, x):
        if not self.differentiable:
            return super().proba_gradient(x)
        # mixture probability gradient: weighted sum of member dp1/dx
        g = np.zeros(self.n_features)
        for m, w in zip(self.members, self.weights):
            g += w * m.proba_gradient(x)
        return g

    def _params_dict(self):
        from . import model_to_dict

        return {
            "weights": self.weights.tolist(),
            "members": [model_to_dict(m) for m in self.members],
        }

    def _load_params(self, d):
        from . import model_from_dict

        self.weights = np.array(d["weights"], dtype=float)
        self.members = [model_from_dict(m) for m in d["members"]]


def make_ensemble(members: list[Model], weights, kind: str) -> SoftVoteEnsemble:
    """Combine trained models into a weighted soft-vote ensemble."""
    return SoftVoteEnsemble(members, weights, kind)
