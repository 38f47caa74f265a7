"""Trainable detector models: linear, neural, tree, and ensemble families."""

from __future__ import annotations

import json

import numpy as np

from ..data import Dataset
from .base import CapabilityError, Model, ModelError, QueryCounter, cross_entropy
from .ensemble import DEEP_ENS, HETERO_ENS, TREE_ENS, SoftVoteEnsemble, make_ensemble
from .linear import LinearSVM, LogisticRegression
from .mlp import MLP
from .trees import DecisionTree, GradBoost, RandomForest

BASE_KINDS = {
    "lr": LogisticRegression,
    "linear_svm": LinearSVM,
    "mlp": MLP,
    "decision_tree": DecisionTree,
    "random_forest": RandomForest,
    "grad_boost": GradBoost,
}

ENSEMBLE_KINDS = (DEEP_ENS, TREE_ENS, HETERO_ENS)

# default member recipes when an ensemble kind is trained directly
ENSEMBLE_RECIPES = {
    DEEP_ENS: ("lr", "linear_svm", "mlp"),
    TREE_ENS: ("decision_tree", "random_forest", "grad_boost"),
    HETERO_ENS: ("lr", "mlp", "random_forest"),
}

FORMAT_VERSION = 1


def train(kind: str, hyperparams: dict | None, train_ds: Dataset, seed: int) -> Model:
    """Train a fresh model of the given kind; deterministic under the seed.

    Ensemble kinds train their default member recipe on the same data and
    combine the members with uniform weights.
    """
    n0, n1 = train_ds.class_counts()
    if n0 == 0 or n1 == 0:
        raise ModelError(
            f"training set must contain both classes (got {n0} benign, {n1} malicious)"
        )
    hyperparams = dict(hyperparams or {})
    if kind in ENSEMBLE_KINDS:
        recipe = hyperparams.pop("members", ENSEMBLE_RECIPES[kind])
        members = [
            train(mk, hyperparams.get(mk), train_ds, seed + 101 * (i + 1))
            for i, mk in enumerate(recipe)
        ]
        return make_ensemble(members, np.full(len(members), 1.0 / len(members)), kind)
    if kind not in BASE_KINDS:
        raise ModelError(
            f"unknown model kind {kind!r}; valid kinds: "
            f"{sorted(BASE_KINDS) + sorted(ENSEMBLE_KINDS)}"
        )
    model = BASE_KINDS[kind](train_ds.n_features, hyperparams)
    rng = np.random.default_rng(seed)
    model.fit(train_ds.X, train_ds.y, rng)
    return model


def model_to_dict(model: Model) -> dict:
    return model.to_dict()


def model_from_dict(d: dict) -> Model:
    version = d.get("format_version", 0)
    if version > FORMAT_VERSION:
        raise ModelError(
            f"model format version {version} is newer than supported {FORMAT_VERSION}"
        )
    kind = d["kind"]
    if kind in ENSEMBLE_KINDS:
        params = d["params"]
        members = [model_from_dict(m) for m in params["members"]]
        ens = SoftVoteEnsemble(members, np.array(params["weights"]), kind)
        ens.provenance = d.get("provenance", {})
        return ens
    if kind not in BASE_KINDS:
        raise ModelError(f"unknown model kind {kind!r} in serialized model")
    model = BASE_KINDS[kind](d["n_features"], d.get("hyperparams"))
    model._load_params(d["params"])
    model.provenance = d.get("provenance", {})
    return model


def save_model(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def accuracy(model: Model, ds: Dataset) -> float:
    return float(np.mean(model.predict(ds.X) == ds.y))
