"""Tree-family classifiers: CART-style decision tree, bagged forest, boosting.

All tree kinds are query-only. Leaf probabilities are Laplace-smoothed so no
leaf ever emits a hard 0/1, which would break log-based attack losses.
Split ties resolve to the lowest feature index, then the lowest threshold,
so training is fully deterministic given the data (and the seed, for the
randomized kinds).
"""

from __future__ import annotations

import numpy as np

from .base import Model, ModelError


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value=None, feature=None, threshold=None, left=None, right=None):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value  # leaf payload: p1 for classifiers, mean for regressors

    def is_leaf(self):
        return self.feature is None

    def to_dict(self):
        if self.is_leaf():
            return {"value": self.value}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        if "value" in d:
            return cls(value=d["value"])
        return cls(
            feature=d["feature"],
            threshold=d["threshold"],
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


def _predict_node(node, x):
    while not node.is_leaf():
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


def _gini(counts):
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return 1.0 - float((p * p).sum())


def _best_split(X, y, feature_ids, min_leaf):
    """Exhaustive Gini split search over midpoint thresholds."""
    n = len(y)
    total = np.array([np.sum(y == 0), np.sum(y == 1)], dtype=float)
    parent = _gini(total)
    best = None  # (gain, feature, threshold)
    for f in feature_ids:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        left = np.zeros(2)
        right = total.copy()
        for i in range(n - 1):
            left[ys[i]] += 1
            right[ys[i]] -= 1
            if xs[i] == xs[i + 1]:
                continue
            if i + 1 < min_leaf or n - i - 1 < min_leaf:
                continue
            thr = 0.5 * (xs[i] + xs[i + 1])
            w_l = (i + 1) / n
            gain = parent - w_l * _gini(left) - (1 - w_l) * _gini(right)
            if best is None or gain > best[0] + 1e-12:
                best = (gain, f, thr)
    return best


def _grow(X, y, depth, max_depth, min_leaf, feature_subsample, rng):
    n1 = int(np.sum(y == 1))
    leaf_p1 = (n1 + 1.0) / (len(y) + 2.0)  # Laplace smoothing
    if depth >= max_depth or len(y) < 2 * min_leaf or len(set(y.tolist())) == 1:
        return _Node(value=leaf_p1)
    d = X.shape[1]
    if feature_subsample is not None and feature_subsample < d:
        feats = np.sort(rng.choice(d, size=feature_subsample, replace=False))
    else:
        feats = np.arange(d)
    # zero-gain splits are allowed on mixed nodes (pure nodes already stopped
    # above): parity-style datasets only pay off two levels down
    split = _best_split(X, y, feats, min_leaf)
    if split is None or split[0] < -1e-12:
        return _Node(value=leaf_p1)
    _, f, thr = split
    mask = X[:, f] <= thr
    left = _grow(X[mask], y[mask], depth + 1, max_depth, min_leaf, feature_subsample, rng)
    right = _grow(X[~mask], y[~mask], depth + 1, max_depth, min_leaf, feature_subsample, rng)
    return _Node(feature=int(f), threshold=float(thr), left=left, right=right)


class DecisionTree(Model):
    kind = "decision_tree"
    differentiable = False

    DEFAULTS = {"max_depth": 6, "min_leaf": 1}

    def __init__(self, n_features, hyperparams=None):
        super().__init__(n_features, hyperparams)
        self.root: _Node | None = None

    def fit(self, X, y, rng, sample_weight=None):
        hp = {**self.DEFAULTS, **self.hyperparams}
        self.root = _grow(
            np.asarray(X, float), np.asarray(y, int), 0, hp["max_depth"],
            hp["min_leaf"], None, rng,
        )
        return self

    def refit(self, X, y, rng, sample_weight=None):
        return self.fit(X, y, rng)

    def _proba(self, X):
        p1 = np.array([_predict_node(self.root, x) for x in X])
        return np.column_stack([1.0 - p1, p1])

    def _params_dict(self):
        return {"tree": self.root.to_dict()}

    def _load_params(self, d):
        self.root = _Node.from_dict(d["tree"])


class RandomForest(Model):
    kind = "random_forest"
    differentiable = False

    DEFAULTS = {"n_trees": 15, "max_depth": 6, "min_leaf": 1}

    def __init__(self, n_features, hyperparams=None):
        super().__init__(n_features, hyperparams)
        self.roots: list[_Node] = []

    def fit(self, X, y, rng, sample_weight=None):
        hp = {**self.DEFAULTS, **self.hyperparams}
        X = np.asarray(X, float)
        y = np.asarray(y, int)
        n = len(y)
        sub = max(1, int(round(np.sqrt(self.n_features))))
        self.roots = []
        for _ in range(hp["n_trees"]):
            idx = rng.integers(0, n, size=n)
            self.roots.append(
                _grow(X[idx], y[idx], 0, hp["max_depth"], hp["min_leaf"], sub, rng)
            )
        return self

    def refit(self, X, y, rng, sample_weight=None):
        return self.fit(X, y, rng)

    def _proba(self, X):
        p1 = np.array(
            [np.mean([_predict_node(r, x) for r in self.roots]) for x in X]
        )
        return np.column_stack([1.0 - p1, p1])

    def _params_dict(self):
        return {"trees": [r.to_dict() for r in self.roots]}

    def _load_params(self, d):
        self.roots = [_Node.from_dict(t) for t in d["trees"]]


def _grow_regression(X, r, depth, max_depth, min_leaf):
    """Variance-reduction regression tree used as a boosting base learner."""
    if depth >= max_depth or len(r) < 2 * min_leaf or np.all(r == r[0]):
        return _Node(value=float(r.mean()))
    n = len(r)
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs, rs = X[order, f], r[order]
        csum = np.cumsum(rs)
        csq = np.cumsum(rs * rs)
        for i in range(min_leaf - 1, n - min_leaf):
            if xs[i] == xs[i + 1]:
                continue
            nl = i + 1
            nr = n - nl
            sse_l = csq[i] - csum[i] ** 2 / nl
            sse_r = (csq[-1] - csq[i]) - (csum[-1] - csum[i]) ** 2 / nr
            score = sse_l + sse_r
            if best is None or score < best[0] - 1e-12:
                best = (score, f, 0.5 * (xs[i] + xs[i + 1]))
    if best is None:
        return _Node(value=float(r.mean()))
    _, f, thr = best
    mask = X[:, f] <= thr
    return _Node(
        feature=int(f),
        threshold=float(thr),
        left=_grow_regression(X[mask], r[mask], depth + 1, max_depth, min_leaf),
        right=_grow_regression(X[~mask], r[~mask], depth + 1, max_depth, min_leaf),
    )


def _leaf_newton_values(node, X, r, hess, indices):
    """Replace leaf means with Newton steps sum(r)/sum(hess) per leaf region."""
    if node.is_leaf():
        h = hess[indices].sum()
        g = r[indices].sum()
        node.value = float(np.clip(g / h, -4.0, 4.0)) if h > 1e-12 else 0.0
        return
    mask = X[indices, node.feature] <= node.threshold
    _leaf_newton_values(node.left, X, r, hess, indices[mask])
    _leaf_newton_values(node.right, X, r, hess, indices[~mask])


class GradBoost(Model):
    """Stagewise logistic boosting on shallow regression trees."""

    kind = "grad_boost"
    differentiable = False

    DEFAULTS = {"n_stages": 30, "max_depth": 2, "min_leaf": 1, "learning_rate": 0.3}

    def __init__(self, n_features, hyperparams=None):
        super().__init__(n_features, hyperparams)
        self.f0 = 0.0
        self.stages: list[_Node] = []

    def fit(self, X, y, rng, sample_weight=None):
        hp = {**self.DEFAULTS, **self.hyperparams}
        X = np.asarray(X, float)
        y = np.asarray(y, float)
        pbar = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        self.f0 = float(np.log(pbar / (1.0 - pbar)))
        F = np.full(len(y), self.f0)
        self.stages = []
        for _ in range(hp["n_stages"]):
            p = 1.0 / (1.0 + np.exp(-F))
            resid = y - p
            tree = _grow_regression(X, resid, 0, hp["max_depth"], hp["min_leaf"])
            _leaf_newton_values(tree, X, resid, p * (1 - p), np.arange(len(y)))
            self.stages.append(tree)
            F += hp["learning_rate"] * np.array([_predict_node(tree, x) for x in X])
            if not np.all(np.isfinite(F)):
                raise ModelError("grad_boost: non-finite scores during training")
        return self

    def refit(self, X, y, rng, sample_weight=None):
        return self.fit(X, y, rng)

    def _proba(self, X):
        hp = {**self.DEFAULTS, **self.hyperparams}
        F = np.full(X.shape[0], self.f0)
        for tree in self.stages:
            F += hp["learning_rate"] * np.array([_predict_node(tree, x) for x in X])
        p1 = 1.0 / (1.0 + np.exp(-F))
        return np.column_stack([1.0 - p1, p1])

    def _params_dict(self):
        return {"f0": self.f0, "stages": [t.to_dict() for t in self.stages]}

    def _load_params(self, d):
        self.f0 = float(d["f0"])
        self.stages = [_Node.from_dict(t) for t in d["stages"]]
