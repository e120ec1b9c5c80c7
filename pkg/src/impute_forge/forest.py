"""Random forest of Gini CART trees, written against numpy only.

Trees are grown on bootstrap resamples with a random subset of candidate
features at each node. Every tree owns a generator derived from the forest
seed and its index, so training in parallel gives the same forest as
training sequentially.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DimensionMismatch, SingleClassTraining

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray     # split feature per node, LEAF for leaves
    threshold: np.ndarray   # go left when x <= threshold
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray      # (n_nodes, n_classes) training class counts

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaf_votes(self) -> np.ndarray:
        # ties go to the higher class index
        c = self.counts
        return c.shape[1] - 1 - np.argmax(c[:, ::-1], axis=1)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active[idx] = self.feature[node[idx]] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_votes()[self.apply(X)]

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())


def _best_split(x: np.ndarray, y_onehot: np.ndarray, min_leaf: int):
    """Best Gini split on one feature: (weighted impurity, threshold) or None."""
    n = len(x)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ok = xs[:-1] < xs[1:]
    if min_leaf > 1:
        n_left = np.arange(1, n)
        ok &= (n_left >= min_leaf) & (n - n_left >= min_leaf)
    if not ok.any():
        return None
    cand = np.flatnonzero(ok)
    left = np.cumsum(y_onehot[order], axis=0)[cand]
    right = y_onehot.sum(axis=0) - left
    n_left = (cand + 1).astype(np.float64)
    # n * weighted Gini = n - sum(l^2)/n_l - sum(r^2)/n_r
    purity = (left * left).sum(axis=1) / n_left + (right * right).sum(axis=1) / (n - n_left)
    i = int(np.argmax(purity))
    c = cand[i]
    return float((n - purity[i]) / n), float((xs[c] + xs[c + 1]) / 2.0)


def _binary_splits(Xb: np.ndarray, y_onehot: np.ndarray, min_leaf: int):
    """Gini of the 0/1 split of every column of ``Xb``; NaN where no valid split."""
    n = len(Xb)
    n_right = Xb.sum(axis=0)
    right = Xb.T @ y_onehot
    left = y_onehot.sum(axis=0) - right
    ok = np.minimum(n_right, n - n_right) >= max(min_leaf, 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        purity = (left * left).sum(axis=1) / (n - n_right) + (right * right).sum(axis=1) / n_right
    return np.where(ok, (n - purity) / n, np.nan)


def _scan(X, idx, onehot, feats, binary, min_leaf) -> list:
    """(impurity, threshold, feature) for each feature in ``feats`` that splits, in order."""
    out = {}
    fb = [f for f in feats if binary[f]]
    if fb:
        imp = _binary_splits(X[np.ix_(idx, fb)], onehot, min_leaf)
        for f, v in zip(fb, imp):
            if not np.isnan(v):
                out[f] = (float(v), 0.5, int(f))
    for f in feats:
        if not binary[f]:
            found = _best_split(X[idx, f], onehot, min_leaf)
            if found is not None:
                out[f] = (found[0], found[1], int(f))
    return [out[f] for f in feats if f in out]


def grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, max_features: int,
              rng: np.random.Generator, max_depth: int | None = None, min_samples_leaf: int = 1) -> Tree:
    """Grow one CART tree on ``(X, y)``; ``y`` holds class indices."""
    n_features = X.shape[1]
    onehot = np.eye(n_classes)[y]
    binary = np.all((X == 0) | (X == 1), axis=0)
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        counts.append(onehot[idx].sum(axis=0))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        node_counts = counts[node]
        if (np.count_nonzero(node_counts) <= 1 or len(idx) < 2 * min_samples_leaf
                or (max_depth is not None and depth >= max_depth)):
            continue
        order = rng.permutation(n_features)
        node_onehot = onehot[idx]
        found = _scan(X, idx, node_onehot, order[:max_features], binary, min_samples_leaf)
        best = None
        for cand in found:
            if best is None or cand[0] < best[0]:
                best = cand
        if best is None:
            # nothing splittable among the drawn features: take the next one that is
            rest = _scan(X, idx, node_onehot, order[max_features:], binary, min_samples_leaf)
            best = rest[0] if rest else None
        if best is None:
            continue
        _, thr, f = best
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(counts))


class SeedDerivation(str, Enum):
    OFFSET = "offset"        # tree i uses seed + i
    SEQUENCE = "sequence"    # tree i uses SeedSequence([seed, i, 1])


def _tree_rng(seed: int, index: int, derivation: SeedDerivation) -> np.random.Generator:
    if derivation is SeedDerivation.OFFSET:
        return np.random.default_rng(seed + index)
    return np.random.default_rng([seed, index, 1])


def _fit_one(X, y, n_classes, max_features, max_depth, min_samples_leaf, bootstrap, seed, index, derivation):
    rng = _tree_rng(seed, index, derivation)
    n = len(y)
    rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
    return grow_tree(X[rows], y[rows], n_classes, max_features, rng, max_depth, min_samples_leaf)


class RandomForest(BaseEstimator, ClassifierMixin):
    """Bagged Gini decision trees.

    Parameters
    ----------
    n_estimators : int, default=100
    max_depth : int or None, default=None
        None grows trees until leaves are pure or cannot be split.
    max_features : "sqrt", int or float, default="sqrt"
        Candidate features per node; "sqrt" means floor(sqrt(n_features)).
    min_samples_leaf : int, default=1
    bootstrap : bool, default=True
    random_state : int, default=0
    seed_derivation : {"offset", "sequence"}, default="offset"
        How per-tree generators are derived from ``random_state``.
    n_jobs : int, default=1
    """

    def __init__(self, n_estimators=100, max_depth=None, max_features="sqrt", min_samples_leaf=1,
                 bootstrap=True, random_state=0, seed_derivation="offset", n_jobs=1):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.random_state = random_state
        self.seed_derivation = seed_derivation
        self.n_jobs = n_jobs

    def _n_candidates(self, d: int) -> int:
        mf = self.max_features
        if mf == "sqrt":
            return max(1, int(math.floor(math.sqrt(d))))
        if mf is None:
            return d
        if isinstance(mf, float):
            return max(1, int(mf * d))
        return max(1, min(int(mf), d))

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise SingleClassTraining(f"training labels contain a single class: {self.classes_.tolist()}")
        self.n_features_in_ = X.shape[1]
        derivation = SeedDerivation(self.seed_derivation)
        args = (X, y_idx, len(self.classes_), self._n_candidates(X.shape[1]), self.max_depth,
                self.min_samples_leaf, self.bootstrap, int(self.random_state))
        if self.n_jobs == 1:
            self.estimators_ = [_fit_one(*args, i, derivation) for i in range(self.n_estimators)]
        else:
            self.estimators_ = Parallel(n_jobs=self.n_jobs)(
                delayed(_fit_one)(*args, i, derivation) for i in range(self.n_estimators))
        return self

    def _check(self, X):
        check_is_fitted(self, "estimators_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(f"X has {X.shape[1]} features, model was trained on {self.n_features_in_}")
        return X

    def tree_votes(self, X) -> np.ndarray:
        """(n_estimators, n_samples) class-index vote of every tree."""
        X = self._check(X)
        return np.array([t.predict(X) for t in self.estimators_])

    def predict_proba(self, X) -> np.ndarray:
        """Fraction of trees voting for each class."""
        votes = self.tree_votes(X)
        k = len(self.classes_)
        return np.stack([(votes == c).mean(axis=0) for c in range(k)], axis=1)

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        if len(self.classes_) == 2:
            # positive (second) class wins ties at 0.5
            return self.classes_[(proba[:, 1] >= 0.5).astype(int)]
        return self.classes_[np.argmax(proba, axis=1)]


class ForestMode(str, Enum):
    RANDOM_FOREST = "RandomForest"
    GRADIENT_STUB = "GradientStub"


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    features_per_split: str | int = "sqrt"
    min_samples_leaf: int = 1
    bootstrap: bool = True
    seed: int = 0
    mode: ForestMode = ForestMode.RANDOM_FOREST
    n_jobs: int = 1

    def __post_init__(self):
        self.mode = ForestMode(self.mode)
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")

    def build(self) -> RandomForest:
        stub = self.mode is ForestMode.GRADIENT_STUB
        depth = self.max_depth if self.max_depth is not None or not stub else 6
        return RandomForest(
            n_estimators=self.n_trees,
            max_depth=depth,
            max_features=self.features_per_split,
            min_samples_leaf=self.min_samples_leaf,
            bootstrap=self.bootstrap,
            random_state=self.seed,
            seed_derivation="sequence" if stub else "offset",
            n_jobs=self.n_jobs,
        )


def train_forest(X, y, cfg: ForestConfig | None = None) -> RandomForest:
    return (cfg or ForestConfig()).build().fit(X, y)


def predict_proba(model: RandomForest, X) -> np.ndarray:
    """Positive-class probability: the share of trees voting the second class."""
    return model.predict_proba(X)[:, -1]
