"""Bagged regression trees with variance-reduction splits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class Node:
    value: float
    n_samples: int
    feature: int = -1
    threshold: float = 0.0
    left: Optional["Node"] = None
    right: Optional["Node"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": float(self.value), "n": int(self.n_samples)}
        return {"value": float(self.value), "n": int(self.n_samples), "feature": int(self.feature),
                "threshold": float(self.threshold), "left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Node":
        node = cls(value=float(d["value"]), n_samples=int(d["n"]))
        if "left" in d:
            node.feature = int(d["feature"])
            node.threshold = float(d["threshold"])
            node.left = cls.from_dict(d["left"])
            node.right = cls.from_dict(d["right"])
        return node


def _best_split(Xn, yn, features, max_features, min_leaf):
    """Scan features in the given order until ``max_features`` non-constant ones were tried."""
    n = len(yn)
    total = yn.sum()
    best = None  # (score, feature, threshold)
    tried = 0
    for f in features:
        if tried >= max_features:
            break
        col = Xn[:, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        if xs[0] == xs[-1]:
            continue
        tried += 1
        ys = yn[order]
        csum = np.cumsum(ys)[:-1]
        i = np.arange(1, n)
        ok = (xs[1:] > xs[:-1]) & (i >= min_leaf) & (n - i >= min_leaf)
        if not ok.any():
            continue
        # maximizing this proxy minimizes the children's summed squared error
        score = csum ** 2 / i + (total - csum) ** 2 / (n - i)
        score = np.where(ok, score, -np.inf)
        pos = int(np.argmax(score))
        if best is None or score[pos] > best[0]:
            lo, hi = xs[pos], xs[pos + 1]
            thr = 0.5 * (lo + hi)
            if not lo <= thr < hi:
                thr = lo
            best = (score[pos], f, float(thr))
    return best


class RegressionTree:
    def __init__(self, max_depth: Optional[int] = None, max_features: Optional[int] = None, min_leaf: int = 1):
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_leaf = min_leaf
        self.root: Optional[Node] = None

    def fit(self, X, y, rng: Optional[np.random.Generator] = None) -> "RegressionTree":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        rng = rng if rng is not None else np.random.default_rng(0)
        d = X.shape[1]
        mf = d if self.max_features is None else min(self.max_features, d)
        self.root = Node(float(y.mean()), len(y))
        stack = [(self.root, np.arange(len(y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            yn = y[idx]
            if (len(idx) < 2 * self.min_leaf or np.all(yn == yn[0])
                    or (self.max_depth is not None and depth >= self.max_depth)):
                continue
            split = _best_split(X[idx], yn, rng.permutation(d), mf, self.min_leaf)
            if split is None:
                continue
            _, f, thr = split
            go_left = X[idx, f] <= thr
            li, ri = idx[go_left], idx[~go_left]
            node.feature, node.threshold = f, thr
            node.left = Node(float(y[li].mean()), len(li))
            node.right = Node(float(y[ri].mean()), len(ri))
            stack.append((node.right, ri, depth + 1))
            stack.append((node.left, li, depth + 1))
        return self

    def predict_one(self, x) -> float:
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.value

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.array([self.predict_one(row) for row in X])

    def depth(self) -> int:
        def walk(n):
            return 0 if n.is_leaf else 1 + max(walk(n.left), walk(n.right))
        return walk(self.root)

    def leaves(self):
        out, stack = [], [self.root]
        while stack:
            n = stack.pop()
            if n.is_leaf:
                out.append(n)
            else:
                stack.extend((n.right, n.left))
        return out


@dataclass
class RfModel:
    trees: list
    n_estimators: int
    max_depth: Optional[int]
    seed: int
    max_features: Optional[int] = None
    min_leaf: int = 1
    bootstrap: bool = True


def default_max_features(n_features: int) -> int:
    return max(1, math.ceil(n_features / 3))


def rf_fit(features, labels, n_estimators: int = 100, max_depth: Optional[int] = None, seed: int = 0,
           max_features: Optional[int] = -1, min_leaf: int = 1, bootstrap: bool = True) -> RfModel:
    """Fit ``n_estimators`` trees, each on its own bootstrap resample.

    ``max_features=-1`` means ceil(d / 3); ``None`` means all features.
    Tree ``t`` draws from the ``t``-th child of ``SeedSequence(seed)``, so a
    forest depends only on its seed, not on fitting order.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n = len(y)
    if n < 2:
        raise ValueError("random forest needs at least 2 samples")
    if max_features == -1:
        max_features = default_max_features(X.shape[1])
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_estimators):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
        tree = RegressionTree(max_depth, max_features, min_leaf).fit(X[idx], y[idx], rng)
        trees.append(tree)
    return RfModel(trees, n_estimators, max_depth, seed, max_features, min_leaf, bootstrap)


def rf_predict(model: RfModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return float(np.mean([t.predict_one(x) for t in model.trees]))
    return np.mean([t.predict(x) for t in model.trees], axis=0)
