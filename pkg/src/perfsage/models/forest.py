"""Random-forest regression: bootstrap CART trees with variance-reduction splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Tree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return self.value[node]
            rows = np.nonzero(inner)[0]
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


def _best_split(X, y):
    """Return (feature, threshold, sse) of the split minimizing child SSE, or None."""
    n = len(y)
    best = None
    best_sse = np.inf
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        # candidate cut after position i where the value changes
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        nl = np.arange(1, n)
        sl, ql = csum[:-1], csq[:-1]
        sr, qr = csum[-1] - sl, csq[-1] - ql
        sse = (ql - sl * sl / nl) + (qr - sr * sr / (n - nl))
        sse = np.where(valid, sse, np.inf)
        i = int(np.argmin(sse))
        if sse[i] < best_sse:
            best_sse = sse[i]
            best = (f, 0.5 * (xs[i] + xs[i + 1]))
    return best


def fit_tree(X, y, max_depth: int = 12, min_samples_split: int = 2) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(idx, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        ys = y[idx]
        value.append(float(ys.mean()))
        if depth >= max_depth or len(idx) < min_samples_split or np.ptp(ys) == 0.0:
            return node
        split = _best_split(X[idx], ys)
        if split is None:
            return node
        f, thr = split
        mask = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
    )


def fit_forest(X, y, n_trees: int = 100, max_depth: int = 12, seed: int = 0) -> list[Tree]:
    rng = np.random.default_rng(seed)
    n = len(y)
    trees = []
    for _ in range(n_trees):
        idx = rng.integers(n, size=n)
        trees.append(fit_tree(X[idx], y[idx], max_depth=max_depth))
    return trees


def predict_forest(trees, X) -> np.ndarray:
    return np.mean([t.predict(X) for t in trees], axis=0)
