"""Bagged decision forest whose trees emit raw label-count histograms."""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

LEAF = -1


@dataclass(frozen=True)
class ForestParams:
    num_trees: int = 32
    max_internal_nodes: int = 128
    min_samples_leaf: int = 1
    split_criterion: str = "gini"
    bag_fraction: float = 1.0
    max_features: int | None = None  # None -> ceil(sqrt(d))
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.max_internal_nodes < 1:
            raise ValueError("max_internal_nodes must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.split_criterion != "gini":
            raise ValueError("only the gini criterion is supported")
        if not 0 < self.bag_fraction <= 1:
            raise ValueError("bag_fraction must lie in (0, 1]")


@dataclass
class Tree:
    """Axis-aligned binary tree in flat-array form.

    ``feature[i] == LEAF`` marks a leaf; internal nodes send ``x[feature] <= threshold``
    to ``left``. ``counts[i]`` is the label histogram of the bootstrap rows that
    reached node ``i`` (only leaf histograms are used for prediction).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def n_internal(self) -> int:
        return int(np.sum(self.feature != LEAF))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return node

    def leaf_histograms(self, X: np.ndarray) -> np.ndarray:
        return self.counts[self.apply(X)]


@dataclass
class DecisionForestModel:
    classes: np.ndarray
    n_features: int
    trees: list[Tree] = field(default_factory=list)

    def tree_histograms(self, X) -> np.ndarray:
        """(n_trees, n_rows, n_classes) raw leaf histograms."""
        X = self._check(X)
        return np.stack([t.leaf_histograms(X) for t in self.trees])

    def predict_proba(self, X) -> np.ndarray:
        total = self.tree_histograms(X).sum(axis=0)
        return total / total.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        # argmax takes the first maximum, i.e. the lower label code on ties
        return self.classes[np.argmax(self.predict_proba(X), axis=1)]

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X


def _gini_best_split(x: np.ndarray, y_onehot: np.ndarray, min_leaf: int):
    """Best midpoint threshold on one feature; returns (weighted impurity, threshold) or None."""
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    n = xs.size
    left_counts = np.cumsum(y_onehot[order], axis=0)[:-1]  # rows 0..i go left
    total = left_counts[-1] + y_onehot[order][-1]
    right_counts = total - left_counts
    n_left = np.arange(1, n, dtype=float)
    n_right = n - n_left
    valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    gini_l = 1.0 - np.sum(left_counts**2, axis=1) / n_left**2
    gini_r = 1.0 - np.sum(right_counts**2, axis=1) / n_right**2
    impurity = (n_left * gini_l + n_right * gini_r) / n
    impurity = np.where(valid, impurity, np.inf)
    i = int(np.argmin(impurity))
    return float(impurity[i]), 0.5 * (xs[i] + xs[i + 1])


def grow_tree(
    X: np.ndarray,
    y_idx: np.ndarray,
    n_classes: int,
    rng: np.random.Generator,
    max_internal_nodes: int,
    min_samples_leaf: int = 1,
    max_features: int | None = None,
) -> Tree:
    """Greedy breadth-first growth until purity or the internal-node budget is spent."""
    d = X.shape[1]
    m = max_features or max(1, math.ceil(math.sqrt(d)))
    onehot = np.eye(n_classes)[y_idx]

    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(rows: np.ndarray) -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        counts.append(onehot[rows].sum(axis=0))
        return len(feature) - 1

    queue = deque([(new_node(np.arange(X.shape[0])), np.arange(X.shape[0]))])
    n_internal = 0
    while queue and n_internal < max_internal_nodes:
        node, rows = queue.popleft()
        node_counts = counts[node]
        if np.count_nonzero(node_counts) <= 1 or rows.size < 2 * min_samples_leaf:
            continue
        best = None
        # sample m features; keep drawing past m only while no valid split exists
        for n_tried, j in enumerate(rng.permutation(d)):
            if n_tried >= m and best is not None:
                break
            found = _gini_best_split(X[rows, j], onehot[rows], min_samples_leaf)
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], int(j), found[1])
        if best is None:
            continue
        _, j, thr = best
        mask = X[rows, j] <= thr
        feature[node] = j
        threshold[node] = thr
        lrows, rrows = rows[mask], rows[~mask]
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        n_internal += 1
        queue.append((left[node], lrows))
        queue.append((right[node], rrows))

    return Tree(
        np.array(feature, dtype=np.intp),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(counts, dtype=float).reshape(len(counts), n_classes),
    )


def _tree_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(int(seed)).spawn(n)


def _train_one(args) -> Tree:
    X, y_idx, n_classes, seed_seq, params = args
    rng = np.random.default_rng(seed_seq)
    n = X.shape[0]
    n_draw = max(1, int(round(params.bag_fraction * n)))
    sample = rng.integers(0, n, size=n_draw)
    return grow_tree(
        X[sample],
        y_idx[sample],
        n_classes,
        rng,
        params.max_internal_nodes,
        params.min_samples_leaf,
        params.max_features,
    )


def train_forest(X, y, params: ForestParams = ForestParams(), jobs: int = 1) -> DecisionForestModel:
    """Each tree is grown on its own bootstrap resample drawn from a per-tree seed."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training matrix is empty")
    if y.shape[0] != X.shape[0]:
        raise ValueError("X and y lengths differ")
    classes, y_idx = np.unique(y, return_inverse=True)
    tasks = [(X, y_idx, classes.size, s, params) for s in _tree_seeds(params.seed, params.num_trees)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trees = list(pool.map(_train_one, tasks))
    else:
        trees = [_train_one(t) for t in tasks]
    return DecisionForestModel(classes, X.shape[1], trees)


def predict_forest(model: DecisionForestModel, x) -> np.ndarray:
    """Per-label probabilities (summed leaf histograms, normalized) for one or more rows."""
    proba = model.predict_proba(x)
    return proba[0] if np.ndim(x) == 1 else proba
