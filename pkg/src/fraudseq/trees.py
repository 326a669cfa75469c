"""Single-machine gradient-boosted regression trees on static features.

The fitted ensemble serves two purposes downstream: a scalar boosted
score, and a structured one-hot embedding of which leaf each tree
routes an instance to. Splits are exact greedy over sorted unique
feature values with thresholds at midpoints; leaf values are Newton
steps for the binary logistic loss, damped by shrinkage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError, NumericError

__all__ = [
    "DecisionTree",
    "TreeEnsemble",
    "LeafEmbedding",
    "fit_gbdt",
    "gbdt_score",
    "leaf_embedding",
]


@dataclass
class DecisionTree:
    """Array-encoded binary tree. feature[i] == -1 marks a leaf; routing
    sends x left when x[feature] <= threshold. Leaf indices are dense
    0..num_leaves-1 in construction order."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    leaf_index: np.ndarray
    num_leaves: int

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            go_left = X[idx, feat[idx]] <= self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
        return self.leaf_index[node]

    def leaf_values(self) -> np.ndarray:
        """Value per leaf index, shape (num_leaves,)."""
        out = np.empty(self.num_leaves)
        leaves = self.feature < 0
        out[self.leaf_index[leaves]] = self.value[leaves]
        return out


@dataclass
class TreeEnsemble:
    trees: list[DecisionTree] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)
    base_score: float = 0.0
    n_features: int = 0

    @property
    def total_leaves(self) -> int:
        return sum(t.num_leaves for t in self.trees)

    def leaf_dims(self) -> list[int]:
        return [t.num_leaves for t in self.trees]

    def _check_width(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionError(
                f"feature width {X.shape[1]} != training width {self.n_features}")
        return X

    def score_batch(self, X: np.ndarray) -> np.ndarray:
        X = self._check_width(X)
        out = np.full(X.shape[0], self.base_score)
        for tree, w in zip(self.trees, self.weights):
            out += w * tree.leaf_values()[tree.apply(X)]
        return out

    def leaf_indices_batch(self, X: np.ndarray) -> np.ndarray:
        """(B, n_trees) leaf index per tree per row."""
        X = self._check_width(X)
        if not self.trees:
            return np.zeros((X.shape[0], 0), dtype=np.int64)
        return np.column_stack([t.apply(X) for t in self.trees])

    def embedding_offsets(self) -> np.ndarray:
        """Start column of each tree's one-hot segment in the
        concatenated embedding."""
        return np.concatenate([[0], np.cumsum(self.leaf_dims())[:-1]]).astype(np.int64) \
            if self.trees else np.zeros(0, dtype=np.int64)

    def embed_batch(self, X: np.ndarray) -> np.ndarray:
        """Dense concatenated one-hot embedding, (B, total_leaves)."""
        idx = self.leaf_indices_batch(X)
        out = np.zeros((idx.shape[0], self.total_leaves))
        cols = idx + self.embedding_offsets()[None, :]
        out[np.arange(idx.shape[0])[:, None], cols] = 1.0
        return out

    # -- text serialization (format v1, documented in the README) ---------

    def save_text(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("fraudseq-trees v1\n")
            fh.write(f"n_features {self.n_features} base_score {self.base_score:.17g} "
                     f"n_trees {len(self.trees)}\n")
            for ti, (tree, w) in enumerate(zip(self.trees, self.weights)):
                fh.write(f"tree {ti} weight {w:.17g} nodes {tree.feature.size} "
                         f"leaves {tree.num_leaves}\n")
                for j in range(tree.feature.size):
                    if tree.feature[j] >= 0:
                        fh.write(f"split {j} {tree.feature[j]} {tree.threshold[j]:.17g} "
                                 f"{tree.left[j]} {tree.right[j]}\n")
                    else:
                        fh.write(f"leaf {j} {tree.leaf_index[j]} {tree.value[j]:.17g}\n")

    @classmethod
    def load_text(cls, path) -> "TreeEnsemble":
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "fraudseq-trees v1":
                raise ValueError(f"unrecognized ensemble header {header!r}")
            meta = fh.readline().split()
            ens = cls(n_features=int(meta[1]), base_score=float(meta[3]))
            n_trees = int(meta[5])
            for _ in range(n_trees):
                th = fh.readline().split()
                weight, n_nodes, n_leaves = float(th[3]), int(th[5]), int(th[7])
                feature = np.full(n_nodes, -1, dtype=np.int64)
                threshold = np.zeros(n_nodes)
                left = np.full(n_nodes, -1, dtype=np.int64)
                right = np.full(n_nodes, -1, dtype=np.int64)
                value = np.zeros(n_nodes)
                leaf_index = np.full(n_nodes, -1, dtype=np.int64)
                for _ in range(n_nodes):
                    parts = fh.readline().split()
                    j = int(parts[1])
                    if parts[0] == "split":
                        feature[j] = int(parts[2])
                        threshold[j] = float(parts[3])
                        left[j] = int(parts[4])
                        right[j] = int(parts[5])
                    else:
                        leaf_index[j] = int(parts[2])
                        value[j] = float(parts[3])
                ens.trees.append(DecisionTree(feature, threshold, left, right,
                                              value, leaf_index, n_leaves))
                ens.weights.append(weight)
        return ens


@dataclass
class LeafEmbedding:
    """Per-tree one-hot segments; exactly one 1 per segment."""
    segments: list[np.ndarray]

    def concat(self) -> np.ndarray:
        return np.concatenate(self.segments) if self.segments else np.zeros(0)


def _best_split(X: np.ndarray, orders: np.ndarray, g: np.ndarray, h: np.ndarray,
                lam: float):
    """Exhaustive split search over every feature at once.

    ``orders`` is (F, n_node): row f holds the node's instance indices
    sorted by feature f. Candidates are boundaries between adjacent
    distinct values; returns (gain, feature, threshold) or None."""
    F, n = orders.shape
    if n < 2:
        return None
    cols = np.arange(F)[:, None]
    xs = X[orders, cols]
    valid = xs[:, :-1] < xs[:, 1:]
    if not valid.any():
        return None
    cg = np.cumsum(g[orders], axis=1)
    ch = np.cumsum(h[orders], axis=1)
    G, H = cg[0, -1], ch[0, -1]
    GL, HL = cg[:, :-1], ch[:, :-1]
    gain = 0.5 * (GL * GL / (HL + lam) + (G - GL) ** 2 / (H - HL + lam)
                  - G * G / (H + lam))
    gain[~valid] = -np.inf
    flat = int(np.argmax(gain))
    feat, pos = divmod(flat, n - 1)
    thr = 0.5 * (xs[feat, pos] + xs[feat, pos + 1])
    return float(gain[feat, pos]), int(feat), thr


def _build_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, max_depth: int,
                lam: float, root_orders: np.ndarray,
                min_gain: float = 1e-12) -> DecisionTree:
    feature, threshold, left, right, value, leaf_index = [], [], [], [], [], []
    leaf_count = 0

    def new_node():
        feature.append(-1); threshold.append(0.0); left.append(-1)
        right.append(-1); value.append(0.0); leaf_index.append(-1)
        return len(feature) - 1

    def grow(orders: np.ndarray, depth: int) -> int:
        nonlocal leaf_count
        node = new_node()
        best = _best_split(X, orders, g, h, lam) if depth < max_depth else None
        if best is None or best[0] <= min_gain:
            idx = orders[0]
            value[node] = -g[idx].sum() / (h[idx].sum() + lam)
            leaf_index[node] = leaf_count
            leaf_count += 1
            return node
        _, f, thr = best
        feature[node] = f
        threshold[node] = thr
        # stable partition of every feature's sorted order
        go_left = X[:, f] <= thr
        m = go_left[orders]
        n_left = int(m[0].sum())
        left[node] = grow(orders[m].reshape(orders.shape[0], n_left), depth + 1)
        right[node] = grow(orders[~m].reshape(orders.shape[0], orders.shape[1] - n_left),
                           depth + 1)
        return node

    grow(root_orders, 0)
    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value),
        leaf_index=np.asarray(leaf_index, dtype=np.int64),
        num_leaves=leaf_count,
    )


def _logloss(margins: np.ndarray, y: np.ndarray) -> float:
    # -mean(y log p + (1-y) log(1-p)) with p = sigmoid(margin), stable form
    sgn = 2.0 * y - 1.0
    return float(np.mean(np.logaddexp(0.0, -sgn * margins)))


def fit_gbdt(X: np.ndarray, y: np.ndarray, n_trees: int = 100, max_depth: int = 5,
             shrinkage: float = 0.1, lam: float = 1.0) -> TreeEnsemble:
    """Greedy boosting with binary logistic loss. Training loss must be
    nonincreasing round over round; a violation raises NumericError.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"X must be a nonempty (n, d) matrix, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise DimensionError(f"{X.shape[0]} rows of X vs {y.shape[0]} labels")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    pos = float(y.mean())
    if pos <= 0.0 or pos >= 1.0:
        raise DataError("labels are single-class; boosting target is degenerate")

    ens = TreeEnsemble(base_score=math.log(pos / (1.0 - pos)), n_features=X.shape[1])
    margins = np.full(X.shape[0], ens.base_score)
    prev_loss = _logloss(margins, y)
    root_orders = np.argsort(X, axis=0, kind="stable").T.copy()
    for round_ in range(n_trees):
        p = 1.0 / (1.0 + np.exp(-margins))
        grad = p - y
        hess = p * (1.0 - p)
        tree = _build_tree(X, grad, hess, max_depth, lam, root_orders)
        ens.trees.append(tree)
        ens.weights.append(shrinkage)
        margins += shrinkage * tree.leaf_values()[tree.apply(X)]
        loss = _logloss(margins, y)
        if loss > prev_loss + 1e-12:
            raise NumericError(
                f"training loss increased at round {round_}: {prev_loss} -> {loss}")
        prev_loss = loss
    return ens


def gbdt_score(e: TreeEnsemble, x: np.ndarray) -> float:
    """Weighted sum of per-tree leaf values plus the base score."""
    return float(e.score_batch(np.asarray(x, dtype=np.float64)[None, :])[0])


def leaf_embedding(e: TreeEnsemble, x: np.ndarray) -> LeafEmbedding:
    """Structured one-hot encoding of the leaves x reaches."""
    idx = e.leaf_indices_batch(np.asarray(x, dtype=np.float64)[None, :])[0]
    segments = []
    for tree, li in zip(e.trees, idx):
        seg = np.zeros(tree.num_leaves)
        seg[li] = 1.0
        segments.append(seg)
    return LeafEmbedding(segments=segments)
