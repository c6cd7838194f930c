"""CART trees shared by the decision-tree, random-forest and boosted models.

Classification trees split on Gini impurity and keep per-class sample counts
at the leaves; regression trees split on squared-error reduction and keep
leaf means. Split search is vectorized across candidate features; ties are
broken toward the lowest feature index, then the lowest threshold, so tree
construction is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_GAIN = 1e-12
LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray  # (n_nodes,) int32, LEAF for leaves
    threshold: np.ndarray  # (n_nodes,) float64
    left: np.ndarray  # (n_nodes,) int32
    right: np.ndarray  # (n_nodes,) int32
    value: np.ndarray  # (n_nodes, C) class counts, or (n_nodes, 1) means

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index per row."""
        out = np.empty(len(X), dtype=np.int64)

        def walk(node: int, idx: np.ndarray) -> None:
            if self.feature[node] == LEAF:
                out[idx] = node
                return
            go_left = X[idx, self.feature[node]] <= self.threshold[node]
            walk(self.left[node], idx[go_left])
            walk(self.right[node], idx[~go_left])

        walk(0, np.arange(len(X)))
        return out

    def leaf_values(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


def _best_split_classification(Xs, counts_cum, n):
    """Best (gain, boundary, column) for presorted class count prefixes."""
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    nr = n - nl
    left = counts_cum[:-1]  # (n-1, d, C)
    right = counts_cum[-1] - left
    gini_left = 1.0 - ((left / nl[..., None]) ** 2).sum(axis=2)
    gini_right = 1.0 - ((right / nr[..., None]) ** 2).sum(axis=2)
    total = counts_cum[-1, 0]
    parent = 1.0 - ((total / n) ** 2).sum()
    weighted = (nl * gini_left + nr * gini_right) / n
    gain = parent - weighted
    gain[Xs[1:] <= Xs[:-1]] = -np.inf  # no boundary between equal values
    return gain


def _best_split_regression(Xs, y_cum, y2_cum, n):
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    nr = n - nl
    sl, s2l = y_cum[:-1], y2_cum[:-1]
    sr, s2r = y_cum[-1] - sl, y2_cum[-1] - s2l
    sse_left = s2l - sl**2 / nl
    sse_right = s2r - sr**2 / nr
    sse_parent = y2_cum[-1, 0] - y_cum[-1, 0] ** 2 / n
    gain = sse_parent - sse_left - sse_right
    gain[Xs[1:] <= Xs[:-1]] = -np.inf
    return gain


def _find_split(X, target, task, n_classes, feats):
    """Return (feature, threshold) or None. feats is sorted ascending."""
    n = len(X)
    if n < 2:
        return None
    Xf = X[:, feats]
    order = np.argsort(Xf, axis=0, kind="stable")
    Xs = np.take_along_axis(Xf, order, axis=0)
    if task == "classification":
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), target] = 1.0
        counts_cum = np.cumsum(onehot[order], axis=0)
        gain = _best_split_classification(Xs, counts_cum, n)
    else:
        ys = target[order]
        gain = _best_split_regression(Xs, np.cumsum(ys, axis=0), np.cumsum(ys**2, axis=0), n)
    best_per_col = gain.argmax(axis=0)  # first max -> lowest threshold
    col_gain = gain[best_per_col, np.arange(gain.shape[1])]
    col = int(col_gain.argmax())  # first max -> lowest feature index
    if not col_gain[col] > MIN_GAIN:
        return None
    b = int(best_per_col[col])
    threshold = (Xs[b, col] + Xs[b + 1, col]) / 2.0
    return int(feats[col]), float(threshold)


def grow_tree(
    X: np.ndarray,
    target: np.ndarray,
    task: str = "classification",
    n_classes: int = 0,
    max_depth: int | None = None,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Grow a CART tree. max_features samples that many candidate features
    per split (random forest style); requires rng when set."""
    n, d = X.shape
    feature, threshold, left, right, value = [], [], [], [], []

    def leaf_value(idx):
        if task == "classification":
            return np.bincount(target[idx], minlength=n_classes).astype(np.float64)
        return np.array([target[idx].mean()])

    def add_node(idx, depth):
        node = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(leaf_value(idx))
        if max_depth is not None and depth >= max_depth:
            return node
        if task == "classification" and len(np.unique(target[idx])) <= 1:
            return node
        if max_features is not None and max_features < d:
            feats = np.sort(rng.permutation(d)[:max_features])
        else:
            feats = np.arange(d)
        split = _find_split(X[idx], target[idx], task, n_classes, feats)
        if split is None:
            return node
        f, thr = split
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = add_node(idx[go_left], depth + 1)
        right[node] = add_node(idx[~go_left], depth + 1)
        return node

    add_node(np.arange(n), 0)
    return Tree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.stack(value),
    )


def tree_to_arrays(t: Tree) -> dict[str, np.ndarray]:
    return {
        "feature": t.feature.astype(np.float64),
        "threshold": t.threshold,
        "left": t.left.astype(np.float64),
        "right": t.right.astype(np.float64),
        "value": t.value,
    }


def tree_from_arrays(arrs: dict[str, np.ndarray]) -> Tree:
    return Tree(
        feature=np.asarray(arrs["feature"], dtype=np.float64).astype(np.int32),
        threshold=np.asarray(arrs["threshold"], dtype=np.float64),
        left=np.asarray(arrs["left"], dtype=np.float64).astype(np.int32),
        right=np.asarray(arrs["right"], dtype=np.float64).astype(np.int32),
        value=np.asarray(arrs["value"], dtype=np.float64),
    )
