"""Greedy axis-parallel decision tree (CART) baseline.

Splits minimize weighted Gini impurity over an exhaustive scan of all
features and all midpoints between consecutive distinct values, then the
grown tree is reduced by weakest-link cost-complexity pruning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset


@dataclass
class CartParams:
    max_depth: int = 3
    min_leaf_fraction: float = 0.05
    alpha: float = 0.0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.min_leaf_fraction < 0.5:
            raise ValueError("min_leaf_fraction must be in (0, 0.5)")
        if self.alpha < 0.0:
            raise ValueError("alpha must be non-negative")


@dataclass
class AxisNode:
    """One tree node; internal iff ``left`` is set.

    ``counts`` is (#y=-1, #y=+1) of the training rows routed here.
    """

    counts: tuple[int, int]
    feature: int | None = None
    threshold: float | None = None
    left: "AxisNode | None" = None
    right: "AxisNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def n(self) -> int:
        return self.counts[0] + self.counts[1]

    @property
    def label(self) -> int:
        """Majority label, ties toward +1."""
        return 1 if self.counts[1] >= self.counts[0] else -1


@dataclass
class AxisTree:
    root: AxisNode
    params: CartParams
    n_train: int

    def leaves(self) -> list[AxisNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend([node.right, node.left])
        return out


def _gini(counts: tuple[int, int]) -> float:
    n = counts[0] + counts[1]
    if n == 0:
        return 0.0
    q = counts[1] / n
    return 2.0 * q * (1.0 - q)


def _counts(labels: np.ndarray) -> tuple[int, int]:
    pos = int(np.sum(labels == 1))
    return (len(labels) - pos, pos)


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Exhaustive (feature, midpoint threshold) scan minimizing weighted Gini.

    Ties go to the lower feature index, then the lower threshold; both fall
    out of the strict < comparison and the scan order.
    """
    n, p = X.shape
    best = None  # (weighted_gini, feature, threshold)
    for j in range(p):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        ys = y[order]
        pos_prefix = np.cumsum(ys == 1)
        for k in range(n - 1):
            if xs[k] == xs[k + 1]:
                continue
            left_n = k + 1
            right_n = n - left_n
            if left_n < min_leaf or right_n < min_leaf:
                continue
            lp = int(pos_prefix[k])
            rp = int(pos_prefix[-1]) - lp
            w = left_n * _gini((left_n - lp, lp)) + right_n * _gini(
                (right_n - rp, rp))
            b = 0.5 * (xs[k] + xs[k + 1])
            if best is None or w < best[0] - 1e-12:
                best = (w, j, float(b))
    return best


def _grow(X: np.ndarray, y: np.ndarray, depth: int, params: CartParams,
          min_leaf: int) -> AxisNode:
    node = AxisNode(_counts(y))
    n = len(y)
    if depth >= params.max_depth or node.counts[0] == 0 or node.counts[1] == 0:
        return node
    found = _best_split(X, y, min_leaf)
    # only split on a strict impurity improvement
    if found is None or found[0] >= n * _gini(node.counts) - 1e-12:
        return node
    _, j, b = found
    mask = X[:, j] < b
    node.feature = j
    node.threshold = b
    node.left = _grow(X[mask], y[mask], depth + 1, params, min_leaf)
    node.right = _grow(X[~mask], y[~mask], depth + 1, params, min_leaf)
    return node


def _subtree_stats(node: AxisNode, n_train: int) -> tuple[float, int]:
    """(sum of leaf impurity weights, number of splits) of a subtree."""
    if node.is_leaf:
        return (node.n / n_train) * _gini(node.counts), 0
    li, ls = _subtree_stats(node.left, n_train)
    ri, rs = _subtree_stats(node.right, n_train)
    return li + ri, ls + rs + 1


def _weakest_link(node: AxisNode, n_train: int, path: tuple[int, ...] = ()):
    """Internal node with the smallest impurity-reduction per pruned split.

    Returns (g, preorder path, node); ties break toward the earliest node in
    preorder so pruning is deterministic.
    """
    if node.is_leaf:
        return None
    own = (node.n / n_train) * _gini(node.counts)
    sub_imp, splits = _subtree_stats(node, n_train)
    g = (own - sub_imp) / splits
    best = (g, path, node)
    for branch, child in ((0, node.left), (1, node.right)):
        cand = _weakest_link(child, n_train, path + (branch,))
        if cand is not None and (cand[0] < best[0] - 1e-15
                                 or (abs(cand[0] - best[0]) <= 1e-15
                                     and cand[1] < best[1])):
            best = min(best, cand, key=lambda c: (c[0], c[1]))
    return best


def _prune(root: AxisNode, n_train: int, alpha: float) -> None:
    while not root.is_leaf:
        g, _, node = _weakest_link(root, n_train)
        if g > alpha:
            break
        node.feature = node.threshold = node.left = node.right = None


def cart_train(data: Dataset, params: CartParams | None = None) -> AxisTree:
    """Grow greedily, then apply weakest-link pruning at ``params.alpha``.

    A single-class sample yields a single-leaf tree.
    """
    params = params or CartParams()
    n = data.n
    min_leaf = max(1, math.ceil(params.min_leaf_fraction * n))
    root = _grow(data.features, data.labels, 0, params, min_leaf)
    _prune(root, n, params.alpha)
    return AxisTree(root, params, n)


def cart_predict(tree: AxisTree, x) -> int:
    """Route by x_j < b (left) / x_j >= b (right); return the leaf majority."""
    x = np.asarray(x, dtype=float)
    node = tree.root
    if not node.is_leaf and x.shape[0] <= node.feature:
        raise ValueError("feature vector too short for this tree")
    while not node.is_leaf:
        if x.shape[0] <= node.feature:
            raise ValueError("feature vector too short for this tree")
        node = node.left if x[node.feature] < node.threshold else node.right
    return node.label


def cart_accuracy(tree: AxisTree, test: Dataset) -> float:
    correct = sum(1 for i in range(test.n)
                  if cart_predict(tree, test.features[i]) == test.labels[i])
    return 100.0 * correct / test.n


def cart_to_text(tree: AxisTree) -> str:
    """Nested plain-text rendering for inspection."""
    lines: list[str] = []

    def walk(node: AxisNode, indent: int):
        pad = "  " * indent
        if node.is_leaf:
            lines.append(f"{pad}leaf label={node.label} counts={node.counts}")
        else:
            lines.append(f"{pad}x[{node.feature}] < {node.threshold:.6g} "
                         f"counts={node.counts}")
            walk(node.left, indent + 1)
            walk(node.right, indent + 1)

    walk(tree.root, 0)
    return "\n".join(lines) + "\n"


def cart_to_dict(tree: AxisTree) -> dict:
    def walk(node: AxisNode) -> dict:
        d = {"counts": list(node.counts)}
        if not node.is_leaf:
            d.update(feature=node.feature, threshold=node.threshold,
                     left=walk(node.left), right=walk(node.right))
        return d

    return {
        "root": walk(tree.root),
        "max_depth": tree.params.max_depth,
        "min_leaf_fraction": tree.params.min_leaf_fraction,
        "alpha": tree.params.alpha,
        "n_train": tree.n_train,
    }


def cart_from_dict(payload: dict) -> AxisTree:
    def walk(d: dict) -> AxisNode:
        node = AxisNode(tuple(d["counts"]))
        if "feature" in d:
            node.feature = int(d["feature"])
            node.threshold = float(d["threshold"])
            node.left = walk(d["left"])
            node.right = walk(d["right"])
        return node

    params = CartParams(max_depth=payload["max_depth"],
                        min_leaf_fraction=payload["min_leaf_fraction"],
                        alpha=payload["alpha"])
    return AxisTree(walk(payload["root"]), params, int(payload["n_train"]))
