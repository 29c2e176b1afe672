"""Tree topology, dataset handling and the deterministic prediction rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TreeTopology:
    """Complete binary tree of a given depth, nodes numbered 1..T breadth-first.

    Children of node t are 2t (left) and 2t+1 (right).  Left-branch nodes are
    the even-indexed ones, right-branch nodes the odd-indexed ones >= 3.
    """

    depth: int
    node_count: int
    parent: dict[int, int]
    left_branch_nodes: frozenset[int]
    right_branch_nodes: frozenset[int]
    levels: tuple[tuple[int, ...], ...]

    def children(self, t: int) -> tuple[int, int] | None:
        if 2 * t + 1 <= self.node_count:
            return 2 * t, 2 * t + 1
        return None

    @property
    def leaf_level(self) -> tuple[int, ...]:
        return self.levels[-1]


def build_topology(depth: int) -> TreeTopology:
    """Build the topology of a complete binary tree with ``depth`` levels below the root."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    node_count = 2 ** (depth + 1) - 1
    parent = {t: t // 2 for t in range(2, node_count + 1)}
    left = frozenset(t for t in range(2, node_count + 1) if t % 2 == 0)
    right = frozenset(t for t in range(2, node_count + 1) if t % 2 == 1)
    levels = tuple(
        tuple(range(2 ** k, 2 ** (k + 1))) for k in range(depth + 1)
    )
    return TreeTopology(
        depth=depth,
        node_count=node_count,
        parent=parent,
        left_branch_nodes=left,
        right_branch_nodes=right,
        levels=levels,
    )


@dataclass
class Dataset:
    """Normalized training/test sample: features in [0,1], labels in {-1,+1}."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str] | None = None
    scaling: list[tuple[float, float]] | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels length must match the number of rows")
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise ValueError("labels must be -1 or +1")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if self.features.size and (
            self.features.min() < -1e-9 or self.features.max() > 1 + 1e-9
        ):
            raise ValueError("features must lie in [0,1]; normalize first")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(
            self.features[idx],
            self.labels[idx],
            feature_names=self.feature_names,
            scaling=self.scaling,
        )

    def majority_label(self) -> int:
        """Majority class, ties broken toward +1."""
        s = int(np.sum(self.labels))
        return 1 if s >= 0 else -1


def normalize_features(raw, labels, feature_names=None) -> Dataset:
    """Min-max scale every column of ``raw`` to [0,1] and record the scaling.

    Constant columns map to all-zeros.  Non-finite entries are rejected with
    the offending column index.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
        raise ValueError("raw must be an n x p matrix with n,p >= 1")
    for j in range(raw.shape[1]):
        if not np.all(np.isfinite(raw[:, j])):
            raise ValueError(f"non-finite value in feature column {j}")
    scaling = []
    scaled = np.zeros_like(raw)
    for j in range(raw.shape[1]):
        lo = float(raw[:, j].min())
        hi = float(raw[:, j].max())
        scaling.append((lo, hi))
        if hi > lo:
            scaled[:, j] = (raw[:, j] - lo) / (hi - lo)
        # constant column stays all-zeros
    return Dataset(scaled, labels, feature_names=feature_names, scaling=scaling)


def apply_scaling(raw, scaling) -> np.ndarray:
    """Apply stored (min, max) scaling to new rows, clamping the result to [0,1]."""
    raw = np.asarray(raw, dtype=float)
    out = np.zeros_like(raw)
    for j, (lo, hi) in enumerate(scaling):
        if hi > lo:
            out[:, j] = (raw[:, j] - lo) / (hi - lo)
    return np.clip(out, 0.0, 1.0)


@dataclass
class TreeClassifier:
    """Trained tree: one oblique hyperplane per split-active node.

    ``coefficients[t]`` / ``intercepts[t]`` hold the hyperplane of node t
    (1-based).  Inactive nodes store exact zeros.  The hierarchy invariant
    (a node can only be active if its parent is) is enforced on construction.
    """

    topology: TreeTopology
    coefficients: dict[int, np.ndarray]
    intercepts: dict[int, float]
    split_active: dict[int, bool]
    fallback_label: int = 1

    def __post_init__(self):
        topo = self.topology
        for t in range(1, topo.node_count + 1):
            if self.split_active.get(t, False):
                parent = topo.parent.get(t)
                if parent is not None and not self.split_active.get(parent, False):
                    raise ValueError(f"split at node {t} requires an active parent")
            else:
                w = np.asarray(self.coefficients.get(t, np.zeros(1)))
                if np.any(w != 0.0) or self.intercepts.get(t, 0.0) != 0.0:
                    raise ValueError(f"inactive node {t} must store a zero hyperplane")
        if self.fallback_label not in (-1, 1):
            raise ValueError("fallback_label must be -1 or +1")

    @property
    def p(self) -> int:
        return len(next(iter(self.coefficients.values())))

    def node_value(self, t: int, x: np.ndarray) -> float:
        return float(np.dot(self.coefficients[t], x) + self.intercepts[t])


@dataclass(frozen=True)
class ConfusionSummary:
    correct: int
    total: int
    accuracy_percent: float


def route(tree: TreeClassifier, x) -> list[int]:
    """Visited node indices for ``x``: the chain of split-active nodes.

    At every active node the point moves right (child 2t+1) when its
    hyperplane value is >= 0 and left otherwise; descent stops before an
    inactive child.  The root is always visited.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (tree.p,):
        raise ValueError(f"expected a length-{tree.p} vector, got shape {x.shape}")
    path = [1]
    t = 1
    while tree.split_active.get(t, False):
        kids = tree.topology.children(t)
        if kids is None:
            break
        child = kids[1] if tree.node_value(t, x) >= 0.0 else kids[0]
        if not tree.split_active.get(child, False):
            break
        path.append(child)
        t = child
    return path


def predict(tree: TreeClassifier, x) -> int:
    """Classify by the hyperplane of the last split-active node on the route.

    Boundary points (value exactly 0) go to +1.  A tree with no active split
    returns the fallback label.
    """
    path = route(tree, x)
    t = path[-1]
    if not tree.split_active.get(t, False):
        return tree.fallback_label
    return 1 if tree.node_value(t, np.asarray(x, dtype=float)) >= 0.0 else -1


def accuracy(tree: TreeClassifier, test: Dataset) -> ConfusionSummary:
    """Percentage of correctly classified rows of ``test``."""
    if test.n == 0:
        raise ValueError("test set is empty")
    correct = sum(
        1 for i in range(test.n) if predict(tree, test.features[i]) == test.labels[i]
    )
    return ConfusionSummary(correct, test.n, 100.0 * correct / test.n)
