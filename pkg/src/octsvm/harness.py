"""Experiment harness: data loading, label flipping, folds, grid search, reports.

The cross-validation convention is deliberately inverted from the usual one:
each fold is used for training and the union of the remaining folds for
testing.  Standard k-fold is available behind ``standard_kfold``.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import AxisTree, CartParams, cart_predict, cart_train
from .core import (Dataset, TreeClassifier, apply_scaling, build_topology,
                   normalize_features, predict)
from .formulation import ModelConfig, build_octsvm_model, build_resvm_model, extract_tree
from .solver import Budget, branch_and_bound

# known benchmark shapes (n, p) for the manifest check
KNOWN_SHAPES = {
    "australian": (690, 14),
    "breastcancer": (683, 9),
    "heart": (270, 13),
    "ionosphere": (351, 34),
    "monks": (415, 7),
    "parkinson": (240, 40),
    "sonar": (208, 60),
    "wholesale": (440, 7),
}

LARGE_GRID = tuple(10.0 ** i for i in range(-5, 6))
SMALL_GRID = tuple(10.0 ** i for i in range(-2, 3))

METHODS = ("OCTSVM", "RESVM", "CART")


@dataclass
class ExperimentSpec:
    dataset_path: str
    dataset_name: str = "dataset"
    methods: tuple[str, ...] = METHODS
    flip_fractions: tuple[float, ...] = (0.0, 0.2, 0.3, 0.4)
    folds: int = 4
    replications: int = 4
    seed: int = 0
    c1_grid: tuple[float, ...] = LARGE_GRID
    c2_grid: tuple[float, ...] = LARGE_GRID
    c3_grid: tuple[float, ...] = SMALL_GRID
    alpha_grid: tuple[float, ...] = LARGE_GRID
    octsvm_depth: int = 2
    cart_depth: int = 3
    time_limit: float = 30.0
    node_limit: int | None = None
    gap_target: float = 0.05
    standard_kfold: bool = False
    label_column: int = -1

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if not self.methods:
            raise ValueError("methods must be nonempty")
        for f in self.flip_fractions:
            if not 0.0 <= f < 0.5:
                raise ValueError("flip fractions must lie in [0, 0.5)")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        for grid in (self.c1_grid, self.c2_grid, self.c3_grid, self.alpha_grid):
            if not grid:
                raise ValueError("grids must be nonempty")

    def budget(self) -> Budget:
        return Budget(time_limit=self.time_limit, node_limit=self.node_limit,
                      gap_target=self.gap_target)


@dataclass
class ReportRow:
    dataset: str
    method: str
    flip_percent: float
    replication: int
    fold: int
    accuracy_percent: float | None
    solve_gap: float | None
    wall_time: float
    hyperparameters: str
    error: str = ""


@dataclass
class Report:
    rows: list[ReportRow] = field(default_factory=list)
    deterministic: bool = False

    def aggregate(self) -> list[tuple[str, str, str, float]]:
        """(dataset, method, flip level or 'Average', mean accuracy) rows."""
        keys: dict[tuple[str, str], dict[float, list[float]]] = {}
        for row in self.rows:
            if row.accuracy_percent is None:
                continue
            bucket = keys.setdefault((row.dataset, row.method), {})
            bucket.setdefault(row.flip_percent, []).append(row.accuracy_percent)
        out = []
        for (ds, method) in sorted(keys):
            bucket = keys[(ds, method)]
            all_cells = []
            for flip in sorted(bucket):
                cells = bucket[flip]
                all_cells.extend(cells)
                out.append((ds, method, f"{flip:g}", sum(cells) / len(cells)))
            out.append((ds, method, "Average", sum(all_cells) / len(all_cells)))
        return out


def load_csv(path: str, label_column: int = -1,
             expected_shape: tuple[int, int] | None = None):
    """Read a numeric CSV into (raw feature matrix, labels in {-1,+1}).

    Labels may be coded {-1,+1} or {0,1} (0 maps to -1).  A non-numeric
    first row is treated as a header; any other bad cell is reported with
    its row and column.
    """
    with open(path, newline="") as fh:
        raw_rows = [row for row in csv.reader(fh) if row]
    if not raw_rows:
        raise ValueError(f"{path}: empty file")

    def parse_row(cells, rownum):
        out = []
        for j, cell in enumerate(cells):
            try:
                out.append(float(cell))
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric value {cell!r} at row {rownum}, "
                    f"column {j}") from None
        return out

    start = 0
    try:
        float(raw_rows[0][0])
    except ValueError:
        start = 1  # header row
    width = len(raw_rows[start])
    parsed = []
    for r in range(start, len(raw_rows)):
        if len(raw_rows[r]) != width:
            raise ValueError(f"{path}: ragged row {r} has {len(raw_rows[r])} "
                             f"cells, expected {width}")
        parsed.append(parse_row(raw_rows[r], r))
    matrix = np.array(parsed, dtype=float)
    lcol = label_column if label_column >= 0 else matrix.shape[1] + label_column
    labels_raw = matrix[:, lcol]
    features = np.delete(matrix, lcol, axis=1)
    labels = np.empty(len(labels_raw), dtype=int)
    for i, v in enumerate(labels_raw):
        if v in (-1.0, 1.0):
            labels[i] = int(v)
        elif v == 0.0:
            labels[i] = -1
        else:
            raise ValueError(f"{path}: unknown label value {v!r} at row "
                             f"{start + i}, column {lcol}")
    if expected_shape is not None and (features.shape[0], features.shape[1]) != tuple(expected_shape):
        raise ValueError(f"{path}: shape {features.shape} does not match the "
                         f"expected {tuple(expected_shape)}")
    return features, labels


def flip_labels(data: Dataset, fraction: float, seed: int) -> Dataset:
    """Negate exactly floor(fraction*n + 0.5) labels chosen by the seed."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0, 1)")
    count = int(math.floor(fraction * data.n + 0.5))
    labels = data.labels.copy()
    if count:
        rng = np.random.default_rng(seed)
        idx = rng.choice(data.n, size=count, replace=False)
        labels[idx] = -labels[idx]
    return Dataset(data.features, labels, feature_names=data.feature_names,
                   scaling=data.scaling)


def kfold(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded partition of range(n) into k folds with sizes differing by <= 1."""
    if k > n:
        raise ValueError("k must not exceed n")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(perm[f::k]) for f in range(k)]


@dataclass
class TrainedModel:
    kind: str
    tree: TreeClassifier | None = None
    axis_tree: AxisTree | None = None
    solve_gap: float | None = None

    def predict_row(self, x) -> int:
        if self.kind == "CART":
            return cart_predict(self.axis_tree, x)
        return predict(self.tree, x)

    def accuracy(self, data: Dataset) -> float:
        correct = sum(1 for i in range(data.n)
                      if self.predict_row(data.features[i]) == data.labels[i])
        return 100.0 * correct / data.n


def _resvm_classifier(sol, p: int, fallback: int) -> TreeClassifier:
    topo = build_topology(0)
    w = np.array([sol.values[f"w_{j}"] for j in range(1, p + 1)])
    return TreeClassifier(topo, {1: w}, {1: sol.values["w0"]},
                          {1: True}, fallback_label=fallback)


def train_method(method: str, train: Dataset, params: dict,
                 budget: Budget, spec: ExperimentSpec) -> TrainedModel:
    """Train one model on an already-normalized sample."""
    if method == "CART":
        tree = cart_train(train, CartParams(max_depth=spec.cart_depth,
                                            alpha=params["alpha"]))
        return TrainedModel("CART", axis_tree=tree)
    if method == "RESVM":
        model = build_resvm_model(train, c1=params["c1"], c2=params["c2"])
        res = branch_and_bound(model, budget, data=train)
        if res.incumbent is None:
            raise RuntimeError(f"RESVM solve failed with status {res.status}")
        tree = _resvm_classifier(res.incumbent, train.p, train.majority_label())
        return TrainedModel("RESVM", tree=tree, solve_gap=res.gap)
    topo = build_topology(spec.octsvm_depth)
    config = ModelConfig(c1=params["c1"], c2=params["c2"], c3=params["c3"],
                         depth=spec.octsvm_depth)
    model = build_octsvm_model(train, topo, config)
    res = branch_and_bound(model, budget, data=train, topo=topo)
    if res.incumbent is None:
        raise RuntimeError(f"OCTSVM solve failed with status {res.status}")
    tree = extract_tree(model, res.incumbent, topo, train)
    return TrainedModel("OCTSVM", tree=tree, solve_gap=res.gap)


def _grid_points(method: str, spec: ExperimentSpec) -> list[dict]:
    """Grid points ordered so the first tie wins the preference rules.

    Preference: smaller c3 (or alpha), then smaller c2, then smaller c1.
    """
    if method == "CART":
        return [{"alpha": a} for a in sorted(spec.alpha_grid)]
    if method == "RESVM":
        return [{"c1": c1, "c2": c2}
                for c2 in sorted(spec.c2_grid) for c1 in sorted(spec.c1_grid)]
    return [{"c1": c1, "c2": c2, "c3": c3}
            for c3 in sorted(spec.c3_grid) for c2 in sorted(spec.c2_grid)
            for c1 in sorted(spec.c1_grid)]


def grid_search(train: Dataset, method: str, spec: ExperimentSpec,
                budget: Budget, seed: int) -> dict:
    """Pick grid point by accuracy on a seeded inner 75/25 split.

    Both classes are kept in the inner training part when possible; ties in
    validation accuracy go to the earlier (cheaper) grid point.
    """
    points = _grid_points(method, spec)
    if len(points) == 1:
        return points[0]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(train.n)
    n_val = max(1, int(round(0.25 * train.n)))
    val_idx, fit_idx = perm[:n_val], perm[n_val:]
    fit, val = train.subset(fit_idx), train.subset(val_idx)
    if len(set(fit.labels.tolist())) < 2:
        # inner split collapsed to one class; fall back to the full fold
        fit, val = train, train
    best = None
    failures = []
    for point in points:
        try:
            model = train_method(method, fit, point, budget, spec)
        except Exception as exc:  # noqa: BLE001 - per-point diagnostics
            failures.append(f"{point}: {exc}")
            continue
        acc = model.accuracy(val)
        if best is None or acc > best[0] + 1e-12:
            best = (acc, point)
    if best is None:
        raise RuntimeError("every grid point failed: " + "; ".join(failures))
    return best[1]


def run_experiment(spec: ExperimentSpec) -> Report:
    """Replications x flip fractions x folds x methods, one report row each.

    Test labels are never flipped; features are scaled with the training
    fold's min/max.  Per-cell failures are recorded, not raised.
    """
    raw, labels = load_csv(spec.dataset_path, spec.label_column)
    report = Report(deterministic=spec.node_limit is not None)
    budget = spec.budget()
    for rep in range(spec.replications):
        rep_seed = spec.seed + 1000 * rep
        folds = kfold(len(labels), spec.folds, rep_seed)
        for frac in spec.flip_fractions:
            for f in range(spec.folds):
                if spec.standard_kfold:
                    test_idx = folds[f]
                    train_idx = np.concatenate(
                        [folds[g] for g in range(spec.folds) if g != f])
                else:
                    train_idx = folds[f]
                    test_idx = np.concatenate(
                        [folds[g] for g in range(spec.folds) if g != f])
                cell_seed = rep_seed + 17 * f + int(round(frac * 100))
                for method in spec.methods:
                    t0 = time.perf_counter()
                    try:
                        train = normalize_features(raw[train_idx],
                                                   labels[train_idx])
                        train = flip_labels(train, frac, cell_seed)
                        test = Dataset(apply_scaling(raw[test_idx],
                                                     train.scaling),
                                       labels[test_idx],
                                       scaling=train.scaling)
                        params = grid_search(train, method, spec, budget,
                                             cell_seed + 7)
                        model = train_method(method, train, params, budget,
                                             spec)
                        row = ReportRow(
                            spec.dataset_name, method, 100.0 * frac, rep, f,
                            model.accuracy(test), model.solve_gap,
                            time.perf_counter() - t0,
                            _format_params(params))
                    except Exception as exc:  # noqa: BLE001 - per-cell capture
                        row = ReportRow(spec.dataset_name, method,
                                        100.0 * frac, rep, f, None, None,
                                        time.perf_counter() - t0, "",
                                        error=str(exc))
                    report.rows.append(row)
    report.rows.sort(key=lambda r: (r.dataset, r.method, r.flip_percent,
                                    r.replication, r.fold))
    return report


def _format_params(params: dict) -> str:
    return " ".join(f"{k}={v:g}" for k, v in sorted(params.items()))


def write_report(report: Report, path: str) -> str:
    """Write per-cell rows plus a Table-2 style aggregate section.

    Wall times are omitted in deterministic (node-limited) mode so repeated
    runs of the same spec produce identical bytes.
    """
    if not report.rows:
        raise ValueError("report is empty")
    lines = ["dataset,method,flip_percent,replication,fold,accuracy,"
             "solve_gap,wall_time,hyperparameters,error"]
    for r in report.rows:
        acc = "" if r.accuracy_percent is None else f"{r.accuracy_percent:.2f}"
        gap = "" if r.solve_gap is None else f"{r.solve_gap:.6f}"
        wall = "" if report.deterministic else f"{r.wall_time:.3f}"
        lines.append(f"{r.dataset},{r.method},{r.flip_percent:g},"
                     f"{r.replication},{r.fold},{acc},{gap},{wall},"
                     f"{r.hyperparameters},{r.error}")
    lines.append("")
    lines.append("dataset,method,flip_percent,mean_accuracy")
    for ds, method, flip, acc in report.aggregate():
        lines.append(f"{ds},{method},{flip},{acc:.2f}")
    text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return path


_LIST_FIELDS = {"methods", "flip_fractions", "c1_grid", "c2_grid", "c3_grid",
                "alpha_grid"}
_INT_FIELDS = {"folds", "replications", "seed", "octsvm_depth", "cart_depth",
               "node_limit", "label_column"}
_FLOAT_FIELDS = {"time_limit", "gap_target"}
_BOOL_FIELDS = {"standard_kfold"}


def parse_spec_file(path: str) -> ExperimentSpec:
    """Flat key=value text file; list values are comma separated."""
    kwargs: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key in _LIST_FIELDS:
                items = [v.strip() for v in value.split(",") if v.strip()]
                if key == "methods":
                    kwargs[key] = tuple(items)
                else:
                    kwargs[key] = tuple(float(v) for v in items)
            elif key in _INT_FIELDS:
                kwargs[key] = int(value)
            elif key in _FLOAT_FIELDS:
                kwargs[key] = float(value)
            elif key in _BOOL_FIELDS:
                kwargs[key] = value.lower() in ("1", "true", "yes")
            elif key in ("dataset_path", "dataset_name"):
                kwargs[key] = value
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    if "dataset_path" not in kwargs:
        raise ValueError(f"{path}: dataset_path is required")
    return ExperimentSpec(**kwargs)
