"""Command-line interface: train, predict, experiment, export-model, oracle."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .baselines import CartParams, cart_from_dict, cart_predict, cart_to_dict, cart_train
from .core import (Dataset, TreeClassifier, apply_scaling, build_topology,
                   normalize_features, predict)
from .formulation import ModelConfig, build_octsvm_model, build_resvm_model, extract_tree, write_lp
from .harness import (ExperimentSpec, load_csv, parse_spec_file,
                      run_experiment, write_report, _resvm_classifier)
from .solver import Budget, branch_and_bound, brute_force_solve


def _budget(args) -> Budget:
    return Budget(time_limit=args.time_limit, node_limit=args.node_limit,
                  gap_target=args.gap_target)


def _load_training(path: str, label_column: int) -> Dataset:
    raw, labels = load_csv(path, label_column)
    return normalize_features(raw, labels)


def _tree_payload(tree: TreeClassifier, kind: str, scaling) -> dict:
    T = tree.topology.node_count
    return {
        "kind": kind,
        "depth": tree.topology.depth,
        "coefficients": {str(t): list(map(float, tree.coefficients[t]))
                         for t in range(1, T + 1)},
        "intercepts": {str(t): float(tree.intercepts[t])
                       for t in range(1, T + 1)},
        "split_active": {str(t): bool(tree.split_active[t])
                         for t in range(1, T + 1)},
        "fallback_label": tree.fallback_label,
        "scaling": [list(pair) for pair in scaling],
    }


def _tree_from_payload(payload: dict) -> TreeClassifier:
    topo = build_topology(int(payload["depth"]))
    coeff = {int(t): np.array(v) for t, v in payload["coefficients"].items()}
    inter = {int(t): float(v) for t, v in payload["intercepts"].items()}
    active = {int(t): bool(v) for t, v in payload["split_active"].items()}
    return TreeClassifier(topo, coeff, inter, active,
                          fallback_label=int(payload["fallback_label"]))


def cmd_train(args) -> int:
    train = _load_training(args.data, args.label_column)
    budget = _budget(args)
    if args.method == "CART":
        tree = cart_train(train, CartParams(max_depth=args.depth,
                                            alpha=args.alpha))
        payload = {"kind": "cart", "tree": cart_to_dict(tree),
                   "scaling": [list(p) for p in train.scaling]}
        gap = None
    elif args.method == "RESVM":
        model = build_resvm_model(train, c1=args.c1, c2=args.c2)
        res = branch_and_bound(model, budget, data=train)
        if res.incumbent is None:
            raise RuntimeError(f"solve failed with status {res.status}")
        tree = _resvm_classifier(res.incumbent, train.p,
                                 train.majority_label())
        payload = _tree_payload(tree, "resvm", train.scaling)
        gap = res.gap
    else:
        topo = build_topology(args.depth)
        config = ModelConfig(c1=args.c1, c2=args.c2, c3=args.c3,
                             depth=args.depth)
        model = build_octsvm_model(train, topo, config)
        res = branch_and_bound(model, budget, data=train, topo=topo)
        if res.incumbent is None:
            raise RuntimeError(f"solve failed with status {res.status}")
        tree = extract_tree(model, res.incumbent, topo, train)
        payload = _tree_payload(tree, "octsvm", train.scaling)
        gap = res.gap
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    msg = f"trained {args.method} on {train.n} rows -> {args.out}"
    if gap is not None:
        msg += f" (gap {gap:.4f})"
    print(msg)
    return 0


def cmd_predict(args) -> int:
    with open(args.model) as fh:
        payload = json.load(fh)
    scaling = [tuple(p) for p in payload["scaling"]]
    p = len(scaling)
    with open(args.data) as fh:
        import csv as _csv
        rows = [r for r in _csv.reader(fh) if r]
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]
    width = len(rows[0])
    if width not in (p, p + 1):
        raise ValueError(f"expected {p} or {p + 1} columns, found {width}")
    raw = np.array([[float(c) for c in row[:p]] for row in rows])
    X = apply_scaling(raw, scaling)
    if payload["kind"] == "cart":
        tree = cart_from_dict(payload["tree"])
        preds = [cart_predict(tree, x) for x in X]
    else:
        tree = _tree_from_payload(payload)
        preds = [predict(tree, x) for x in X]
    out = sys.stdout if args.out is None else open(args.out, "w")
    try:
        for label in preds:
            out.write(f"{label}\n")
    finally:
        if args.out is not None:
            out.close()
    if width == p + 1:
        labels = [1 if float(row[p]) == 1 else -1 for row in rows]
        correct = sum(1 for a, b in zip(preds, labels) if a == b)
        print(f"accuracy {100.0 * correct / len(preds):.2f} "
              f"({correct}/{len(preds)})", file=sys.stderr)
    return 0


def cmd_experiment(args) -> int:
    spec = parse_spec_file(args.spec)
    report = run_experiment(spec)
    write_report(report, args.out)
    failed = [r for r in report.rows if r.error]
    print(f"wrote {len(report.rows)} rows to {args.out}"
          + (f" ({len(failed)} failed cells)" if failed else ""))
    return 0


def cmd_export_model(args) -> int:
    spec = parse_spec_file(args.spec)
    raw, labels = load_csv(spec.dataset_path, spec.label_column)
    train = normalize_features(raw, labels)
    method = spec.methods[0]
    if method == "CART":
        raise ValueError("CART has no mathematical-program form to export")
    if method == "RESVM":
        model = build_resvm_model(train, c1=spec.c1_grid[0], c2=spec.c2_grid[0])
    else:
        topo = build_topology(spec.octsvm_depth)
        config = ModelConfig(c1=spec.c1_grid[0], c2=spec.c2_grid[0],
                             c3=spec.c3_grid[0], depth=spec.octsvm_depth)
        model = build_octsvm_model(train, topo, config)
    text = write_lp(model)
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote model for {method} to {args.out}")
    return 0


def cmd_oracle(args) -> int:
    train = _load_training(args.data, args.label_column)
    topo = build_topology(args.depth)
    config = ModelConfig(c1=args.c1, c2=args.c2, c3=args.c3, depth=args.depth)
    model = build_octsvm_model(train, topo, config)
    oracle = brute_force_solve(model, train)
    search = branch_and_bound(model, _budget(args), data=train, topo=topo)
    obj_a = oracle.incumbent.objective
    obj_b = search.incumbent.objective if search.incumbent else float("nan")
    print(f"brute-force objective   {obj_a:.8f}")
    print(f"branch-and-bound objective {obj_b:.8f} (status {search.status})")
    if abs(obj_a - obj_b) > 1e-6:
        print("MISMATCH beyond 1e-6", file=sys.stderr)
        return 2
    print("objectives agree within 1e-6")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="octsvm",
        description="Optimal classification trees with SVM-margin splits")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--label-column", type=int, default=-1)

    def add_budget(p):
        p.add_argument("--time-limit", type=float, default=30.0)
        p.add_argument("--node-limit", type=int, default=None)
        p.add_argument("--gap-target", type=float, default=1e-6)

    p = sub.add_parser("train", help="train one model on a CSV file")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("OCTSVM", "RESVM", "CART"),
                   default="OCTSVM")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=1.0)
    p.add_argument("--c3", type=float, default=0.01)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    add_common(p)
    add_budget(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classify rows with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("experiment", help="run a label-noise experiment spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("export-model",
                       help="write the mixed-integer program as LP text")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export_model)

    p = sub.add_parser("oracle",
                       help="cross-check brute force against branch-and-bound")
    p.add_argument("--data", required=True)
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=0.1)
    p.add_argument("--c3", type=float, default=0.01)
    add_common(p)
    add_budget(p)
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single diagnostic line
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
