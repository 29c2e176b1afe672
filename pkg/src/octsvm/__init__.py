"""Optimal classification trees with SVM-margin splits and relabeling."""

from .core import (
    ConfusionSummary,
    Dataset,
    TreeClassifier,
    TreeTopology,
    accuracy,
    apply_scaling,
    build_topology,
    normalize_features,
    predict,
    route,
)
from .formulation import (
    MConstants,
    MinlpModel,
    ModelConfig,
    Solution,
    big_m_values,
    build_octsvm_model,
    build_resvm_model,
    continuous_subproblem,
    extract_tree,
    linearize_bilinear,
    objective_of,
    write_lp,
)
from .solver import (
    Budget,
    SolveResult,
    branch_and_bound,
    brute_force_solve,
    check_feasible,
    primal_heuristic,
    select_branching,
    solve_relaxation,
)

__all__ = [
    "ConfusionSummary",
    "Dataset",
    "TreeClassifier",
    "TreeTopology",
    "accuracy",
    "apply_scaling",
    "build_topology",
    "normalize_features",
    "predict",
    "route",
    "MConstants",
    "MinlpModel",
    "ModelConfig",
    "Solution",
    "big_m_values",
    "build_octsvm_model",
    "build_resvm_model",
    "continuous_subproblem",
    "extract_tree",
    "linearize_bilinear",
    "objective_of",
    "write_lp",
    "Budget",
    "SolveResult",
    "branch_and_bound",
    "brute_force_solve",
    "check_feasible",
    "primal_heuristic",
    "select_branching",
    "solve_relaxation",
]

__version__ = "0.1.0"
