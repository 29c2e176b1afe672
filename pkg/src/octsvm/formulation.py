"""Mixed-integer second-order-cone models for OCTSVM and RE-SVM.

Models are built as abstract variable/constraint tables (``MinlpModel``);
the solver module turns them into continuous conic relaxations.  Variable
names follow a fixed scheme (``w_t_j``, ``w0_t``, ``delta``, ``e_i_t``,
``beta_i_t_j``, ``beta0_i_t``, ``xi_i_t``, ``z_i_t``, ``th_i_t``, ``d_t``)
so solutions can be audited by name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, TreeClassifier, TreeTopology

BINARY_ROLES = ("xi", "z", "th", "d")


@dataclass(frozen=True)
class ModelConfig:
    """Cost and bound parameters of a tree model."""

    c1: float
    c2: float = 0.0
    c3: float = 0.0
    depth: int = 1
    coef_bound: float = 10.0  # W: bound on |w_tj| and |w_t0|
    feas_tol: float = 1e-6
    int_tol: float = 1e-6

    def __post_init__(self):
        if self.c1 <= 0:
            raise ValueError("c1 must be positive")
        if self.c2 < 0 or self.c3 < 0:
            raise ValueError("c2 and c3 must be non-negative")
        if self.depth < 0:
            raise ValueError("depth must be non-negative")
        if self.coef_bound <= 0:
            raise ValueError("coef_bound must be positive")
        for tol in (self.feas_tol, self.int_tol):
            if not 0 < tol < 1:
                raise ValueError("tolerances must lie in (0,1)")


@dataclass(frozen=True)
class MConstants:
    """Big-M constants derived from the coefficient bound W.

    With x in [0,1]^p and |w_tj|, |w_t0| <= W the node value w_t'x + w_t0 is
    bounded by W(p+1); relabeling flips its sign but not its magnitude, so
    M_route = W(p+1) deactivates the routing rows, M_err = 1 + W(p+1) the
    hinge rows, and M_norm = W*sqrt(p) bounds ||w_t||.
    """

    m_err: float
    m_route: float
    m_norm: float


def big_m_values(p: int, config: ModelConfig) -> MConstants:
    if p < 1:
        raise ValueError("p must be >= 1")
    w = config.coef_bound
    return MConstants(
        m_err=1.0 + w * (p + 1),
        m_route=w * (p + 1),
        m_norm=w * math.sqrt(p),
    )


@dataclass
class Variable:
    name: str
    kind: str  # "continuous" | "binary"
    lb: float
    ub: float
    role: str  # w, w0, delta, e, beta, beta0, xi, z, th, d
    index: tuple  # (i, t, j) subset, 1-based


@dataclass
class LinearRow:
    family: str
    coeffs: dict[int, float]
    sense: str  # "<=", ">=", "=="
    rhs: float


@dataclass
class ConeRow:
    """|| vector of affine expressions ||_2 <= affine scalar.

    Each affine expression is a (coeffs, constant) pair.
    """

    family: str
    vector: list[tuple[dict[int, float], float]]
    rhs: tuple[dict[int, float], float]


class MinlpModel:
    """Variable table, linear rows, cone rows and a linear objective."""

    def __init__(self, kind: str, config: ModelConfig, mconstants: MConstants,
                 n: int, p: int, topology: TreeTopology | None = None):
        self.kind = kind
        self.config = config
        self.mconstants = mconstants
        self.n = n
        self.p = p
        self.topology = topology
        self.variables: list[Variable] = []
        self._by_name: dict[str, int] = {}
        self.linear_rows: list[LinearRow] = []
        self.cone_rows: list[ConeRow] = []
        self.objective: dict[int, float] = {}

    # -- construction -------------------------------------------------

    def add_var(self, name, kind, lb, ub, role, index=()) -> int:
        if name in self._by_name:
            raise ValueError(f"duplicate variable {name}")
        self.variables.append(Variable(name, kind, lb, ub, role, index))
        self._by_name[name] = len(self.variables) - 1
        return len(self.variables) - 1

    def var_id(self, name: str) -> int:
        return self._by_name[name]

    def add_linear(self, family, coeffs, sense, rhs):
        self.linear_rows.append(LinearRow(family, dict(coeffs), sense, float(rhs)))

    def add_cone(self, family, vector, rhs):
        self.cone_rows.append(ConeRow(family, vector, rhs))

    def set_objective_coeff(self, var_id, coeff):
        if coeff:
            self.objective[var_id] = self.objective.get(var_id, 0.0) + coeff

    # -- queries -------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    def binary_ids(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.kind == "binary"]

    def ids_by_role(self, role: str) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.role == role]

    def variable_census(self) -> dict[str, int]:
        out: dict[str, int] = {"continuous": 0, "binary": 0}
        for v in self.variables:
            out[v.kind] += 1
            out[v.role] = out.get(v.role, 0) + 1
        return out

    def constraint_census(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for row in self.linear_rows:
            out[row.family] = out.get(row.family, 0) + 1
        for row in self.cone_rows:
            out[row.family] = out.get(row.family, 0) + 1
        return out

    # -- evaluation ----------------------------------------------------

    def objective_value(self, values: np.ndarray) -> float:
        return float(sum(c * values[i] for i, c in self.objective.items()))

    @staticmethod
    def _affine(expr: tuple[dict[int, float], float], values: np.ndarray) -> float:
        coeffs, const = expr
        return float(sum(c * values[i] for i, c in coeffs.items()) + const)

    def violations_by_family(self, values: np.ndarray) -> dict[str, float]:
        """Max violation of every constraint family, variable bounds and integrality."""
        out: dict[str, float] = {}

        def bump(family, v):
            if v > out.get(family, 0.0):
                out[family] = v

        for row in self.linear_rows:
            lhs = sum(c * values[i] for i, c in row.coeffs.items())
            if row.sense == "<=":
                viol = lhs - row.rhs
            elif row.sense == ">=":
                viol = row.rhs - lhs
            else:
                viol = abs(lhs - row.rhs)
            bump(row.family, max(0.0, viol))
        for row in self.cone_rows:
            norm = math.sqrt(sum(self._affine(e, values) ** 2 for e in row.vector))
            bump(row.family, max(0.0, norm - self._affine(row.rhs, values)))
        for i, var in enumerate(self.variables):
            bump("bounds", max(0.0, var.lb - values[i], values[i] - var.ub))
            if var.kind == "binary":
                bump("integrality", abs(values[i] - round(values[i])))
        return out

    def values_array(self, solution: "Solution") -> np.ndarray:
        return np.array([solution.values[v.name] for v in self.variables])


@dataclass
class Solution:
    """Variable values keyed by name, plus the solver-reported objective."""

    values: dict[str, float]
    objective: float


def linearize_bilinear(model: MinlpModel, beta_id: int, xi_id: int, w_id: int,
                       bound: float, family: str) -> None:
    """McCormick rows making beta = xi * w exact for binary xi with |w| <= bound."""
    model.add_linear(family, {beta_id: 1.0, xi_id: -bound}, "<=", 0.0)
    model.add_linear(family, {beta_id: 1.0, xi_id: bound}, ">=", 0.0)
    model.add_linear(family, {beta_id: 1.0, w_id: -1.0, xi_id: bound}, "<=", bound)
    model.add_linear(family, {beta_id: 1.0, w_id: -1.0, xi_id: -bound}, ">=", -bound)


def _require_two_classes(data: Dataset):
    if data.n < 2 or len(set(data.labels.tolist())) < 2:
        raise ValueError("training requires at least two observations and both classes")


def build_octsvm_model(data: Dataset, topo: TreeTopology, config: ModelConfig,
                       symmetry_cut: bool = False) -> MinlpModel:
    """Construct the depth-D tree model with margin splits and per-node relabeling.

    Objective: delta + c1*sum(e) + c2*sum(xi) + c3*sum(d).  Families octsvm_1
    to octsvm_11 follow the model block; octsvm_3 is McCormick-linearized and
    covers the intercept (j = 0).
    """
    _require_two_classes(data)
    if topo.depth != config.depth:
        raise ValueError("topology depth and config depth differ")
    n, p, T = data.n, data.p, topo.node_count
    W = config.coef_bound
    mc = big_m_values(p, config)
    model = MinlpModel("octsvm", config, mc, n, p, topo)

    delta = model.add_var("delta", "continuous", 0.0, W * math.sqrt(p) / 2, "delta")
    w = {(t, j): model.add_var(f"w_{t}_{j}", "continuous", -W, W, "w", (t, j))
         for t in range(1, T + 1) for j in range(1, p + 1)}
    w0 = {t: model.add_var(f"w0_{t}", "continuous", -W, W, "w0", (t,))
          for t in range(1, T + 1)}
    e = {(i, t): model.add_var(f"e_{i}_{t}", "continuous", 0.0, mc.m_err, "e", (i, t))
         for i in range(1, n + 1) for t in range(1, T + 1)}
    beta = {(i, t, j): model.add_var(f"beta_{i}_{t}_{j}", "continuous", -W, W,
                                     "beta", (i, t, j))
            for i in range(1, n + 1) for t in range(1, T + 1) for j in range(1, p + 1)}
    beta0 = {(i, t): model.add_var(f"beta0_{i}_{t}", "continuous", -W, W,
                                   "beta0", (i, t))
             for i in range(1, n + 1) for t in range(1, T + 1)}
    xi = {(i, t): model.add_var(f"xi_{i}_{t}", "binary", 0.0, 1.0, "xi", (i, t))
          for i in range(1, n + 1) for t in range(1, T + 1)}
    z = {(i, t): model.add_var(f"z_{i}_{t}", "binary", 0.0, 1.0, "z", (i, t))
         for i in range(1, n + 1) for t in range(1, T + 1)}
    th = {(i, t): model.add_var(f"th_{i}_{t}", "binary", 0.0, 1.0, "th", (i, t))
          for i in range(1, n + 1) for t in range(1, T + 1)}
    d = {t: model.add_var(f"d_{t}", "binary", 0.0, 1.0, "d", (t,))
         for t in range(1, T + 1)}

    model.set_objective_coeff(delta, 1.0)
    for key in e:
        model.set_objective_coeff(e[key], config.c1)
    for key in xi:
        model.set_objective_coeff(xi[key], config.c2)
    for t in d:
        model.set_objective_coeff(d[t], config.c3)

    x = data.features
    y = data.labels

    # octsvm_1: ||w_t|| <= 2 delta  (margin epigraph)
    for t in range(1, T + 1):
        model.add_cone("octsvm_1",
                       [({w[(t, j)]: 1.0}, 0.0) for j in range(1, p + 1)],
                       ({delta: 2.0}, 0.0))

    # octsvm_2: hinge rows with relabeling, deactivated by M when z_it = 0
    for i in range(1, n + 1):
        yi = float(y[i - 1])
        for t in range(1, T + 1):
            coeffs = {w0[t]: yi, beta0[(i, t)]: -2.0 * yi,
                      e[(i, t)]: 1.0, z[(i, t)]: -mc.m_err}
            for j in range(1, p + 1):
                coeffs[w[(t, j)]] = yi * x[i - 1, j - 1]
                coeffs[beta[(i, t, j)]] = -2.0 * yi * x[i - 1, j - 1]
            model.add_linear("octsvm_2", coeffs, ">=", 1.0 - mc.m_err)

    # octsvm_3: beta_itj = xi_it * w_tj (j = 0..p), McCormick
    for i in range(1, n + 1):
        for t in range(1, T + 1):
            linearize_bilinear(model, beta0[(i, t)], xi[(i, t)], w0[t], W, "octsvm_3")
            for j in range(1, p + 1):
                linearize_bilinear(model, beta[(i, t, j)], xi[(i, t)], w[(t, j)],
                                   W, "octsvm_3")

    # octsvm_4: ||w_t|| <= M_norm d_t
    for t in range(1, T + 1):
        model.add_cone("octsvm_4",
                       [({w[(t, j)]: 1.0}, 0.0) for j in range(1, p + 1)],
                       ({d[t]: mc.m_norm}, 0.0))

    # octsvm_5: split hierarchy d_t <= d_parent
    for t in range(2, T + 1):
        model.add_linear("octsvm_5", {d[t]: 1.0, d[topo.parent[t]]: -1.0}, "<=", 0.0)

    # octsvm_6: one node per level
    for i in range(1, n + 1):
        for level in topo.levels:
            model.add_linear("octsvm_6", {z[(i, t)]: 1.0 for t in level}, "==", 1.0)

    # octsvm_7: membership hierarchy
    for i in range(1, n + 1):
        for t in range(2, T + 1):
            model.add_linear("octsvm_7",
                             {z[(i, t)]: 1.0, z[(i, topo.parent[t])]: -1.0}, "<=", 0.0)

    # octsvm_8 / octsvm_9: th_it matches the half-space of observation i at node t
    for i in range(1, n + 1):
        for t in range(1, T + 1):
            coeffs = {w0[t]: 1.0}
            for j in range(1, p + 1):
                coeffs[w[(t, j)]] = x[i - 1, j - 1]
            lo = dict(coeffs)
            lo[th[(i, t)]] = -mc.m_route
            model.add_linear("octsvm_8", lo, ">=", -mc.m_route)
            hi = dict(coeffs)
            hi[th[(i, t)]] = -mc.m_route
            model.add_linear("octsvm_9", hi, "<=", 0.0)

    # octsvm_10 / octsvm_11: transitions follow the half-space indicator
    for i in range(1, n + 1):
        for t in sorted(topo.left_branch_nodes):
            pt = topo.parent[t]
            model.add_linear("octsvm_10",
                             {z[(i, pt)]: 1.0, z[(i, t)]: -1.0, th[(i, pt)]: -1.0},
                             "<=", 0.0)
        for t in sorted(topo.right_branch_nodes):
            pt = topo.parent[t]
            model.add_linear("octsvm_11",
                             {z[(i, pt)]: 1.0, z[(i, t)]: -1.0, th[(i, pt)]: 1.0},
                             "<=", 1.0)

    if symmetry_cut:
        # the model is invariant under negating the root hyperplane and
        # swapping its subtrees; fixing the sign of w_1_1 removes that mirror
        model.add_linear("symmetry", {w[(1, 1)]: 1.0}, ">=", 0.0)

    return model


def build_resvm_model(data: Dataset, c1: float, c2: float,
                      coef_bound: float = 10.0) -> MinlpModel:
    """Max-margin hyperplane with relabeling: 0.5||w||^2 + c1*sum(e) + c2*sum(xi).

    The quadratic margin term is carried by an epigraph variable ``delta``
    with the rotated-cone row ||(w, delta - 1/2)|| <= delta + 1/2; the
    relabeled hinge constraint is linearized with the beta substitution.
    """
    _require_two_classes(data)
    n, p = data.n, data.p
    W = coef_bound
    config = ModelConfig(c1=c1, c2=c2, depth=0, coef_bound=W)
    mc = big_m_values(p, config)
    model = MinlpModel("resvm", config, mc, n, p, None)

    delta = model.add_var("delta", "continuous", 0.0, W * W * p / 2, "delta")
    w = {j: model.add_var(f"w_{j}", "continuous", -W, W, "w", (j,))
         for j in range(1, p + 1)}
    w0 = model.add_var("w0", "continuous", -W, W, "w0", ())
    e = {i: model.add_var(f"e_{i}", "continuous", 0.0, mc.m_err, "e", (i,))
         for i in range(1, n + 1)}
    beta = {(i, j): model.add_var(f"beta_{i}_{j}", "continuous", -W, W, "beta", (i, j))
            for i in range(1, n + 1) for j in range(1, p + 1)}
    beta0 = {i: model.add_var(f"beta0_{i}", "continuous", -W, W, "beta0", (i,))
             for i in range(1, n + 1)}
    xi = {i: model.add_var(f"xi_{i}", "binary", 0.0, 1.0, "xi", (i,))
          for i in range(1, n + 1)}

    model.set_objective_coeff(delta, 1.0)
    for i in range(1, n + 1):
        model.set_objective_coeff(e[i], c1)
        model.set_objective_coeff(xi[i], c2)

    # 0.5 ||w||^2 <= delta as a second-order cone row
    vector = [({w[j]: 1.0}, 0.0) for j in range(1, p + 1)]
    vector.append(({delta: 1.0}, -0.5))
    model.add_cone("resvm", vector, ({delta: 1.0}, 0.5))

    x, y = data.features, data.labels
    for i in range(1, n + 1):
        yi = float(y[i - 1])
        coeffs = {w0: yi, beta0[i]: -2.0 * yi, e[i]: 1.0}
        for j in range(1, p + 1):
            coeffs[w[j]] = yi * x[i - 1, j - 1]
            coeffs[beta[(i, j)]] = -2.0 * yi * x[i - 1, j - 1]
        model.add_linear("resvm", coeffs, ">=", 1.0)
        linearize_bilinear(model, beta0[i], xi[i], w0, W, "resvm")
        for j in range(1, p + 1):
            linearize_bilinear(model, beta[(i, j)], xi[i], w[j], W, "resvm")

    return model


def extract_tree(model: MinlpModel, sol: Solution, topo: TreeTopology,
                 data: Dataset) -> TreeClassifier:
    """Turn an integral OCTSVM solution into the deployable classifier.

    Hyperplanes of nodes with d_t = 1 are copied; pruned nodes are zeroed so
    prediction ignores them.  The fallback label is the training majority.
    """
    tol = model.config.int_tol
    values = model.values_array(sol)
    for i in model.binary_ids():
        if abs(values[i] - round(values[i])) > tol:
            raise ValueError(f"non-integral binary {model.variables[i].name}")
    viol = model.violations_by_family(values)
    worst = max(viol.values(), default=0.0)
    if worst > model.config.feas_tol * 10:
        raise ValueError(f"solution infeasible (max violation {worst:.2e})")

    p = model.p
    coefficients, intercepts, active = {}, {}, {}
    for t in range(1, topo.node_count + 1):
        d_val = sol.values[f"d_{t}"]
        is_active = round(d_val) == 1
        # hierarchy comes from octsvm_5; re-derive defensively
        parent = topo.parent.get(t)
        if parent is not None and not active[parent]:
            is_active = False
        active[t] = is_active
        if is_active:
            coefficients[t] = np.array(
                [sol.values[f"w_{t}_{j}"] for j in range(1, p + 1)])
            intercepts[t] = float(sol.values[f"w0_{t}"])
        else:
            coefficients[t] = np.zeros(p)
            intercepts[t] = 0.0
    return TreeClassifier(topo, coefficients, intercepts, active,
                          fallback_label=data.majority_label())


class ContinuousSubproblem:
    """Model with a subset of binaries fixed and the rest relaxed to [0,1]."""

    def __init__(self, model: MinlpModel, fixing: dict[int, float],
                 template=None):
        for var_id, value in fixing.items():
            if model.variables[var_id].kind != "binary":
                raise ValueError(
                    f"fixing refers to non-binary variable "
                    f"{model.variables[var_id].name}")
            if value not in (0, 1, 0.0, 1.0):
                raise ValueError("binaries can only be fixed to 0 or 1")
        self.model = model
        self.fixing = {k: float(v) for k, v in fixing.items()}
        if template is None:
            from .conic import RelaxationTemplate
            template = RelaxationTemplate(model)
        self._template = template

    def solve(self):
        return self._template.solve(self.fixing)


def continuous_subproblem(model: MinlpModel, fixing: dict[int, float],
                          template=None) -> ContinuousSubproblem:
    """Fix the given binaries and relax the remaining ones; objective unchanged."""
    return ContinuousSubproblem(model, fixing, template)


def objective_of(sol: Solution, config: ModelConfig) -> float:
    """Recompute delta + c1*sum(e) + c2*sum(xi) + c3*sum(d) from variable names."""
    total = sol.values["delta"]
    for name, value in sol.values.items():
        if name.startswith("e_"):
            total += config.c1 * value
        elif name.startswith("xi_"):
            total += config.c2 * value
        elif name.startswith("d_"):
            total += config.c3 * value
    return float(total)


def write_lp(model: MinlpModel, path=None) -> str:
    """Export the model in LP exchange text, cones expanded to quadratic rows.

    A cone row ||Gx+g|| <= rx+r0 becomes the quadratic constraint
    (Gx+g).(Gx+g) - (rx+r0)^2 <= 0; the cone's scalar side is non-negative by
    variable bounds in every model this module emits.
    """
    lines = ["Minimize", " obj: " + _lp_expr(
        {i: c for i, c in sorted(model.objective.items())}, model)]
    lines.append("Subject To")
    counters: dict[str, int] = {}
    for row in model.linear_rows:
        counters[row.family] = counters.get(row.family, 0) + 1
        name = f"{row.family}_{counters[row.family]}"
        op = {"<=": "<=", ">=": ">=", "==": "="}[row.sense]
        lines.append(f" {name}: {_lp_expr(row.coeffs, model)} {op} {row.rhs:.12g}")
    for row in model.cone_rows:
        counters[row.family] = counters.get(row.family, 0) + 1
        name = f"{row.family}_q{counters[row.family]}"
        quad, lin, const = _expand_cone(row)
        parts = []
        for (a, b), c in sorted(quad.items()):
            term = f"{model.variables[a].name} ^ 2" if a == b else \
                f"{model.variables[a].name} * {model.variables[b].name}"
            parts.append(f"{'+' if c >= 0 else '-'} {abs(c):.12g} {term}")
        body = "[ " + " ".join(parts).lstrip("+ ") + " ]"
        tail = _lp_expr(lin, model, signed=True) if lin else ""
        lines.append(f" {name}: {body}{(' ' + tail) if tail else ''} <= {-const:.12g}")
    lines.append("Bounds")
    for v in model.variables:
        if v.kind == "continuous":
            lines.append(f" {v.lb:.12g} <= {v.name} <= {v.ub:.12g}")
    lines.append("Binary")
    for v in model.variables:
        if v.kind == "binary":
            lines.append(f" {v.name}")
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _lp_expr(coeffs: dict[int, float], model: MinlpModel, signed: bool = False) -> str:
    parts = []
    for i, c in sorted(coeffs.items()):
        sign = "+" if c >= 0 else "-"
        parts.append(f"{sign} {abs(c):.12g} {model.variables[i].name}")
    text = " ".join(parts)
    if not signed and text.startswith("+ "):
        text = text[2:]
    return text


def _expand_cone(row: ConeRow):
    """Quadratic/linear/constant parts of ||v||^2 - rhs^2 <= 0."""
    quad: dict[tuple[int, int], float] = {}
    lin: dict[int, float] = {}
    const = 0.0

    def accumulate(expr, sign):
        nonlocal const
        coeffs, c0 = expr
        items = sorted(coeffs.items())
        for a_i, (ia, ca) in enumerate(items):
            for ib, cb in items[a_i:]:
                key = (ia, ib)
                factor = 1.0 if ia == ib else 2.0
                quad[key] = quad.get(key, 0.0) + sign * factor * ca * cb
        for ia, ca in items:
            lin[ia] = lin.get(ia, 0.0) + sign * 2.0 * ca * c0
        const += sign * c0 * c0

    for expr in row.vector:
        accumulate(expr, +1.0)
    accumulate(row.rhs, -1.0)
    quad = {k: v for k, v in quad.items() if v != 0.0}
    lin = {k: v for k, v in lin.items() if v != 0.0}
    return quad, lin, const
