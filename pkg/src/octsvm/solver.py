"""Exact and budgeted solving of the tree models.

``branch_and_bound`` searches over binary fixings with best-bound node
selection and depth-first plunging, bounding each node by its continuous
conic relaxation.  ``brute_force_solve`` is the independent verification
oracle: it enumerates tree-consistent binary structures directly from the
data and solves the small convex subproblems, never touching the big-M rows.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, RelaxationTemplate, RelaxSolution, Soc
from .core import Dataset, TreeTopology
from .formulation import MinlpModel, Solution

logger = logging.getLogger("octsvm.solver")

# branch first on the variables that shape the tree, then on routing,
# relabeling and half-space indicators
_ROLE_PRIORITY = {"d": 0, "z": 1, "xi": 2, "th": 3}

INT_TOL = 1e-6


@dataclass(frozen=True)
class Budget:
    """Search limits: wall-clock seconds, node count, relative gap target."""

    time_limit: float | None = 30.0
    node_limit: int | None = None
    gap_target: float = 1e-6

    def __post_init__(self):
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.node_limit is not None and self.node_limit <= 0:
            raise ValueError("node_limit must be positive")
        if self.gap_target <= 0:
            raise ValueError("gap_target must be positive")


@dataclass
class SolveResult:
    incumbent: Solution | None
    best_bound: float
    gap: float
    status: str  # optimal | gap-limit | time-limit | infeasible
    nodes_explored: int
    wall_time: float
    node_log: list[tuple[float, float]] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "status": self.status,
            "objective": None if self.incumbent is None else self.incumbent.objective,
            "best_bound": self.best_bound,
            "gap": self.gap,
            "nodes": self.nodes_explored,
            "wall_time": self.wall_time,
        }


@dataclass
class FeasibilityReport:
    by_family: dict[str, float]
    max_violation: float
    ok: bool


def solve_relaxation(program) -> RelaxSolution:
    """Solve a continuous conic program (anything exposing ``.solve()``)."""
    return program.solve()


def solution_from_values(model: MinlpModel, values: np.ndarray) -> Solution:
    vals = {v.name: float(values[i]) for i, v in enumerate(model.variables)}
    return Solution(vals, model.objective_value(values))


def check_feasible(sol: Solution, model: MinlpModel, tol: float = 1e-6
                   ) -> FeasibilityReport:
    """Audit every constraint family plus the un-linearized bilinear identity."""
    values = model.values_array(sol)
    fam = model.violations_by_family(values)
    worst = 0.0
    name = lambda n: sol.values[n]  # noqa: E731
    if model.kind == "octsvm":
        T = model.topology.node_count
        for i in range(1, model.n + 1):
            for t in range(1, T + 1):
                x = name(f"xi_{i}_{t}")
                worst = max(worst, abs(name(f"beta0_{i}_{t}") - x * name(f"w0_{t}")))
                for j in range(1, model.p + 1):
                    worst = max(worst, abs(name(f"beta_{i}_{t}_{j}")
                                           - x * name(f"w_{t}_{j}")))
    else:
        for i in range(1, model.n + 1):
            x = name(f"xi_{i}")
            worst = max(worst, abs(name(f"beta0_{i}") - x * name("w0")))
            for j in range(1, model.p + 1):
                worst = max(worst, abs(name(f"beta_{i}_{j}") - x * name(f"w_{j}")))
    fam["bilinear"] = worst
    max_violation = max(fam.values(), default=0.0)
    return FeasibilityReport(fam, max_violation, max_violation <= tol)


def select_branching(relax: RelaxSolution, model: MinlpModel) -> int:
    """Most fractional binary, in role priority d > z > xi > th, lowest id last."""
    best_key, best_id = None, None
    for i in model.binary_ids():
        v = relax.values[i]
        frac = abs(v - round(v))
        if frac <= INT_TOL:
            continue
        key = (_ROLE_PRIORITY[model.variables[i].role], -frac, i)
        if best_key is None or key < best_key:
            best_key, best_id = key, i
    if best_id is None:
        raise ValueError("relaxation solution is integral; nothing to branch on")
    return best_id


# ---------------------------------------------------------------------------
# primal heuristic
# ---------------------------------------------------------------------------


def _node_values(model: MinlpModel, values: np.ndarray, data: Dataset,
                 t: int) -> np.ndarray:
    p = model.p
    if model.kind == "octsvm":
        w = np.array([values[model.var_id(f"w_{t}_{j}")] for j in range(1, p + 1)])
        w0 = values[model.var_id(f"w0_{t}")]
    else:
        w = np.array([values[model.var_id(f"w_{j}")] for j in range(1, p + 1)])
        w0 = values[model.var_id("w0")]
    return data.features @ w + w0


def _heuristic_fixings(relax_values: np.ndarray, model: MinlpModel,
                       data: Dataset, topo: TreeTopology | None,
                       d_override: dict[int, int] | None = None) -> dict[int, float]:
    """Round a (possibly fractional) solution to a tree-consistent binary fixing."""
    cfg = model.config
    fix: dict[int, float] = {}
    if model.kind == "resvm":
        margins = _node_values(model, relax_values, data, 1) * data.labels
        for i in range(1, model.n + 1):
            m = margins[i - 1]
            flip = cfg.c1 * max(0.0, 1.0 + m) + cfg.c2 < cfg.c1 * max(0.0, 1.0 - m)
            fix[model.var_id(f"xi_{i}")] = 1.0 if flip else 0.0
        return fix

    T = topo.node_count
    d_round: dict[int, bool] = {}
    for t in range(1, T + 1):
        on = (relax_values[model.var_id(f"d_{t}")] >= 0.5
              if d_override is None else bool(d_override.get(t, 0)))
        parent = topo.parent.get(t)
        if parent is not None and not d_round[parent]:
            on = False
        d_round[t] = on
        fix[model.var_id(f"d_{t}")] = 1.0 if on else 0.0

    # Pruned nodes keep only a free intercept, so their routing indicators
    # must agree across all observations or the intercept gets pinned to 0.
    # Give each pruned node one intended sign (right child +1, left child -1,
    # pruned root = majority label) and route/relabel against that sign.
    signs: dict[int, float] = {}
    for t in range(1, T + 1):
        if d_round[t]:
            continue
        parent = topo.parent.get(t)
        if parent is None:
            signs[t] = 1.0 if 2 * int(np.sum(data.labels == 1)) >= model.n else -1.0
        elif not d_round[parent]:
            signs[t] = signs[parent]
        else:
            _, right = topo.children(parent)
            signs[t] = 1.0 if t == right else -1.0

    vals = {t: (_node_values(model, relax_values, data, t) if d_round[t]
                else np.full(model.n, signs[t]))
            for t in range(1, T + 1)}
    for i in range(1, model.n + 1):
        # theta from the sign of the fractional hyperplane at every node
        for t in range(1, T + 1):
            fix[model.var_id(f"th_{i}_{t}")] = 1.0 if vals[t][i - 1] >= 0.0 else 0.0
        # membership follows theta down the tree
        t = 1
        on_path = {1}
        while topo.children(t) is not None:
            left, right = topo.children(t)
            t = right if vals[t][i - 1] >= 0.0 else left
            on_path.add(t)
        y = float(data.labels[i - 1])
        for t in range(1, T + 1):
            member = t in on_path
            fix[model.var_id(f"z_{i}_{t}")] = 1.0 if member else 0.0
            flip = False
            if member:
                m = y * vals[t][i - 1]
                flip = (cfg.c1 * max(0.0, 1.0 + m) + cfg.c2
                        < cfg.c1 * max(0.0, 1.0 - m))
            fix[model.var_id(f"xi_{i}_{t}")] = 1.0 if flip else 0.0
    return fix


def _plant_hyperplane(model: MinlpModel, topo: TreeTopology | None,
                      base_values: np.ndarray, coef: np.ndarray) -> np.ndarray:
    top = float(np.max(np.abs(coef)))
    if top > model.config.coef_bound:
        coef = coef * (model.config.coef_bound / top)
    values = base_values.copy()
    if model.kind == "resvm":
        for j in range(1, model.p + 1):
            values[model.var_id(f"w_{j}")] = coef[j - 1]
        values[model.var_id("w0")] = coef[-1]
        return values
    for t in range(1, topo.node_count + 1):
        for j in range(1, model.p + 1):
            values[model.var_id(f"w_{t}_{j}")] = coef[j - 1]
        values[model.var_id(f"w0_{t}")] = coef[-1]
    return values


def _seed_values(model: MinlpModel, data: Dataset,
                 topo: TreeTopology | None,
                 base_values: np.ndarray) -> list[np.ndarray]:
    """Copies of ``base_values`` with every hyperplane set to a real direction.

    The relaxation often returns near-zero hyperplanes (the envelope rows let
    fractional relabeling absorb the hinge), which round to useless trees.
    Returns several candidate fits: a plain least-squares fit, a re-fit after
    flipping the labels the first fit misclassifies (robust to label noise),
    and the class-mean difference direction.
    """
    A = np.hstack([data.features, np.ones((data.n, 1))])
    y = data.labels.astype(float)
    coefs = []
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    coefs.append(coef)
    flipped = np.where(y * (A @ coef) < 0, -y, y)
    if not np.array_equal(flipped, y):
        refit, *_ = np.linalg.lstsq(A, flipped, rcond=None)
        coefs.append(refit)
    pos = data.features[data.labels == 1]
    neg = data.features[data.labels == -1]
    if len(pos) and len(neg):
        w = pos.mean(axis=0) - neg.mean(axis=0)
        scale = float(np.linalg.norm(w))
        if scale > 1e-12:
            w = w / scale
            mid = 0.5 * (pos.mean(axis=0) + neg.mean(axis=0))
            direction = np.append(w, -float(w @ mid))
            spread = float(np.mean(np.abs(A @ direction))) or 1.0
            coefs.append(direction / spread)
    seen = []
    out = []
    for coef in coefs:
        key = tuple(np.round(coef, 9))
        if key not in seen:
            seen.append(key)
            out.append(_plant_hyperplane(model, topo, base_values, coef))
    return out


def primal_heuristic(relax: RelaxSolution, model: MinlpModel,
                     data: Dataset | None = None,
                     topo: TreeTopology | None = None,
                     template: RelaxationTemplate | None = None,
                     passes: int = 2) -> Solution | None:
    """Round the relaxation to a feasible incumbent, refining a couple of times.

    Each pass fixes all binaries from the current hyperplanes and re-solves
    the continuous subproblem; the hyperplanes of that solve drive the next
    rounding.  Returns None if no feasible fixing is found.
    """
    if relax.status != "optimal":
        return None
    if data is None or (model.kind == "octsvm" and topo is None):
        return None
    if template is None:
        template = RelaxationTemplate(model)
    fix, values = _refine_fixings(relax.values, model, data, topo, template, passes)
    if fix is None:
        return None
    for var_id, value in fix.items():
        values[var_id] = value
    return solution_from_values(model, values)


def _refine_fixings(start_values, model, data, topo, template, passes,
                    d_override=None):
    fix = _heuristic_fixings(start_values, model, data, topo, d_override)
    best = None
    for _ in range(max(1, passes)):
        sub = template.solve(fix)
        if sub.status != "optimal":
            return (None, None) if best is None else best
        if best is None or sub.objective < best[2]:
            best = (fix, sub.values, sub.objective)
        new_fix = _heuristic_fixings(sub.values, model, data, topo)
        if new_fix == fix:
            break
        fix = new_fix
    return best[0], best[1].copy()


# ---------------------------------------------------------------------------
# branch and bound
# ---------------------------------------------------------------------------


def branch_and_bound(model: MinlpModel, budget: Budget = Budget(),
                     data: Dataset | None = None,
                     topo: TreeTopology | None = None,
                     heuristic_every: int = 8) -> SolveResult:
    """Best-bound search with depth-first plunging over binary fixings.

    Every accepted incumbent is re-solved with its binaries fixed and audited
    with :func:`check_feasible` before being kept.
    """
    t0 = time.perf_counter()
    template = RelaxationTemplate(model)
    topo = topo if topo is not None else model.topology

    inc_values: np.ndarray | None = None
    inc_obj = math.inf
    tried_fixings: set[tuple] = set()
    node_log: list[tuple[float, float]] = []
    nodes = 0
    seq = itertools.count()
    heap: list[tuple[float, int, dict[int, float]]] = [(-math.inf, next(seq), {})]
    stop_status: str | None = None

    def prune_eps() -> float:
        return 0.25 * budget.gap_target * max(1.0, abs(inc_obj))

    def try_incumbent(fix_all: dict[int, float]) -> None:
        nonlocal inc_values, inc_obj
        key = tuple(sorted(fix_all.items()))
        if key in tried_fixings:
            return
        tried_fixings.add(key)
        sub = template.solve(fix_all)
        if sub.status != "optimal":
            return
        values = sub.values.copy()
        for var_id, value in fix_all.items():
            values[var_id] = value
        obj = model.objective_value(values)
        if obj >= inc_obj - 1e-12:
            return
        report = check_feasible(solution_from_values(model, values), model, 1e-6)
        if not report.ok:
            logger.debug("incumbent rejected, violation %.2e", report.max_violation)
            return
        inc_values, inc_obj = values, obj
        logger.debug("incumbent %.8f after %d nodes", obj, nodes)

    def out_of_budget() -> str | None:
        if budget.node_limit is not None and nodes >= budget.node_limit:
            return "gap-limit"
        if (budget.time_limit is not None
                and time.perf_counter() - t0 > budget.time_limit):
            return "time-limit"
        return None

    all_binaries = model.binary_ids()

    while heap and stop_status is None:
        parent_bound, _, fixings = heapq.heappop(heap)
        if inc_values is not None and parent_bound >= inc_obj - prune_eps():
            continue
        # plunge from this node
        bound_est = parent_bound
        current = fixings
        while True:
            stop_status = out_of_budget()
            if stop_status is not None:
                heapq.heappush(heap, (bound_est, next(seq), current))
                break
            relax = template.solve(current)
            nodes += 1
            if relax.status == "infeasible":
                break
            if relax.status == "numerical-failure":
                # no usable bound: split on the first unfixed binary, keeping
                # the parent bound so the global bound stays valid
                unfixed = [b for b in all_binaries if b not in current]
                if not unfixed:
                    break
                b = min(unfixed,
                        key=lambda v: (_ROLE_PRIORITY[model.variables[v].role], v))
                for val in (0.0, 1.0):
                    child = dict(current)
                    child[b] = val
                    heapq.heappush(heap, (bound_est, next(seq), child))
                break
            bound = max(bound_est, relax.objective)
            node_log.append((bound_est, relax.objective))
            if inc_values is not None and bound >= inc_obj - prune_eps():
                break
            fractional = [b for b in all_binaries
                          if abs(relax.values[b] - round(relax.values[b])) > INT_TOL]
            if not fractional:
                fix_all = dict(current)
                for b in all_binaries:
                    fix_all.setdefault(b, float(round(relax.values[b])))
                try_incumbent(fix_all)
                break
            run_heuristic = (nodes == 1 or nodes % heuristic_every == 0
                             ) and data is not None
            if run_heuristic:
                starts = [(relax.values, None)]
                if nodes == 1:
                    seeds = _seed_values(model, data, topo, relax.values)
                    if model.kind == "octsvm":
                        d_all = {t: 1
                                 for t in range(1, topo.node_count + 1)}
                        for seed in seeds:
                            starts += [(seed, {1: 1}), (seed, d_all)]
                        starts.append((relax.values, d_all))
                    else:
                        starts += [(seed, None) for seed in seeds]
                for start, pattern in starts:
                    fix, _ = _refine_fixings(start, model, data, topo,
                                             template, passes=2,
                                             d_override=pattern)
                    if fix is not None:
                        try_incumbent(fix)
            bvar = select_branching(relax, model)
            pref = 1.0 if relax.values[bvar] >= 0.5 else 0.0
            other = dict(current)
            other[bvar] = 1.0 - pref
            heapq.heappush(heap, (bound, next(seq), other))
            current = dict(current)
            current[bvar] = pref
            bound_est = bound

    wall = time.perf_counter() - t0
    open_bound = min((entry[0] for entry in heap), default=math.inf)
    if inc_values is None:
        if stop_status is None and not heap:
            return SolveResult(None, math.inf, math.inf, "infeasible", nodes,
                               wall, node_log)
        return SolveResult(None, max(open_bound, -math.inf),
                           math.inf, stop_status or "gap-limit", nodes, wall,
                           node_log)
    best_bound = min(open_bound, inc_obj)
    gap = max(0.0, (inc_obj - best_bound) / max(1.0, abs(inc_obj)))
    if stop_status is None:
        status = "optimal"
        gap = min(gap, budget.gap_target)
    elif gap <= budget.gap_target:
        status = "optimal"
    else:
        status = stop_status
    incumbent = solution_from_values(model, inc_values)
    logger.info("branch-and-bound done: %s obj=%.8f bound=%.8f gap=%.2e nodes=%d",
                status, inc_obj, best_bound, gap, nodes)
    return SolveResult(incumbent, best_bound, gap, status, nodes, wall, node_log)


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


def _downward_closed_sets(topo: TreeTopology) -> list[frozenset[int]]:
    """All split-activation patterns closed under taking parents."""
    patterns: list[frozenset[int]] = []
    stack = [(frozenset(), (1,))]
    while stack:
        active, frontier = stack.pop()
        if not frontier:
            patterns.append(active)
            continue
        t, rest = frontier[0], frontier[1:]
        stack.append((active, rest))
        kids = topo.children(t)
        grown = rest + (kids if kids else ())
        stack.append((active | {t}, grown))
    return sorted(set(patterns), key=lambda s: (len(s), sorted(s)))


def _node_lp(data: Dataset, members: list[tuple[int, int]], xi_mask: int,
             active: bool, W: float, c1: float, m_err: float) -> tuple:
    """Optimal hinge cost of one node given its relabel pattern.

    ``members`` holds (obs index, direction) with direction -1 (must route
    left), +1 (right) or 0 (leaf level).  Returns (cost, w, w0) or None if
    infeasible (cannot happen: w = 0, w0 = 0 is always feasible).
    """
    m = len(members)
    p = data.p
    nv = p + 1 + m  # w, w0, e
    c = np.zeros(nv)
    c[p + 1:] = c1
    rows, rhs = [], []
    for k, (i, direction) in enumerate(members):
        x = data.features[i]
        y = float(data.labels[i])
        if (xi_mask >> k) & 1:
            y = -y
        row = np.zeros(nv)
        row[:p] = -y * x
        row[p] = -y
        row[p + 1 + k] = -1.0
        rows.append(row)
        rhs.append(-1.0)  # e_k >= 1 - y (w.x + w0)
        if direction != 0:
            row = np.zeros(nv)
            row[:p] = -direction * x
            row[p] = -direction
            rows.append(row)
            rhs.append(0.0)  # direction * (w.x + w0) >= 0
    lb = np.concatenate([np.full(p, -W if active else 0.0), [-W], np.zeros(m)])
    ub = np.concatenate([np.full(p, W if active else 0.0), [W],
                         np.full(m, m_err)])
    prog = ConicProgram(c, A_ub=np.array(rows), b_ub=np.array(rhs),
                        lb=lb, ub=ub)
    sol = prog.solve()
    if sol.status != "optimal":
        raise RuntimeError("node subproblem failed to solve")
    w = sol.values[:p].copy()
    w0 = float(sol.values[p])
    return float(sol.objective), w, w0


def _joint_socp(data: Dataset, nodes: list[tuple[list[tuple[int, int]], int]],
                W: float, c1: float, m_err: float) -> tuple:
    """Margin-coupled solve over the active nodes; returns (cost, per-node w/w0, delta)."""
    p = data.p
    offs = []
    nv = 1  # delta first
    for members, _ in nodes:
        offs.append(nv)
        nv += p + 1 + len(members)
    c = np.zeros(nv)
    lb = np.full(nv, -np.inf)
    ub = np.full(nv, np.inf)
    lb[0], ub[0] = 0.0, W * math.sqrt(p) / 2
    c[0] = 1.0
    rows, rhs, socs = [], [], []
    for (members, xi_mask), off in zip(nodes, offs):
        lb[off:off + p] = -W
        ub[off:off + p] = W
        lb[off + p], ub[off + p] = -W, W
        lb[off + p + 1: off + p + 1 + len(members)] = 0.0
        ub[off + p + 1: off + p + 1 + len(members)] = m_err
        c[off + p + 1: off + p + 1 + len(members)] = c1
        for k, (i, direction) in enumerate(members):
            x = data.features[i]
            y = float(data.labels[i])
            if (xi_mask >> k) & 1:
                y = -y
            row = np.zeros(nv)
            row[off:off + p] = -y * x
            row[off + p] = -y
            row[off + p + 1 + k] = -1.0
            rows.append(row)
            rhs.append(-1.0)
            if direction != 0:
                row = np.zeros(nv)
                row[off:off + p] = -direction * x
                row[off + p] = -direction
                rows.append(row)
                rhs.append(0.0)
        G = np.zeros((p, nv))
        G[:, off:off + p] = np.eye(p)
        r = np.zeros(nv)
        r[0] = 2.0
        socs.append(Soc(G, np.zeros(p), r, 0.0))
    prog = ConicProgram(c, A_ub=np.array(rows) if rows else None,
                        b_ub=np.array(rhs) if rhs else None,
                        socs=socs, lb=lb, ub=ub)
    sol = prog.solve()
    if sol.status != "optimal":
        raise RuntimeError("joint subproblem failed to solve")
    out = []
    for (members, _), off in zip(nodes, offs):
        out.append((sol.values[off:off + p].copy(), float(sol.values[off + p])))
    return float(sol.objective), out, float(sol.values[0])


def brute_force_solve(model: MinlpModel, data: Dataset,
                      max_patterns: int = 10 ** 6) -> SolveResult:
    """Exhaustive optimum by structural enumeration (verification oracle).

    Enumerates every routing (leaf assignment per observation) and every
    hierarchy-consistent split pattern; relabel patterns are enumerated per
    node and pruned with node-local lower bounds, with the margin-coupled
    subproblem re-solved only for candidate combinations that could still
    win.  Exact and deterministic; guarded against blow-up.
    """
    t0 = time.perf_counter()
    if model.kind == "resvm":
        return _brute_force_resvm(model, data, max_patterns)
    topo = model.topology
    cfg = model.config
    mc = model.mconstants
    n, p, W = data.n, data.p, cfg.coef_bound
    leaves = list(topo.leaf_level)
    d_patterns = _downward_closed_sets(topo)
    if len(d_patterns) * len(leaves) ** n > max_patterns:
        raise ValueError("instance too large for brute force")

    paths = {}
    for leaf in leaves:
        chain = [leaf]
        while chain[-1] != 1:
            chain.append(topo.parent[chain[-1]])
        paths[leaf] = list(reversed(chain))

    node_cache: dict[tuple, list] = {}

    def node_list(members: tuple[tuple[int, int], ...], active: bool) -> list:
        key = (members, active)
        got = node_cache.get(key)
        if got is None:
            got = []
            for xi_mask in range(1 << len(members)):
                cost, w, w0 = _node_lp(data, list(members), xi_mask, active,
                                       W, cfg.c1, mc.m_err)
                got.append((cost + cfg.c2 * bin(xi_mask).count("1"),
                            xi_mask, w, w0))
            got.sort(key=lambda r: (r[0], r[1]))
            node_cache[key] = got
        return got

    best_obj = math.inf
    best_detail = None
    enumerated = 0

    for routing in itertools.product(leaves, repeat=n):
        members: dict[int, list[tuple[int, int]]] = {
            t: [] for t in range(1, topo.node_count + 1)}
        for i, leaf in enumerate(routing):
            chain = paths[leaf]
            for k, t in enumerate(chain):
                if k + 1 < len(chain):
                    direction = 1 if chain[k + 1] == 2 * t + 1 else -1
                else:
                    direction = 0
                members[t].append((i, direction))
        members_t = {t: tuple(v) for t, v in members.items()}

        for active_set in d_patterns:
            enumerated += 1
            base = cfg.c3 * len(active_set)
            pruned_detail = {}
            skip = False
            for t in range(1, topo.node_count + 1):
                if t in active_set:
                    continue
                lst = node_list(members_t[t], active=False)
                base += lst[0][0]
                pruned_detail[t] = lst[0]
                if base >= best_obj - 1e-12:
                    skip = True
                    break
            if skip:
                continue
            active = sorted(active_set)
            lists = [node_list(members_t[t], active=True) for t in active]
            if not active:
                if base < best_obj - 1e-12:
                    best_obj = base
                    best_detail = (routing, active_set, {}, {}, 0.0,
                                   dict(pruned_detail))
                continue
            # best-first over the product of per-node relabel patterns
            local_best = best_obj - base
            start = tuple(0 for _ in active)
            heap = [(sum(lists[k][0][0] for k in range(len(active))), start)]
            seen = {start}
            while heap:
                lb, idx = heapq.heappop(heap)
                if lb >= local_best - 1e-12:
                    break
                chosen = [(list(members_t[t]), lists[k][idx[k]][1])
                          for k, t in enumerate(active)]
                joint_cost, hyperplanes, delta = _joint_socp(
                    data, chosen, W, cfg.c1, mc.m_err)
                total = joint_cost + sum(
                    cfg.c2 * bin(lists[k][idx[k]][1]).count("1")
                    for k in range(len(active)))
                if total < local_best - 1e-12:
                    local_best = total
                    best_obj = base + total
                    xi_by_node = {t: lists[k][idx[k]][1]
                                  for k, t in enumerate(active)}
                    planes = {t: hyperplanes[k] for k, t in enumerate(active)}
                    best_detail = (routing, active_set, xi_by_node, planes,
                                   delta, dict(pruned_detail))
                for k in range(len(active)):
                    nxt = list(idx)
                    nxt[k] += 1
                    if nxt[k] >= len(lists[k]):
                        continue
                    nxt = tuple(nxt)
                    if nxt in seen:
                        continue
                    seen.add(nxt)
                    heapq.heappush(heap, (
                        sum(lists[j][nxt[j]][0] for j in range(len(active))),
                        nxt))

    solution = _assemble_octsvm_solution(model, data, best_detail)
    obj = solution.objective
    wall = time.perf_counter() - t0
    return SolveResult(solution, obj, 0.0, "optimal", enumerated, wall)


def _assemble_octsvm_solution(model: MinlpModel, data: Dataset,
                              detail) -> Solution:
    routing, active_set, xi_by_node, planes, _, pruned_detail = detail
    topo = model.topology
    cfg = model.config
    n, p, T = data.n, data.p, topo.node_count

    w = {t: np.zeros(p) for t in range(1, T + 1)}
    w0 = {t: 0.0 for t in range(1, T + 1)}
    for t, (wt, wt0) in planes.items():
        w[t], w0[t] = np.asarray(wt), wt0
    for t, (_, _, wt, wt0) in pruned_detail.items():
        w0[t] = wt0  # pruned nodes keep a free intercept; w stays 0

    paths = {}
    for leaf in topo.leaf_level:
        chain = [leaf]
        while chain[-1] != 1:
            chain.append(topo.parent[chain[-1]])
        paths[leaf] = list(reversed(chain))

    membership = {t: [] for t in range(1, T + 1)}
    for i, leaf in enumerate(routing):
        for t in paths[leaf]:
            membership[t].append(i)

    xi = np.zeros((n, T), dtype=int)
    for t in range(1, T + 1):
        mask = xi_by_node.get(t, pruned_detail.get(t, (0, 0))[1])
        for k, i in enumerate(membership[t]):
            xi[i, t - 1] = (mask >> k) & 1

    # clean tiny solver noise so the audit sees exact structure
    for t in range(1, T + 1):
        w[t][np.abs(w[t]) < 1e-11] = 0.0
        if abs(w0[t]) < 1e-11:
            w0[t] = 0.0

    values = {}
    delta = max((0.5 * float(np.linalg.norm(w[t])) for t in range(1, T + 1)),
                default=0.0)
    values["delta"] = delta
    for t in range(1, T + 1):
        for j in range(1, p + 1):
            values[f"w_{t}_{j}"] = float(w[t][j - 1])
        values[f"w0_{t}"] = w0[t]
        values[f"d_{t}"] = 1.0 if t in active_set else 0.0
    for i in range(n):
        x = data.features[i]
        y = float(data.labels[i])
        leaf_chain = paths[routing[i]]
        for t in range(1, T + 1):
            member = t in leaf_chain
            values[f"z_{i + 1}_{t}"] = 1.0 if member else 0.0
            flip = xi[i, t - 1]
            values[f"xi_{i + 1}_{t}"] = float(flip)
            for j in range(1, p + 1):
                values[f"beta_{i + 1}_{t}_{j}"] = flip * float(w[t][j - 1])
            values[f"beta0_{i + 1}_{t}"] = flip * w0[t]
            m = float(np.dot(w[t], x) + w0[t])
            if member and t != leaf_chain[-1]:
                nxt = leaf_chain[leaf_chain.index(t) + 1]
                values[f"th_{i + 1}_{t}"] = 1.0 if nxt == 2 * t + 1 else 0.0
            else:
                values[f"th_{i + 1}_{t}"] = 1.0 if m >= 0.0 else 0.0
            if member:
                y_eff = -y if flip else y
                values[f"e_{i + 1}_{t}"] = max(0.0, 1.0 - y_eff * m)
            else:
                values[f"e_{i + 1}_{t}"] = 0.0
    sol = Solution(values, 0.0)
    sol.objective = model.objective_value(model.values_array(sol))
    return sol


def _brute_force_resvm(model: MinlpModel, data: Dataset,
                       max_patterns: int) -> SolveResult:
    if 2 ** data.n > max_patterns:
        raise ValueError("instance too large for brute force")
    t0 = time.perf_counter()
    template = RelaxationTemplate(model)
    xi_ids = [model.var_id(f"xi_{i}") for i in range(1, data.n + 1)]
    best_obj, best_values = math.inf, None
    for mask in range(2 ** data.n):
        fix = {xi_ids[i]: float((mask >> i) & 1) for i in range(data.n)}
        sub = template.solve(fix)
        if sub.status != "optimal":
            continue
        values = sub.values.copy()
        for var_id, value in fix.items():
            values[var_id] = value
        obj = model.objective_value(values)
        if obj < best_obj - 1e-12:
            best_obj, best_values = obj, values
    if best_values is None:
        return SolveResult(None, math.inf, math.inf, "infeasible",
                           2 ** data.n, time.perf_counter() - t0)
    sol = solution_from_values(model, best_values)
    return SolveResult(sol, best_obj, 0.0, "optimal", 2 ** data.n,
                       time.perf_counter() - t0)
