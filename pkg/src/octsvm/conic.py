"""Continuous conic (LP/SOCP) solving on top of Clarabel.

Everything downstream talks to two entry points: ``ConicProgram.solve`` for
one-off problems and ``RelaxationTemplate`` for the branch-and-bound loop,
which re-solves the same structure with different binary fixings by editing
only the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

FEAS_TOL = 1e-7


@dataclass
class RelaxSolution:
    """Outcome of a continuous relaxation solve."""

    values: np.ndarray | None
    objective: float
    status: str  # "optimal" | "infeasible" | "numerical-failure"
    max_violation: float = float("inf")


@dataclass
class Soc:
    """|| G x + g0 || <= r . x + r0"""

    G: np.ndarray
    g0: np.ndarray
    r: np.ndarray
    r0: float


@dataclass
class ConicProgram:
    """min c.x  s.t.  A_eq x = b_eq, A_ub x <= b_ub, socs, lb <= x <= ub."""

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    socs: list[Soc] = field(default_factory=list)
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def solve(self) -> RelaxSolution:
        nv = len(self.c)
        rows, rhs, cones = [], [], []
        if self.A_eq is not None and len(self.b_eq):
            rows.append(sp.csc_matrix(self.A_eq))
            rhs.append(np.asarray(self.b_eq, dtype=float))
            cones.append(clarabel.ZeroConeT(len(self.b_eq)))
        nonneg_rows, nonneg_rhs = [], []
        if self.A_ub is not None and len(self.b_ub):
            nonneg_rows.append(sp.csc_matrix(self.A_ub))
            nonneg_rhs.append(np.asarray(self.b_ub, dtype=float))
        eye = sp.identity(nv, format="csc")
        if self.ub is not None:
            finite = np.isfinite(self.ub)
            if finite.any():
                nonneg_rows.append(eye[finite])
                nonneg_rhs.append(self.ub[finite])
        if self.lb is not None:
            finite = np.isfinite(self.lb)
            if finite.any():
                nonneg_rows.append(-eye[finite])
                nonneg_rhs.append(-self.lb[finite])
        if nonneg_rows:
            block = sp.vstack(nonneg_rows, format="csc")
            rows.append(block)
            rhs.append(np.concatenate(nonneg_rhs))
            cones.append(clarabel.NonnegativeConeT(block.shape[0]))
        for soc in self.socs:
            block = sp.csc_matrix(np.vstack([-soc.r.reshape(1, -1), -soc.G]))
            rows.append(block)
            rhs.append(np.concatenate([[soc.r0], soc.g0]))
            cones.append(clarabel.SecondOrderConeT(block.shape[0]))
        A = sp.vstack(rows, format="csc") if rows else sp.csc_matrix((0, nv))
        b = np.concatenate(rhs) if rhs else np.zeros(0)
        return _run_clarabel(np.asarray(self.c, dtype=float), A, b, cones,
                             self._violation)

    def _violation(self, x: np.ndarray) -> float:
        worst = 0.0
        if self.A_eq is not None and len(self.b_eq):
            worst = max(worst, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        if self.A_ub is not None and len(self.b_ub):
            worst = max(worst, float(np.max(self.A_ub @ x - self.b_ub, initial=0.0)))
        if self.ub is not None:
            worst = max(worst, float(np.max(x - self.ub, initial=0.0)))
        if self.lb is not None:
            worst = max(worst, float(np.max(self.lb - x, initial=0.0)))
        for soc in self.socs:
            worst = max(worst, float(np.linalg.norm(soc.G @ x + soc.g0)
                                     - (soc.r @ x + soc.r0)))
        return worst


def _settings() -> "clarabel.DefaultSettings":
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = 200
    return settings


def _run_clarabel(c, A, b, cones, violation_fn) -> RelaxSolution:
    P = sp.csc_matrix((len(c), len(c)))
    solver = clarabel.DefaultSolver(P, c, A, b, cones, _settings())
    result = solver.solve()
    status = str(result.status)
    if status in ("Solved", "AlmostSolved"):
        x = np.asarray(result.x)
        viol = violation_fn(x)
        if status == "AlmostSolved" and viol > 100 * FEAS_TOL:
            return RelaxSolution(None, float("nan"), "numerical-failure")
        return RelaxSolution(x, float(c @ x), "optimal", viol)
    if "PrimalInfeasible" in status:
        return RelaxSolution(None, float("inf"), "infeasible")
    return RelaxSolution(None, float("nan"), "numerical-failure")


class RelaxationTemplate:
    """Pre-assembled relaxation of a MinlpModel, re-solvable under binary fixings.

    Fixing a binary only tightens its two bound rows, so each solve copies the
    right-hand-side vector and edits a handful of entries.
    """

    def __init__(self, model):
        self.model = model
        nv = model.num_vars
        self.c = np.zeros(nv)
        for i, coeff in model.objective.items():
            self.c[i] = coeff

        eq_rows, eq_rhs = [], []
        ub_rows, ub_rhs = [], []
        for row in model.linear_rows:
            if row.sense == "==":
                eq_rows.append(row.coeffs)
                eq_rhs.append(row.rhs)
            elif row.sense == "<=":
                ub_rows.append(row.coeffs)
                ub_rhs.append(row.rhs)
            else:
                ub_rows.append({k: -v for k, v in row.coeffs.items()})
                ub_rhs.append(-row.rhs)

        blocks, rhs, cones = [], [], []
        if eq_rows:
            blocks.append(_sparse_from_dicts(eq_rows, nv))
            rhs.append(np.array(eq_rhs))
            cones.append(clarabel.ZeroConeT(len(eq_rows)))
        n_eq = len(eq_rows)

        bound_block = sp.vstack([sp.identity(nv, format="csc"),
                                 -sp.identity(nv, format="csc")], format="csc")
        lbs = np.array([v.lb for v in model.variables])
        ubs = np.array([v.ub for v in model.variables])
        nonneg = sp.vstack([_sparse_from_dicts(ub_rows, nv), bound_block],
                           format="csc") if ub_rows else bound_block
        blocks.append(nonneg)
        rhs.append(np.concatenate([np.array(ub_rhs), ubs, -lbs])
                   if ub_rows else np.concatenate([ubs, -lbs]))
        cones.append(clarabel.NonnegativeConeT(nonneg.shape[0]))
        self._ub_row = n_eq + len(ub_rows) + np.arange(nv)
        self._lb_row = n_eq + len(ub_rows) + nv + np.arange(nv)
        self._n_eq = n_eq
        self._n_nonneg = nonneg.shape[0]

        self._soc_dims = []
        for cone in model.cone_rows:
            dim = len(cone.vector) + 1
            rows = [{k: -v for k, v in cone.rhs[0].items()}]
            consts = [cone.rhs[1]]
            for coeffs, const in cone.vector:
                rows.append({k: -v for k, v in coeffs.items()})
                consts.append(const)
            blocks.append(_sparse_from_dicts(rows, nv))
            rhs.append(np.array(consts))
            cones.append(clarabel.SecondOrderConeT(dim))
            self._soc_dims.append(dim)

        self.A = sp.vstack(blocks, format="csc")
        self.b = np.concatenate(rhs)
        self.cones = cones
        self._P = sp.csc_matrix((nv, nv))
        self._lbs = lbs
        self._ubs = ubs

    def solve(self, fixings: dict[int, float] | None = None) -> RelaxSolution:
        b = self.b
        if fixings:
            b = b.copy()
            for var_id, value in fixings.items():
                if self.model.variables[var_id].kind != "binary":
                    raise ValueError(
                        f"cannot fix non-binary variable "
                        f"{self.model.variables[var_id].name}")
                b[self._ub_row[var_id]] = value
                b[self._lb_row[var_id]] = -value
        solver = clarabel.DefaultSolver(self._P, self.c, self.A, b,
                                        self.cones, _settings())
        result = solver.solve()
        status = str(result.status)
        if status in ("Solved", "AlmostSolved"):
            x = np.asarray(result.x)
            viol = self._violation(x, b)
            if viol > 1e-5:
                return RelaxSolution(None, float("nan"), "numerical-failure")
            return RelaxSolution(x, float(self.c @ x), "optimal", viol)
        if "PrimalInfeasible" in status:
            return RelaxSolution(None, float("inf"), "infeasible")
        return RelaxSolution(None, float("nan"), "numerical-failure")

    def _violation(self, x: np.ndarray, b: np.ndarray) -> float:
        s = b - self.A @ x
        worst = 0.0
        if self._n_eq:
            worst = max(worst, float(np.max(np.abs(s[: self._n_eq]))))
        lo = self._n_eq
        hi = lo + self._n_nonneg
        worst = max(worst, float(np.max(-s[lo:hi], initial=0.0)))
        off = hi
        for dim in self._soc_dims:
            worst = max(worst, float(np.linalg.norm(s[off + 1: off + dim])
                                     - s[off]))
            off += dim
        return worst


def _sparse_from_dicts(rows: list[dict[int, float]], nv: int) -> sp.csc_matrix:
    data, ri, ci = [], [], []
    for r, coeffs in enumerate(rows):
        for col, val in coeffs.items():
            ri.append(r)
            ci.append(col)
            data.append(val)
    return sp.csc_matrix((data, (ri, ci)), shape=(len(rows), nv))
