import numpy as np
import pytest

from octsvm.conic import ConicProgram, RelaxationTemplate, Soc
from octsvm.core import Dataset, build_topology
from octsvm.formulation import (ModelConfig, Solution, build_octsvm_model,
                                build_resvm_model)
from octsvm.solver import (Budget, branch_and_bound, brute_force_solve,
                           check_feasible, primal_heuristic, select_branching,
                           solution_from_values, solve_relaxation)

from conftest import random_instance


def octsvm_model(data, depth, c1=1.0, c2=0.1, c3=0.01):
    topo = build_topology(depth)
    config = ModelConfig(c1=c1, c2=c2, c3=c3, depth=depth)
    return build_octsvm_model(data, topo, config), topo


class TestSolveRelaxation:
    def test_free_margin_is_zero(self):
        # min delta s.t. ||w|| <= 2*delta, w in [-10,10]^2
        program = ConicProgram(
            c=np.array([1.0, 0.0, 0.0]),
            socs=[Soc(G=np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
                      g0=np.zeros(2), r=np.array([2.0, 0.0, 0.0]), r0=0.0)],
            lb=np.array([0.0, -10.0, -10.0]),
            ub=np.array([10.0, 10.0, 10.0]))
        res = solve_relaxation(program)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(0.0, abs=1e-7)

    def test_two_point_margin_with_relabeling_off(self, two_point_1d):
        model = build_resvm_model(two_point_1d, c1=1e5, c2=1e5)
        template = RelaxationTemplate(model)
        fix = {i: 0.0 for i in model.ids_by_role("xi")}
        res = template.solve(fix)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(2.0, abs=1e-6)
        names = {v.name: res.values[i] for i, v in enumerate(model.variables)}
        assert names["w_1"] == pytest.approx(2.0, abs=1e-5)
        assert names["w0"] == pytest.approx(-1.0, abs=1e-5)

    def test_contradictory_fixing_infeasible(self):
        model, _ = octsvm_model(random_instance(1, 2, 1), 1)
        template = RelaxationTemplate(model)
        res = template.solve({model.var_id("z_1_2"): 1.0,
                              model.var_id("z_1_3"): 1.0})
        assert res.status == "infeasible"


class TestSelectBranching:
    def _relax(self, model, overrides):
        values = np.zeros(model.num_vars)
        for name, v in overrides.items():
            values[model.var_id(name)] = v
        from octsvm.conic import RelaxSolution
        return RelaxSolution(values, 0.0, "optimal", 0.0)

    def test_split_variables_first(self):
        model, _ = octsvm_model(random_instance(1, 2, 1), 1)
        relax = self._relax(model, {"d_1": 0.5, "th_1_1": 0.5})
        assert model.variables[select_branching(relax, model)].name == "d_1"

    def test_largest_fractionality_wins(self):
        model, _ = octsvm_model(random_instance(1, 2, 1), 1)
        relax = self._relax(model, {"z_1_2": 0.3, "z_2_2": 0.45})
        assert model.variables[select_branching(relax, model)].name == "z_2_2"

    def test_lowest_id_breaks_exact_ties(self):
        model, _ = octsvm_model(random_instance(1, 2, 1), 1)
        relax = self._relax(model, {"z_1_2": 0.3, "z_2_2": 0.3})
        assert model.variables[select_branching(relax, model)].name == "z_1_2"

    def test_integral_input_rejected(self):
        model, _ = octsvm_model(random_instance(1, 2, 1), 1)
        relax = self._relax(model, {"d_1": 1.0})
        with pytest.raises(ValueError):
            select_branching(relax, model)


class TestPrimalHeuristic:
    def test_feasible_incumbent_from_fractional_relaxation(self, quartet_1d):
        model, topo = octsvm_model(quartet_1d, 1, c1=10.0, c2=10.0)
        template = RelaxationTemplate(model)
        relax = template.solve({})
        sol = primal_heuristic(relax, model, quartet_1d, topo,
                               template=template)
        assert sol is not None
        assert sol.objective >= relax.objective - 1e-7
        assert check_feasible(sol, model, 1e-6).ok

    def test_failed_relaxation_gives_none(self, quartet_1d):
        from octsvm.conic import RelaxSolution
        model, topo = octsvm_model(quartet_1d, 1)
        bad = RelaxSolution(None, float("nan"), "numerical-failure")
        assert primal_heuristic(bad, model, quartet_1d, topo) is None


class TestBranchAndBound:
    def test_matches_oracle_on_tiny_instance(self):
        data = random_instance(0, 4, 1)
        model, topo = octsvm_model(data, 1)
        oracle = brute_force_solve(model, data)
        res = branch_and_bound(model, Budget(time_limit=120), data=data,
                               topo=topo)
        assert res.status == "optimal"
        assert res.incumbent.objective == pytest.approx(
            oracle.incumbent.objective, abs=1e-6)
        assert res.best_bound <= res.incumbent.objective + 1e-9

    def test_node_limit_one_returns_bound(self):
        data = random_instance(2, 4, 1)
        model, topo = octsvm_model(data, 1)
        res = branch_and_bound(model, Budget(time_limit=None, node_limit=1),
                               data=data, topo=topo)
        assert res.status in ("gap-limit", "time-limit", "optimal")
        assert res.nodes_explored == 1
        assert np.isfinite(res.best_bound)

    def test_all_binaries_fixed_solves_at_root(self, two_point_1d):
        model = build_resvm_model(two_point_1d, c1=1e5, c2=1e5)
        for i in model.ids_by_role("xi"):
            var = model.variables[i]
            var.lb = var.ub = 0.0
        res = branch_and_bound(model, Budget(time_limit=30))
        assert res.status == "optimal"
        assert res.nodes_explored == 1
        assert res.incumbent.objective == pytest.approx(2.0, abs=1e-6)

    def test_node_limited_runs_are_deterministic(self):
        data = random_instance(5, 5, 2)
        results = []
        for _ in range(2):
            model, topo = octsvm_model(data, 1)
            res = branch_and_bound(model,
                                   Budget(time_limit=None, node_limit=40),
                                   data=data, topo=topo)
            results.append(res)
        a, b = results
        assert a.status == b.status
        assert a.nodes_explored == b.nodes_explored
        assert a.best_bound == pytest.approx(b.best_bound, abs=0.0)
        if a.incumbent is None:
            assert b.incumbent is None
        else:
            assert a.incumbent.objective == b.incumbent.objective
            assert a.incumbent.values == b.incumbent.values

    def test_plunge_bounds_never_decrease(self):
        data = random_instance(6, 4, 1)
        model, topo = octsvm_model(data, 1)
        res = branch_and_bound(model, Budget(time_limit=120), data=data,
                               topo=topo)
        for parent_bound, relax_value in res.node_log:
            assert relax_value >= parent_bound - 1e-7


class TestBruteForce:
    def test_huge_split_cost_prunes_children(self):
        data = Dataset(np.array([[0.0], [1.0]]), np.array([-1, 1]))
        model, _ = octsvm_model(data, 1, c1=1.0, c2=10.0, c3=100.0)
        res = brute_force_solve(model, data)
        assert round(res.incumbent.values["d_2"]) == 0
        assert round(res.incumbent.values["d_3"]) == 0

    def test_free_relabeling_never_hurts(self):
        data = random_instance(4, 4, 1)
        m_free, _ = octsvm_model(data, 1, c1=1.0, c2=0.0)
        m_paid, _ = octsvm_model(data, 1, c1=1.0, c2=0.5)
        free = brute_force_solve(m_free, data).incumbent.objective
        paid = brute_force_solve(m_paid, data).incumbent.objective
        assert free <= paid + 1e-9

    def test_depth_zero_collapses_to_single_hyperplane(self):
        data = random_instance(9, 5, 2)
        model, _ = octsvm_model(data, 0, c1=10.0, c2=1.0)
        res = brute_force_solve(model, data)
        assert res.status == "optimal"
        assert check_feasible(res.incumbent, model, 1e-6).ok

    def test_guard_on_large_instances(self):
        data = random_instance(1, 40, 2)
        model, _ = octsvm_model(data, 2)
        with pytest.raises(ValueError):
            brute_force_solve(model, data)


class TestCheckFeasible:
    def test_oracle_optimum_passes(self):
        data = random_instance(8, 4, 2)
        model, _ = octsvm_model(data, 1)
        res = brute_force_solve(model, data)
        report = check_feasible(res.incumbent, model, 1e-6)
        assert report.ok
        assert report.max_violation <= 1e-6

    def _feasible_values(self, model, data):
        res = brute_force_solve(model, data)
        return dict(res.incumbent.values)

    def test_double_membership_violates_level_row(self):
        data = random_instance(8, 2, 1)
        model, _ = octsvm_model(data, 1)
        values = self._feasible_values(model, data)
        values["z_1_2"] = 1.0
        values["z_1_3"] = 1.0
        report = check_feasible(Solution(values, 0.0), model, 1e-6)
        assert report.by_family["octsvm_6"] == pytest.approx(1.0)

    def test_orphan_split_violates_hierarchy_row(self):
        data = random_instance(8, 2, 1)
        model, _ = octsvm_model(data, 1)
        values = self._feasible_values(model, data)
        values["d_1"] = 0.0
        values["d_2"] = 1.0
        report = check_feasible(Solution(values, 0.0), model, 1e-6)
        assert report.by_family["octsvm_5"] >= 1.0 - 1e-9
