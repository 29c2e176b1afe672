import math

import numpy as np
import pytest

from octsvm.conic import RelaxationTemplate
from octsvm.core import Dataset, build_topology
from octsvm.formulation import (MinlpModel, ModelConfig, Solution,
                                big_m_values, build_octsvm_model,
                                build_resvm_model, continuous_subproblem,
                                extract_tree, linearize_bilinear,
                                objective_of, write_lp)
from octsvm.solver import Budget, branch_and_bound, brute_force_solve

from conftest import random_instance


def octsvm_model(data, depth, c1=1.0, c2=0.1, c3=0.01):
    topo = build_topology(depth)
    config = ModelConfig(c1=c1, c2=c2, c3=c3, depth=depth)
    return build_octsvm_model(data, topo, config), topo


class TestModelConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(c1=0.0)
        with pytest.raises(ValueError):
            ModelConfig(c1=1.0, c2=-1.0)
        with pytest.raises(ValueError):
            ModelConfig(c1=1.0, depth=-1)
        with pytest.raises(ValueError):
            ModelConfig(c1=1.0, coef_bound=0.0)


class TestBigM:
    def test_p1_default_bound(self):
        mc = big_m_values(1, ModelConfig(c1=1.0))
        assert (mc.m_route, mc.m_err, mc.m_norm) == (20.0, 21.0, 10.0)

    def test_p4_default_bound(self):
        mc = big_m_values(4, ModelConfig(c1=1.0))
        assert (mc.m_route, mc.m_err, mc.m_norm) == (50.0, 51.0, 20.0)

    def test_unit_bound_norm(self):
        mc = big_m_values(2, ModelConfig(c1=1.0, coef_bound=1.0))
        assert mc.m_norm == pytest.approx(math.sqrt(2), abs=1e-5)


def expected_counts(n, p, D):
    T = 2 ** (D + 1) - 1
    bl = sum(1 for t in range(2, T + 1) if t % 2 == 0)
    br = T - 1 - bl
    cont = T * p + T + 1 + n * T + n * T * p + n * T
    binary = 3 * n * T + T
    rows = {
        "octsvm_1": T, "octsvm_2": n * T, "octsvm_3": 4 * n * T * (p + 1),
        "octsvm_4": T, "octsvm_5": T - 1, "octsvm_6": n * (D + 1),
        "octsvm_7": n * (T - 1), "octsvm_8": n * T, "octsvm_9": n * T,
        "octsvm_10": n * bl, "octsvm_11": n * br,
    }
    return cont, binary, {k: v for k, v in rows.items() if v}


class TestCensus:
    def test_tiny_instance_counts(self):
        model, _ = octsvm_model(random_instance(0, 2, 1), 1)
        census = model.variable_census()
        assert census["continuous"] == 25
        assert census["binary"] == 21
        assert model.constraint_census()["octsvm_3"] == 48

    def test_root_only_tree(self):
        model, _ = octsvm_model(random_instance(0, 3, 2), 0)
        rows = model.constraint_census()
        assert "octsvm_5" not in rows and "octsvm_7" not in rows
        assert rows["octsvm_6"] == 3

    def test_formulas_on_sample(self):
        for seed, (n, p, D) in enumerate([(3, 2, 1), (5, 3, 2), (2, 4, 0)]):
            model, _ = octsvm_model(random_instance(seed, n, p), D)
            cont, binary, rows = expected_counts(n, p, D)
            census = model.variable_census()
            assert census["continuous"] == cont
            assert census["binary"] == binary
            assert model.constraint_census() == rows


class TestLinearizeBilinear:
    def _rows(self, W=10.0):
        config = ModelConfig(c1=1.0, coef_bound=W)
        model = MinlpModel("octsvm", config, big_m_values(1, config), 1, 1)
        b = model.add_var("b", "continuous", -W, W, "beta", (1, 1, 1))
        x = model.add_var("x", "binary", 0, 1, "xi", (1, 1))
        w = model.add_var("w", "continuous", -W, W, "w", (1, 1))
        linearize_bilinear(model, b, x, w, W, "fam")
        return model, b, x, w

    def _beta_interval(self, model, values, b):
        lo, hi = -1e18, 1e18
        for row in model.linear_rows:
            cb = row.coeffs[b]
            rest = sum(c * values[i] for i, c in row.coeffs.items() if i != b)
            if row.sense == "<=":
                hi = min(hi, (row.rhs - rest) / cb)
            else:
                lo = max(lo, (row.rhs - rest) / cb)
        return lo, hi

    def test_xi_zero_forces_zero(self):
        model, b, x, w = self._rows()
        lo, hi = self._beta_interval(model, {x: 0.0, w: 7.0}, b)
        assert lo == pytest.approx(0.0) and hi == pytest.approx(0.0)

    def test_xi_one_forces_w(self):
        model, b, x, w = self._rows()
        lo, hi = self._beta_interval(model, {x: 1.0, w: -3.0}, b)
        assert lo == pytest.approx(-3.0) and hi == pytest.approx(-3.0)

    def test_fractional_envelope(self):
        model, b, x, w = self._rows()
        lo, hi = self._beta_interval(model, {x: 0.5, w: 4.0}, b)
        assert (lo, hi) == (pytest.approx(-1.0), pytest.approx(5.0))

    def test_exact_on_binary_grid(self):
        model, b, x, w = self._rows()
        for xv in (0.0, 1.0):
            for wv in (-10.0, -1.3, 0.0, 2.5, 10.0):
                lo, hi = self._beta_interval(model, {x: xv, w: wv}, b)
                assert lo == pytest.approx(xv * wv)
                assert hi == pytest.approx(xv * wv)


class TestResvm:
    def test_two_point_max_margin(self, two_point_1d):
        model = build_resvm_model(two_point_1d, c1=1e5, c2=1e5)
        res = branch_and_bound(model, Budget(time_limit=30),
                               data=two_point_1d)
        assert res.status == "optimal"
        sol = res.incumbent
        assert sol.objective == pytest.approx(2.0, abs=1e-6)
        assert sol.values["w_1"] == pytest.approx(2.0, abs=1e-5)
        assert sol.values["w0"] == pytest.approx(-1.0, abs=1e-5)
        assert all(round(sol.values[f"xi_{i}"]) == 0 for i in (1, 2))

    def test_three_point_relabels_the_cheap_flip(self):
        # enumeration over all 8 relabel patterns shows the optimum flips
        # the lone negative point (then w=0, w0=1 costs only c2), not the
        # middle one
        data = Dataset(np.array([[0.0], [0.1], [1.0]]), np.array([-1, 1, 1]))
        model = build_resvm_model(data, c1=10.0, c2=0.01)
        template = RelaxationTemplate(model)
        xi = model.ids_by_role("xi")
        best = None
        for mask in range(8):
            sub = template.solve({xi[i]: float((mask >> i) & 1)
                                  for i in range(3)})
            if sub.status == "optimal" and (best is None
                                            or sub.objective < best[0]):
                best = (sub.objective, mask)
        assert best[1] == 0b001
        assert best[0] == pytest.approx(0.01, abs=1e-6)
        res = branch_and_bound(model, Budget(time_limit=30), data=data)
        assert res.incumbent.objective == pytest.approx(best[0], abs=1e-6)
        assert [round(res.incumbent.values[f"xi_{i}"]) for i in (1, 2, 3)] \
            == [1, 0, 0]

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            build_resvm_model(Dataset(np.array([[0.0], [1.0]]),
                                      np.array([1, 1])), c1=1.0, c2=0.0)


class TestContinuousSubproblem:
    def test_non_binary_fixing_rejected(self):
        model, _ = octsvm_model(random_instance(1, 2, 1), 1)
        with pytest.raises(ValueError):
            continuous_subproblem(model, {model.var_id("delta"): 1.0})

    def test_empty_fixing_is_relaxation(self):
        model, _ = octsvm_model(random_instance(1, 2, 1), 1)
        sub = continuous_subproblem(model, {})
        res = sub.solve()
        assert res.status == "optimal"

    def test_contradictory_membership_is_infeasible(self):
        model, _ = octsvm_model(random_instance(1, 2, 1), 1)
        fixing = {model.var_id("z_1_2"): 1.0, model.var_id("z_1_3"): 1.0}
        assert continuous_subproblem(model, fixing).solve().status \
            == "infeasible"


class TestExtractTree:
    def _solved(self, data, depth=1):
        model, topo = octsvm_model(data, depth, c1=10.0, c2=10.0, c3=0.01)
        res = branch_and_bound(model, Budget(time_limit=60), data=data,
                               topo=topo)
        return model, topo, res.incumbent

    def test_pruned_nodes_zeroed(self, quartet_1d):
        model, topo, sol = self._solved(quartet_1d)
        tree = extract_tree(model, sol, topo, quartet_1d)
        for t in (1, 2, 3):
            if not tree.split_active[t]:
                assert np.all(tree.coefficients[t] == 0.0)
                assert tree.intercepts[t] == 0.0

    def test_routes_match_membership(self, quartet_1d):
        from octsvm.core import route
        model, topo, sol = self._solved(quartet_1d)
        tree = extract_tree(model, sol, topo, quartet_1d)
        for i in range(1, quartet_1d.n + 1):
            path = route(tree, quartet_1d.features[i - 1])
            for t in path:
                assert round(sol.values[f"z_{i}_{t}"]) == 1

    def test_non_integral_rejected(self, quartet_1d):
        model, topo = octsvm_model(quartet_1d, 1)
        values = {v.name: 0.0 for v in model.variables}
        values["d_1"] = 0.5
        with pytest.raises(ValueError):
            extract_tree(model, Solution(values, 0.0), topo, quartet_1d)


class TestObjectiveOf:
    def test_zero_solution(self):
        sol = Solution({"delta": 0.0, "e_1_1": 0.0, "xi_1_1": 0.0,
                        "d_1": 0.0}, 0.0)
        assert objective_of(sol, ModelConfig(c1=0.5, c2=0.1, c3=0.01)) == 0.0

    def test_arithmetic(self):
        sol = Solution({"delta": 1.0, "e_1_1": 2.0, "xi_1_1": 1.0,
                        "d_1": 1.0}, 0.0)
        value = objective_of(sol, ModelConfig(c1=0.5, c2=0.1, c3=0.01))
        assert value == pytest.approx(2.11)

    def test_agrees_with_solver(self, quartet_1d):
        model, topo = octsvm_model(quartet_1d, 1, c1=2.0, c2=0.5, c3=0.1)
        res = branch_and_bound(model, Budget(time_limit=60), data=quartet_1d,
                               topo=topo)
        recomputed = objective_of(res.incumbent, model.config)
        assert recomputed == pytest.approx(res.incumbent.objective, abs=1e-6)


class TestGlobalProperties:
    def test_label_flip_invariance(self):
        data = random_instance(7, 5, 2)
        flipped = Dataset(data.features, -data.labels)
        m1, _ = octsvm_model(data, 1)
        m2, _ = octsvm_model(flipped, 1)
        o1 = brute_force_solve(m1, data).incumbent.objective
        o2 = brute_force_solve(m2, flipped).incumbent.objective
        assert o1 == pytest.approx(o2, abs=1e-6)

    def test_objective_monotone_in_costs(self):
        data = random_instance(3, 4, 1)
        base = (1.0, 0.1, 0.01)
        ref_model, _ = octsvm_model(data, 1, *base)
        ref = brute_force_solve(ref_model, data).incumbent.objective
        for k in range(3):
            costs = list(base)
            costs[k] *= 10
            model, _ = octsvm_model(data, 1, *costs)
            value = brute_force_solve(model, data).incumbent.objective
            assert value >= ref - 1e-9


class TestWriteLp:
    def test_sections_and_counts(self, two_point_1d):
        model, _ = octsvm_model(two_point_1d, 1)
        text = write_lp(model)
        assert text.startswith("Minimize")
        for section in ("Subject To", "Bounds", "Binary", "End"):
            assert section in text
        assert text.count("\n d_") == 3  # binary section lists d_1..d_3

    def test_resvm_quadratic_objective_term(self, two_point_1d):
        model = build_resvm_model(two_point_1d, c1=1.0, c2=1.0)
        text = write_lp(model)
        assert "delta" in text
        assert "^ 2" in text
