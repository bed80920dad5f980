"""
Unit tests for lpcore.py module
"""
import numpy as np
import pytest
from scipy.optimize import linprog

from exact import dp_fixed_chains
from generators import RandomSpec, gen_random
from lpcore import (
    LpError,
    LpProblem,
    LpRow,
    LpStatus,
    WorkingSet,
    build_p2,
    check_kc,
    cutting_plane_solve,
    format_problem,
    kc_row,
    logk_eff,
    select_late_jobs,
    solve_lp,
    var_index,
)
from model import CompactSolution, canonical_family, empty_family, full_family, make_instance


def _problem(objective, rows):
    problem = LpProblem(len(objective), np.asarray(objective, dtype=float))
    for coeffs, relation, rhs in rows:
        problem.add_row(LpRow(coeffs, relation, rhs))
    return problem


class TestSolveLp:
    """Test the dense two-phase simplex"""

    def test_single_bound(self):
        """Test min x with x >= 3"""
        solution = solve_lp(_problem([1.0], [({0: 1.0}, ">=", 3.0)]))
        assert solution.status is LpStatus.OPTIMAL
        assert solution.objective == pytest.approx(3.0)
        assert solution.x[0] == pytest.approx(3.0)

    def test_infeasible(self):
        """Test x <= 1 and x >= 2"""
        solution = solve_lp(_problem([1.0], [({0: 1.0}, "<=", 1.0), ({0: 1.0}, ">=", 2.0)]))
        assert solution.status is LpStatus.INFEASIBLE

    def test_unbounded(self):
        """Test min -x with x >= 1"""
        solution = solve_lp(_problem([-1.0], [({0: 1.0}, ">=", 1.0)]))
        assert solution.status is LpStatus.UNBOUNDED

    def test_negative_rhs(self):
        """Test rows with negative right-hand sides"""
        solution = solve_lp(_problem([1.0, 1.0], [({0: -1.0, 1: -1.0}, "<=", -2.0)]))
        assert solution.objective == pytest.approx(2.0)

    def test_bad_rows_rejected(self):
        """Test relation, variable and finiteness checks"""
        problem = LpProblem(1, np.zeros(1))
        with pytest.raises(LpError):
            problem.add_row(LpRow({0: 1.0}, "==", 1.0))
        with pytest.raises(LpError):
            problem.add_row(LpRow({3: 1.0}, ">=", 1.0))
        with pytest.raises(LpError):
            problem.add_row(LpRow({0: float("nan")}, ">=", 1.0))

    @pytest.mark.parametrize("seed", range(15))
    def test_matches_scipy(self, seed):
        """Test optimum against scipy's HiGHS on random covering problems"""
        rng = np.random.default_rng(seed)
        num_vars, num_rows = 6, 5
        cost = rng.uniform(0.5, 3.0, size=num_vars)
        cover = rng.integers(0, 4, size=(num_rows, num_vars)).astype(float)
        cover[:, 0] += 1.0
        demand = rng.uniform(1.0, 5.0, size=num_rows)
        caps = np.full(num_vars, 10.0)

        rows = [({v: a for v, a in enumerate(row) if a}, ">=", float(b)) for row, b in zip(cover, demand)]
        rows += [({v: 1.0}, "<=", float(caps[v])) for v in range(num_vars)]
        solution = solve_lp(_problem(cost, rows))

        reference = linprog(
            cost,
            A_ub=np.vstack([-cover, np.eye(num_vars)]),
            b_ub=np.concatenate([-demand, caps]),
            bounds=[(0, None)] * num_vars,
            method="highs",
        )
        assert reference.status == 0
        assert solution.status is LpStatus.OPTIMAL
        assert solution.objective == pytest.approx(reference.fun, abs=1e-6)


class TestProgram:
    """Test rows of the compact program"""

    def test_row_counts(self, w2):
        """Test 4 simplex rows, 3 nesting rows and 2 cover rows"""
        problem = build_p2(w2, WorkingSet(canonical_family(w2)))
        labels = [row.label for row in problem.rows]
        assert problem.num_vars == 6
        assert sum(label.startswith("D1") for label in labels) == 4
        assert sum(label.startswith("D3") for label in labels) == 3
        assert sum(label.startswith("D2") for label in labels) == 2

    def test_objective(self, w2):
        """Test w_j collected on prefixes at the job's own layer"""
        problem = build_p2(w2, WorkingSet(canonical_family(w2)))
        assert list(problem.objective) == [3.0, 0.0, 4.0, 1.0, 1.0, 0.0]

    def test_kc_row_canonical(self, w2):
        """Test 2 x_1_1 + 2 x_1_3 >= 2"""
        row = kc_row(w2, canonical_family(w2), 1)
        assert row.coeffs == {var_index(w2, 1, 1): 2.0, var_index(w2, 1, 3): 2.0}
        assert row.rhs == 2.0

    def test_kc_row_empty_family(self, w2):
        """Test coefficients capped at theta = 4"""
        row = kc_row(w2, empty_family(w2), 1)
        assert row.coeffs == {0: 4.0, 1: 2.0, 2: 2.0}
        assert row.rhs == 4.0

    def test_kc_row_full_family(self, w2):
        """Test no row exists when theta is 0"""
        with pytest.raises(ValueError):
            kc_row(w2, full_family(w2), 1)

    def test_relaxed_single_job(self):
        """Test a lone job with d = gamma has a zero objective"""
        instance = make_instance([(1, 3, 2, 3)], [[1]])
        problem = build_p2(instance, WorkingSet(canonical_family(instance)))
        assert not problem.objective.any()
        assert solve_lp(problem).objective == pytest.approx(0.0)

    def test_objective_skips_job_due_at_gamma(self, w1):
        """Test job 3 with d = gamma = 6 puts no weight on its layer-2 variable"""
        problem = build_p2(w1, WorkingSet(canonical_family(w1)))
        assert problem.objective[var_index(w1, 2, 3)] == 0
        assert problem.objective[var_index(w1, 1, 1)] == 6
        assert problem.objective[var_index(w1, 1, 2)] == 1
        assert problem.objective.sum() == 7

    def test_format(self, w2):
        """Test the text dump"""
        text = format_problem(build_p2(w2, WorkingSet(canonical_family(w2))))
        assert text.startswith("min: 3*x_1_1 + 4*x_1_3 + 1*x_2_1 + 1*x_2_2\n")
        assert "D2[F0,i1]: 2*x_1_1 + 2*x_1_3 >= 2\n" in text

    def test_working_set_deduplicates(self, w2):
        """Test re-adding a family"""
        working = WorkingSet(canonical_family(w2))
        assert not working.add(canonical_family(w2))
        assert working.add(empty_family(w2))
        assert len(working) == 2


class TestSeparation:
    """Test the cover check and the cutting-plane loop"""

    def test_zero_point_violates(self, w2):
        """Test shortfall 2 at layer 1"""
        check = check_kc(w2, canonical_family(w2), CompactSolution.zeros(w2))
        assert check.max_violation == pytest.approx(2.0)
        assert check.worst_layer == 1

    def test_deferring_point_satisfies(self, w2):
        """Test a point deferring both paths at both layers"""
        point = CompactSolution.from_mapping(w2, {(1, 1): 1.0, (1, 3): 1.0, (2, 1): 1.0, (2, 3): 1.0})
        check = check_kc(w2, canonical_family(w2), point)
        assert check.max_violation == 0.0
        assert check.worst_layer is None

    def test_select_late_jobs(self):
        """Test the threshold is inclusive"""
        assert select_late_jobs({1: 0.25, 2: 0.2499, 3: 0.9}, 0.25) == frozenset({1, 3})

    def test_logk_eff(self):
        """Test the floor at 1"""
        assert logk_eff(1) == 1.0
        assert logk_eff(2) == 1.0
        assert logk_eff(16) == pytest.approx(np.log(16))

    def test_all_on_time_instance(self, w1):
        """Test zero objective certified in one round"""
        result = cutting_plane_solve(w1, 4.0)
        assert result.objective == pytest.approx(0.0, abs=1e-9)
        assert result.iterations == 1
        assert result.late == frozenset()

    def test_two_chain_bounds(self, w2):
        """Test 3 <= LP <= OPT and a certified final point"""
        result = cutting_plane_solve(w2, 4.0)
        assert 3.0 - 1e-7 <= result.objective <= 4.0 + 1e-7
        assert result.iterations <= w2.n * w2.k + 10
        assert all(b >= a - 1e-7 for a, b in zip(result.objective_history, result.objective_history[1:]))
        assert check_kc(w2, result.late_family, result.point).max_violation <= 1e-6

    def test_gamma_must_be_positive(self, w2):
        """Test gamma validation"""
        with pytest.raises(ValueError):
            cutting_plane_solve(w2, 0.0)

    @pytest.mark.parametrize("seed", range(8))
    def test_random_instances(self, seed):
        """Test termination and feasibility on random instances"""
        instance = gen_random(RandomSpec(n=6, q=2, k=3, seed=seed))
        result = cutting_plane_solve(instance, 4.0)
        working = WorkingSet(result.working_set[0])
        for family in result.working_set[1:]:
            working.add(family)
        problem = build_p2(instance, working)
        assert problem.max_row_violation(result.point.values.reshape(-1)) <= 1e-7
        assert result.objective <= dp_fixed_chains(instance).opt_penalty + 1e-7
        assert len(set(result.working_set)) == len(result.working_set)
        assert check_kc(instance, result.late_family, result.point).max_violation <= 1e-6
