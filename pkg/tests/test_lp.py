"""Unit tests for the dense two-phase simplex solver."""

import numpy as np
import pytest

from helpers import enumerate_lp, random_lp
from safeq.lp import (
    FEAS_TOL,
    LpProblem,
    LpSolution,
    LpStatus,
    lp_feasible,
    simplex_solve,
)


def solve(cost, E, b, **kw) -> LpSolution:
    return simplex_solve(LpProblem(cost, E, b), **kw)


class TestFrozenExamples:
    def test_prefers_cheapest_vertex(self):
        # min lam1 s.t. lam1 + lam2 = 1: all mass on the free variable
        sol = solve([1.0, 0.0], [[1.0, 1.0]], [1.0])
        assert sol.status is LpStatus.OPTIMAL
        np.testing.assert_allclose(sol.multipliers, [0.0, 1.0], atol=1e-12)
        assert sol.objective == pytest.approx(0.0, abs=1e-12)

    def test_scalar_interpolation(self):
        # interpolate the point 1 between stored samples at 0 and 2 whose
        # costs are 0 and 4: the midpoint costs 2
        sol = solve([0.0, 4.0], [[1.0, 1.0], [0.0, 2.0]], [1.0, 1.0])
        assert sol.status is LpStatus.OPTIMAL
        np.testing.assert_allclose(sol.multipliers, [0.5, 0.5], atol=1e-12)
        assert sol.objective == pytest.approx(2.0, abs=1e-12)

    def test_inconsistent_rows_are_infeasible(self):
        sol = solve([0.0, 0.0], [[1.0, 1.0], [1.0, -1.0]], [1.0, 3.0])
        assert sol.status is LpStatus.INFEASIBLE
        assert sol.multipliers is None

    def test_unbounded_ray(self):
        sol = solve([-1.0, 0.0], [[1.0, -1.0]], [0.0])
        assert sol.status is LpStatus.UNBOUNDED

    def test_cycling_prone_program_terminates(self):
        # classic degenerate program that cycles under a naive most-negative
        # rule; the Bland fallback must drive it to the optimum at -0.05
        E = [
            [1.0, 0.0, 0.0, 0.25, -60.0, -0.04, 9.0],
            [0.0, 1.0, 0.0, 0.50, -90.0, -0.02, 3.0],
            [0.0, 0.0, 1.0, 0.00, 0.0, 1.00, 0.0],
        ]
        b = [0.0, 0.0, 1.0]
        c = [0.0, 0.0, 0.0, -0.75, 150.0, -0.02, 6.0]
        sol = solve(c, E, b)
        assert sol.status is LpStatus.OPTIMAL
        assert sol.objective == pytest.approx(-0.05, abs=1e-9)

    def test_negative_rhs_rows_are_reoriented(self):
        sol = solve([1.0, 2.0], [[-1.0, -1.0]], [-1.0])
        assert sol.status is LpStatus.OPTIMAL
        np.testing.assert_allclose(sol.multipliers, [1.0, 0.0], atol=1e-12)

    def test_redundant_row_is_dropped(self):
        E = [[1.0, 1.0], [2.0, 2.0]]
        sol = solve([3.0, 1.0], E, [1.0, 2.0])
        assert sol.status is LpStatus.OPTIMAL
        assert sol.objective == pytest.approx(1.0, abs=1e-12)


class TestValidation:
    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            LpProblem([1.0, 2.0], [[1.0]], [1.0])
        with pytest.raises(ValueError):
            LpProblem([1.0], [[1.0]], [1.0, 2.0])

    def test_nonfinite_entries_rejected(self):
        with pytest.raises(ValueError):
            LpProblem([np.nan], [[1.0]], [1.0])
        with pytest.raises(ValueError):
            LpProblem([1.0], [[np.inf]], [1.0])

    def test_inputs_are_not_aliased(self):
        cost = np.array([1.0, 0.0])
        prob = LpProblem(cost, [[1.0, 1.0]], [1.0])
        cost[0] = 99.0
        assert prob.cost[0] == 1.0


class TestDeterminism:
    def test_bitwise_identical_resolves(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            c, E, b = random_lp(rng)
            first = simplex_solve(LpProblem(c, E, b))
            second = simplex_solve(LpProblem(c, E, b))
            assert first.status is second.status
            if first.status is LpStatus.OPTIMAL:
                assert first.multipliers.tobytes() == second.multipliers.tobytes()
                assert first.objective == second.objective
                assert first.basis == second.basis


class TestAgainstEnumerationOracle:
    def test_random_problems_match_oracle(self):
        rng = np.random.default_rng(2024)
        statuses = {"optimal": 0, "infeasible": 0, "unbounded": 0}
        for _ in range(300):
            c, E, b = random_lp(rng)
            expected_status, expected_obj = enumerate_lp(c, E, b)
            sol = simplex_solve(LpProblem(c, E, b))
            assert sol.status.value == expected_status, (c, E, b)
            if expected_status == "optimal":
                assert sol.objective == pytest.approx(expected_obj, abs=1e-8)
            statuses[expected_status] += 1
        # the generator must actually exercise all three outcomes
        assert min(statuses.values()) > 10


class TestSolutionInvariants:
    def test_feasibility_support_and_objective(self):
        rng = np.random.default_rng(99)
        checked = 0
        while checked < 100:
            c, E, b = random_lp(rng)
            sol = simplex_solve(LpProblem(c, E, b))
            if sol.status is not LpStatus.OPTIMAL:
                continue
            checked += 1
            lam = sol.multipliers
            assert np.abs(E @ lam - b).max() <= FEAS_TOL
            assert lam.min() >= -FEAS_TOL
            assert len(sol.basis) <= E.shape[0]
            # non-basic entries are exactly zero
            nonbasic = np.setdiff1d(np.arange(len(lam)), np.asarray(sol.basis))
            assert (lam[nonbasic] == 0.0).all()
            assert abs(sol.objective - float(c @ lam)) <= FEAS_TOL * (
                1.0 + abs(sol.objective)
            )


class TestPhaseOneOnly:
    def test_lp_feasible_true_and_false(self):
        assert lp_feasible([[1.0, 1.0]], [1.0])
        assert not lp_feasible([[1.0, 1.0], [1.0, -1.0]], [1.0, 3.0])

    def test_lp_feasible_agrees_with_oracle(self):
        rng = np.random.default_rng(4321)
        for _ in range(200):
            c, E, b = random_lp(rng)
            expected_status, _ = enumerate_lp(c, E, b)
            assert lp_feasible(E, b) == (expected_status != "infeasible")

    def test_rhs_dimension_checked(self):
        with pytest.raises(ValueError):
            lp_feasible([[1.0, 1.0]], [1.0, 2.0])
