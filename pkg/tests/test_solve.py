import numpy as np
import pytest

from saferec.core import solve_lp
from saferec.core.exceptions import (
    Infeasible,
    IterationLimitReached,
    UnboundedSolution,
)

BACKENDS = ["simplex", "highs"]


@pytest.mark.asyncio
class TestSolveLp:
    @pytest.mark.parametrize("backend", BACKENDS)
    async def test_two_constraints(self, backend):
        solution = solve_lp(
            [-1.0, -2.0],
            A_ub=[[1.0, 1.0], [1.0, 3.0]],
            b_ub=[4.0, 6.0],
            backend=backend,
        )
        assert np.allclose(solution.x, [3.0, 1.0])
        assert solution.objective == pytest.approx(-5.0)
        assert np.allclose(solution.ineq_duals, [-0.5, -0.5])

    @pytest.mark.parametrize("backend", BACKENDS)
    async def test_equality(self, backend):
        solution = solve_lp(
            [1.0, 2.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], backend=backend
        )
        assert np.allclose(solution.x, [1.0, 0.0])
        assert np.allclose(solution.eq_duals, [1.0])

    @pytest.mark.parametrize("backend", BACKENDS)
    async def test_row_scaling(self, backend):
        plain = solve_lp(
            [-1.0, -2.0], [[1.0, 1.0], [1.0, 3.0]], [4.0, 6.0], backend=backend
        )
        scaled = solve_lp(
            [-1.0, -2.0],
            [[1000.0, 1000.0], [0.001, 0.003]],
            [4000.0, 0.006],
            backend=backend,
        )
        assert np.allclose(plain.x, scaled.x)
        assert np.allclose(scaled.ineq_duals, [-0.0005, -500.0])

    @pytest.mark.parametrize("backend", BACKENDS)
    async def test_infeasible(self, backend):
        try:
            solve_lp([1.0], A_ub=[[1.0]], b_ub=[-1.0], backend=backend)
            assert False
        except Infeasible as e:
            assert str(e).startswith("Linear program is infeasible")

    async def test_unbounded(self):
        try:
            solve_lp([-1.0, 0.0], A_ub=[[1.0, -1.0]], b_ub=[1.0])
            assert False
        except UnboundedSolution as e:
            assert str(e).startswith("Solution unbounded")

    async def test_iteration_limit(self):
        try:
            solve_lp(
                [-1.0, -2.0],
                A_ub=[[1.0, 1.0], [1.0, 3.0]],
                b_ub=[4.0, 6.0],
                maxiter=0,
            )
            assert False
        except IterationLimitReached as e:
            assert str(e) == "Iteration limit reached with 0 iterations"

    async def test_unknown_backend(self):
        try:
            solve_lp([1.0], backend="glpk")
            assert False
        except ValueError as e:
            assert str(e) == "Unknown LP backend 'glpk'"
