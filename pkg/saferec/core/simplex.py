"""
Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves   min c.x   s.t.   A_ub x <= b_ub,   A_eq x = b_eq,   x >= 0
and reports the constraint duals alongside the primal solution.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from numpy import ndarray

from .exceptions import Infeasible, IterationLimitReached, UnboundedSolution

logger = logging.getLogger(__name__)


@dataclass
class SimplexResult:
    x: ndarray
    fun: float
    ineq_duals: ndarray
    eq_duals: ndarray
    nit: int


class Tableau:
    """
    Constraint rows of B^-1 [A | b] with a reduced-cost row on top.

    basis[i] is the column that is basic in constraint row i.
    """

    M: ndarray
    basis: List[int]

    def __init__(self, A: ndarray, b: ndarray, basis: List[int]):
        m, n = A.shape
        self.M = np.zeros((m + 1, n + 1))
        self.M[1:, :-1] = A
        self.M[1:, -1] = b
        self.basis = list(basis)

    @property
    def rows(self) -> ndarray:
        return self.M[1:]

    def set_costs(self, c: ndarray) -> None:
        """
        Prices out the basic columns so the top row holds reduced costs
        """
        self.M[0, :-1] = c
        self.M[0, -1] = 0.0
        for i, j in enumerate(self.basis):
            if c[j] != 0.0:
                self.M[0] -= c[j] * self.M[i + 1]

    @property
    def objective(self) -> float:
        return -self.M[0, -1]

    def pivot(self, row: int, column: int) -> None:
        r = row + 1
        self.M[r] /= self.M[r, column]
        for k in range(self.M.shape[0]):
            if k != r and self.M[k, column] != 0.0:
                self.M[k] -= self.M[k, column] * self.M[r]
        self.basis[row] = column

    def drop_row(self, row: int) -> None:
        self.M = np.delete(self.M, row + 1, axis=0)
        del self.basis[row]

    def solution(self, n_columns: int) -> ndarray:
        x = np.zeros(n_columns)
        for i, j in enumerate(self.basis):
            x[j] = self.M[i + 1, -1]
        return x


def _run(
    tableau: Tableau,
    allowed: ndarray,
    tol: float,
    maxiter: int,
    nit: int,
) -> int:
    """
    Pivots until no allowed column has a negative reduced cost.

    returns the cumulative iteration count
    """
    while True:
        costs = tableau.M[0, :-1]
        candidates = np.nonzero(allowed & (costs < -tol))[0]
        if len(candidates) == 0:
            return nit
        if nit >= maxiter:
            raise IterationLimitReached(nit)
        # Bland: lowest entering index
        column = int(candidates[0])
        entries = tableau.rows[:, column]
        rhs = tableau.rows[:, -1]
        positive = np.nonzero(entries > tol)[0]
        if len(positive) == 0:
            x = tableau.solution(len(costs))
            x[column] = np.inf
            raise UnboundedSolution(x)
        ratios = rhs[positive] / entries[positive]
        best = ratios.min()
        tied = positive[ratios <= best + tol * max(1.0, abs(best))]
        # Bland: among tied rows leave by the lowest basic index
        row = int(min(tied, key=lambda i: tableau.basis[i]))
        tableau.pivot(row, column)
        nit += 1


def simplex(
    c: ndarray,
    A_ub: Optional[ndarray] = None,
    b_ub: Optional[ndarray] = None,
    A_eq: Optional[ndarray] = None,
    b_eq: Optional[ndarray] = None,
    maxiter: int = 5000,
    tol: float = 1e-9,
) -> SimplexResult:
    """
    c - (n,) objective to minimise
    A_ub, b_ub - inequality rows A_ub x <= b_ub
    A_eq, b_eq - equality rows
    maxiter - pivot budget over both phases
    tol - pivoting and feasibility tolerance

    returns the optimum with duals y such that c - A^T y >= 0 on x's columns;
    inequality duals are nonpositive
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(A_ub)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(A_eq)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq

    # Standard form: [A_ub I; A_eq 0] [x; s] = b
    A_std = np.zeros((m, n + m_ub))
    A_std[:m_ub, :n] = A_ub
    A_std[:m_ub, n:] = np.eye(m_ub)
    A_std[m_ub:, :n] = A_eq
    b_std = np.concatenate((b_ub, b_eq))

    signs = np.where(b_std < 0, -1.0, 1.0)
    A_flipped = A_std * signs[:, None]
    b_flipped = b_std * signs

    needs_artificial = [i for i in range(m) if i >= m_ub or signs[i] < 0]
    n_art = len(needs_artificial)
    n_total = n + m_ub + n_art
    A_full = np.zeros((m, n_total))
    A_full[:, : n + m_ub] = A_flipped
    basis = [n + i if i < m_ub else -1 for i in range(m)]
    for k, i in enumerate(needs_artificial):
        A_full[i, n + m_ub + k] = 1.0
        basis[i] = n + m_ub + k

    tableau = Tableau(A_full, b_flipped, basis)
    is_artificial = np.zeros(n_total, dtype=bool)
    is_artificial[n + m_ub :] = True
    original_rows = list(range(m))

    nit = 0
    if n_art > 0:
        tableau.set_costs(is_artificial.astype(float))
        nit = _run(tableau, np.ones(n_total, dtype=bool), tol, maxiter, nit)
        residual = tableau.objective
        if residual > tol * max(1.0, float(np.abs(b_flipped).sum())):
            raise Infeasible(residual)
        # Drive zero-level artificials out of the basis
        row = 0
        while row < len(tableau.basis):
            if is_artificial[tableau.basis[row]]:
                entries = tableau.rows[row, : n + m_ub]
                candidates = np.nonzero(np.abs(entries) > tol)[0]
                if len(candidates) > 0:
                    tableau.pivot(row, int(candidates[0]))
                else:
                    logger.debug(
                        "Dropping redundant constraint %d",
                        original_rows[row],
                    )
                    tableau.drop_row(row)
                    del original_rows[row]
                    continue
            row += 1

    costs = np.zeros(n_total)
    costs[:n] = c
    tableau.set_costs(costs)
    nit = _run(tableau, ~is_artificial, tol, maxiter, nit)

    x_full = tableau.solution(n_total)
    x = x_full[:n]

    duals = np.zeros(m)
    if len(tableau.basis) > 0:
        B = A_std[np.ix_(original_rows, tableau.basis)]
        duals[original_rows] = np.linalg.solve(B.T, costs[tableau.basis])

    return SimplexResult(
        x=x,
        fun=float(c @ x),
        ineq_duals=duals[:m_ub],
        eq_duals=duals[m_ub:],
        nit=nit,
    )
