import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
from numpy import ndarray
from scipy.optimize import linprog

from .exceptions import Infeasible, IterationLimitReached, UnboundedSolution
from .simplex import simplex
from .tools import get_row_scales

logger = logging.getLogger(__name__)

BACKENDS = ("simplex", "highs")


@dataclass
class LpSolution:
    x: ndarray
    objective: float
    ineq_duals: ndarray
    eq_duals: ndarray
    iterations: int


def _scaled_rows(A: ndarray, b: ndarray):
    """
    returns row scales and the rescaled A, b
    """
    if len(b) == 0:
        return np.zeros(0), A, b
    equations = np.concatenate((A, np.resize(b, (len(b), 1))), axis=1)
    scales = get_row_scales(equations)
    return (
        scales,
        np.einsum("ij, i -> ij", A, scales),
        np.einsum("i, i -> i", b, scales),
    )


def solve_lp(
    c: ndarray,
    A_ub: Optional[ndarray] = None,
    b_ub: Optional[ndarray] = None,
    A_eq: Optional[ndarray] = None,
    b_eq: Optional[ndarray] = None,
    backend: str = "simplex",
    maxiter: Optional[int] = None,
) -> LpSolution:
    """
    Minimise c.x subject to A_ub x <= b_ub, A_eq x = b_eq and x >= 0.

    backend - "simplex" for the internal Bland tableau or "highs" for
    scipy's HiGHS, used to cross-check

    returns the optimum with duals in the unscaled problem's units
    (inequality duals nonpositive)
    """
    if backend not in BACKENDS:
        raise ValueError(f"Unknown LP backend {backend!r}")
    c = np.asarray(c, dtype=float)
    n = len(c)
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(A_ub)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(A_eq)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)

    coeff_scale = get_row_scales(np.array([c]))[0]
    le_scales, A_le_s, b_le_s = _scaled_rows(A_ub, b_ub)
    eq_scales, A_eq_s, b_eq_s = _scaled_rows(A_eq, b_eq)

    if backend == "simplex":
        res = simplex(
            c * coeff_scale,
            A_le_s,
            b_le_s,
            A_eq_s,
            b_eq_s,
            **({} if maxiter is None else {"maxiter": maxiter}),
        )
        x, nit = res.x, res.nit
        ineq, eq = res.ineq_duals, res.eq_duals
    else:
        options: Dict[str, Any] = {}
        if maxiter is not None:
            options["maxiter"] = maxiter
        res = linprog(
            c=c * coeff_scale,
            A_ub=A_le_s if len(b_ub) else None,
            b_ub=b_le_s if len(b_ub) else None,
            A_eq=A_eq_s if len(b_eq) else None,
            b_eq=b_eq_s if len(b_eq) else None,
            bounds=(0, None),
            method="highs",
            options=options,
        )
        assert res.status in [0, 1, 2, 3, 4]
        if res.status == 1:  # Iteration limit reached
            raise IterationLimitReached(res.nit)
        elif res.status == 2:  # Problem appears to be infeasible
            raise Infeasible()
        elif res.status == 3:  # Problem appears to be unbounded
            raise UnboundedSolution(np.full(n, np.inf))
        elif res.status == 4:
            raise RuntimeError(f"HiGHS failed: {res.message}")
        x, nit = res.x, res.nit
        ineq = (
            res.ineqlin.marginals if len(b_ub) else np.zeros(0)
        )
        eq = res.eqlin.marginals if len(b_eq) else np.zeros(0)

    # Undo the row and objective scaling on the duals
    ineq_duals = np.asarray(ineq) * le_scales / coeff_scale
    eq_duals = np.asarray(eq) * eq_scales / coeff_scale
    logger.debug("LP solved by %s in %d iterations", backend, nit)
    return LpSolution(
        x=np.asarray(x, dtype=float),
        objective=float(c @ x),
        ineq_duals=ineq_duals,
        eq_duals=eq_duals,
        iterations=int(nit),
    )
