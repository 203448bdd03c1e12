"""
Column generation over per-agent policies under expected capacity limits.

The master LP mixes each agent's known policies (columns) so that expected
POI use stays within capacity at every time step. Its capacity duals price
POI use for the next round of per-agent planning, which proposes new
columns until none improves the master.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from numpy import ndarray

from ..core.exceptions import Infeasible, IterationLimitReached
from ..core.solve import solve_lp
from ..core.tools import parallel_map
from .belief import (
    DEFAULT_MIN_PROB,
    DEFAULT_SHAPE,
    BeliefPlan,
    TypePlans,
    bounded_belief_plan,
    build_belief_space,
    commit_plan,
    forward_evaluate,
    priced_rewards,
    type_policies_and_cross_values,
)
from .models import CapacitySpec, TypedMdpFamily

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 200
DUAL_TOLERANCE = 1e-8
PLANNERS = ("belief", "mdp")


@dataclass
class Column:
    label: str
    value: float
    load: ndarray  # (horizon, n_pois)
    plan: Optional[BeliefPlan] = None


class ColumnSet:
    """
    The known policies of every agent with their exact expected return and
    POI use
    """

    columns: List[List[Column]]

    def __init__(self, n_agents: int):
        if n_agents < 1:
            raise ValueError("At least one agent is required")
        self.columns = [[] for _ in range(n_agents)]

    def __repr__(self):
        return f"<ColumnSet: {[len(c) for c in self.columns]}>"

    def __len__(self):
        return sum(len(c) for c in self.columns)

    @property
    def n_agents(self) -> int:
        return len(self.columns)

    def add(self, agent: int, column: Column) -> None:
        self.columns[agent].append(column)

    def flat(self) -> List[Column]:
        return [c for agent in self.columns for c in agent]

    def agent_of(self) -> ndarray:
        return np.concatenate(
            [np.full(len(c), i, dtype=int) for i, c in enumerate(self.columns)]
        )


@dataclass
class MasterSolution:
    x: List[ndarray]
    prices: ndarray  # (horizon, n_pois) capacity duals, nonnegative
    agent_duals: ndarray
    objective: float


def master_lp(
    columns: ColumnSet,
    caps: CapacitySpec,
    horizon: int,
    backend: str = "simplex",
) -> MasterSolution:
    """
    max sum_ij V_ij x_ij
    s.t. sum_ij E[C_ij][t, r] x_ij <= L_r for every t, r
         sum_j x_ij = 1 for every agent i
         x >= 0
    """
    if any(len(c) == 0 for c in columns.columns):
        raise ValueError("Every agent needs at least one column")
    flat = columns.flat()
    agent = columns.agent_of()
    n, m = len(flat), caps.n_pois
    values = np.array([c.value for c in flat])
    A_ub = np.stack([c.load.reshape(-1) for c in flat], axis=1)
    b_ub = np.tile(caps.limits, horizon)
    A_eq = np.zeros((columns.n_agents, n))
    A_eq[agent, np.arange(n)] = 1.0
    b_eq = np.ones(columns.n_agents)

    solution = solve_lp(
        -values, A_ub, b_ub, A_eq, b_eq, backend=backend
    )
    prices = np.maximum(-solution.ineq_duals, 0.0).reshape(horizon, m)
    splits = np.cumsum([len(c) for c in columns.columns])[:-1]
    return MasterSolution(
        x=np.split(np.clip(solution.x, 0.0, None), splits),
        prices=prices,
        agent_duals=-solution.eq_duals,
        objective=-solution.objective,
    )


def _null_column(family: TypedMdpFamily, caps: CapacitySpec) -> Column:
    """
    The policy that never recommends, which uses no capacity
    """
    K, h, S = family.n_types, family.horizon, family.n_states
    never = TypePlans(
        policies=np.full((K, h, S), caps.null_action, dtype=int),
        values=np.zeros((K, K, h + 1, S)),
        rewards=priced_rewards(family),
    )
    value, load, _ = forward_evaluate(family, never, {}, caps)
    return Column("null", value, load)


def price_agent(
    family: TypedMdpFamily,
    caps: CapacitySpec,
    prices: Optional[ndarray],
    planner: str = "belief",
    p: float = DEFAULT_MIN_PROB,
    alpha: float = DEFAULT_SHAPE,
) -> BeliefPlan:
    """
    Plans one agent against rewards less the priced POI use
    """
    if planner not in PLANNERS:
        raise ValueError(f"Unknown planner {planner!r}")
    plans = type_policies_and_cross_values(family, caps, prices)
    if planner == "mdp":
        return commit_plan(family, plans, caps)
    space = build_belief_space(family, plans, p=p, alpha=alpha)
    return bounded_belief_plan(family, space, plans, caps)


@dataclass
class CgResult:
    columns: ColumnSet
    master: MasterSolution
    history: List[float] = field(default_factory=list)
    iterations: int = 0

    @property
    def objective(self) -> float:
        return self.master.objective

    @cached_property
    def load_matrix(self) -> ndarray:
        """
        returns the (horizon, n_pois) expected POI use of the final mix
        """
        return sum(
            weight * column.load
            for agent, x in enumerate(self.master.x)
            for weight, column in zip(x, self.columns.columns[agent])
        )

    def mix_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "agent": agent,
                    "column": j,
                    "label": column.label,
                    "weight": float(x[j]),
                    "value": column.value,
                }
                for agent, x in enumerate(self.master.x)
                for j, column in enumerate(self.columns.columns[agent])
            ]
        )

    def load_frame(self, caps: CapacitySpec) -> pd.DataFrame:
        h = self.load_matrix.shape[0]
        return pd.DataFrame(
            [
                {
                    "t": t,
                    "poi": format(poi),
                    "load": float(self.load_matrix[t, poi.index]),
                    "limit": poi.limit,
                    "price": float(self.master.prices[t, poi.index]),
                }
                for t in range(h)
                for poi in caps.pois
            ]
        )


def column_generation(
    families: Sequence[TypedMdpFamily],
    caps: CapacitySpec,
    tol: float = 1e-8,
    max_iter: int = DEFAULT_MAX_ITER,
    planner: str = "belief",
    p: float = DEFAULT_MIN_PROB,
    alpha: float = DEFAULT_SHAPE,
    backend: str = "simplex",
    workers: Optional[int] = None,
) -> CgResult:
    """
    families - one hidden-type family per agent, all on the same horizon
    tol - smallest reduced cost for a proposed column to be added

    Stops when no agent proposes an improving column or the capacity prices
    stop moving.
    """
    if len(families) == 0:
        raise ValueError("At least one agent is required")
    horizon = families[0].horizon
    if any(f.horizon != horizon for f in families):
        raise ValueError("Every agent must share the horizon")
    for family in families:
        caps.check(family)

    columns = ColumnSet(len(families))
    for i, family in enumerate(families):
        columns.add(i, _null_column(family, caps))

    history: List[float] = []
    previous: Optional[ndarray] = None
    for iteration in range(1, max_iter + 1):
        try:
            master = master_lp(columns, caps, horizon, backend)
        except Infeasible:
            raise AssertionError(
                "Master LP infeasible despite a null column per agent"
            )
        history.append(master.objective)
        logger.debug(
            "Column generation iteration %d: objective %.6g",
            iteration,
            master.objective,
        )
        if (
            previous is not None
            and np.max(np.abs(master.prices - previous), initial=0.0)
            <= DUAL_TOLERANCE
        ):
            break
        previous = master.prices

        proposals = parallel_map(
            lambda family: price_agent(
                family, caps, master.prices, planner, p, alpha
            ),
            families,
            workers,
        )
        added = 0
        for i, plan in enumerate(proposals):
            reduced = (
                plan.expected_value
                - float(np.sum(master.prices * plan.expected_load))
                - master.agent_duals[i]
            )
            if reduced > tol:
                columns.add(
                    i,
                    Column(
                        f"iteration {iteration}",
                        plan.expected_value,
                        plan.expected_load,
                        plan,
                    ),
                )
                added += 1
        if added == 0:
            break
    else:
        raise IterationLimitReached(max_iter)

    logger.info(
        "Column generation finished after %d iterations with %d columns: "
        "objective %.6g",
        iteration,
        len(columns),
        master.objective,
    )
    return CgResult(columns, master, history, iteration)
