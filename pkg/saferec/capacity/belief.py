"""
Planning over beliefs about a user's hidden type, restricted to the beliefs
whose regret is worth the cost of tracking them. Everywhere else the planner
commits to the optimal policy of a single type.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy import ndarray

from ..core.exceptions import ImpossibleTransition
from .models import CapacitySpec, TypedMdpFamily

logger = logging.getLogger(__name__)

DEFAULT_MIN_PROB = 0.01
DEFAULT_SHAPE = 10.0
BELIEF_DECIMALS = 12

BeliefKey = Tuple[int, int, Tuple[float, ...]]


def belief_key(t: int, s: int, b: ndarray) -> BeliefKey:
    return t, s, tuple(np.round(b, BELIEF_DECIMALS).tolist())


def belief_update(
    family: TypedMdpFamily, b: ndarray, s: int, a: int, s_next: int
) -> ndarray:
    """
    returns b'(theta) proportional to b(theta) T_theta(s_next | s, a)
    """
    posterior = b * family.transitions[:, s, a, s_next]
    total = posterior.sum()
    if total <= 0:
        raise ImpossibleTransition(s, a, s_next)
    return posterior / total


def priced_rewards(
    family: TypedMdpFamily,
    caps: Optional[CapacitySpec] = None,
    prices: Optional[ndarray] = None,
) -> ndarray:
    """
    prices - (horizon, n_pois) charge per unit of expected POI use

    returns (n_types, horizon, n_states, n_actions) rewards less the
    charge for the capacity they consume
    """
    K, S, A = family.rewards.shape
    out = np.broadcast_to(
        family.rewards[:, None], (K, family.horizon, S, A)
    ).copy()
    if caps is not None and prices is not None:
        charge = np.einsum("tr,rsa->tsa", prices, caps.consumption)
        out -= charge[None]
    return out


@dataclass
class TypePlans:
    """
    policies[j] - (horizon, n_states) optimal actions for type j
    values[i, j] - (horizon + 1, n_states) value of policies[j] when the
    user is of type i
    """

    policies: ndarray
    values: ndarray
    rewards: ndarray

    def cross_values(self, t: int, s: int) -> ndarray:
        return self.values[:, :, t, s]


def _evaluate(
    transitions: ndarray, rewards: ndarray, policy: ndarray
) -> ndarray:
    """
    transitions - (n_states, n_actions, n_states) of one type
    rewards - (horizon, n_states, n_actions) of that type
    """
    h, S, _ = rewards.shape
    values = np.zeros((h + 1, S))
    states = np.arange(S)
    for t in range(h - 1, -1, -1):
        a = policy[t]
        future = transitions[states, a] @ values[t + 1]
        values[t] = rewards[t, states, a] + future
    return values


def type_policies_and_cross_values(
    family: TypedMdpFamily,
    caps: Optional[CapacitySpec] = None,
    prices: Optional[ndarray] = None,
) -> TypePlans:
    """
    Finite-horizon optimal policy of every type, evaluated exactly on every
    type
    """
    rewards = priced_rewards(family, caps, prices)
    K, h, S, A = rewards.shape
    policies = np.zeros((K, h, S), dtype=int)
    for j in range(K):
        V = np.zeros(S)
        for t in range(h - 1, -1, -1):
            q = rewards[j, t] + family.transitions[j] @ V
            policies[j, t] = q.argmax(axis=1)
            V = q.max(axis=1)
    values = np.zeros((K, K, h + 1, S))
    for i in range(K):
        for j in range(K):
            values[i, j] = _evaluate(
                family.transitions[i], rewards[i], policies[j]
            )
    return TypePlans(policies, values, rewards)


def regret(b: ndarray, cross: ndarray) -> Tuple[float, int]:
    """
    cross - cross[i, j] is the value of type j's optimal policy on type i

    returns min over i of sum_j b_j (cross[j, j] - cross[j, i]) and the
    lowest minimising i
    """
    own = np.diag(cross)
    losses = b @ (own[:, None] - cross)
    i = int(np.argmin(losses))
    return max(float(losses[i]), 0.0), i


@dataclass
class BeliefPoint:
    t: int
    s: int
    b: ndarray
    prob: float
    regret: float

    @property
    def key(self) -> BeliefKey:
        return belief_key(self.t, self.s, self.b)


def regret_threshold(
    prob: float, root_regret: float, p: float, alpha: float
) -> float:
    return (
        math.exp(-alpha * (prob - p)) - math.exp(-alpha * (1 - p))
    ) * root_regret


def build_belief_space(
    family: TypedMdpFamily,
    plans: TypePlans,
    b0: Optional[ndarray] = None,
    p: float = DEFAULT_MIN_PROB,
    alpha: float = DEFAULT_SHAPE,
    keep_all: bool = False,
) -> Dict[BeliefKey, BeliefPoint]:
    """
    Breadth-first expansion of the beliefs reachable from (0, s0, b0). A
    belief is kept, and expanded, when its regret exceeds

        (exp(-alpha (P(b) - p)) - exp(-alpha (1 - p))) regret(b0)

    with P(b) the largest probability, over histories through kept
    beliefs, of observing a history that leads to it. The start belief is
    always kept; keep_all keeps everything.
    """
    b0 = family.prior if b0 is None else np.asarray(b0, dtype=float)
    root_regret, _ = regret(b0, plans.cross_values(0, family.s0))
    root = BeliefPoint(0, family.s0, b0, 1.0, root_regret)
    space = {root.key: root}
    level = [root]
    for t1 in range(1, family.horizon):
        candidates: Dict[BeliefKey, BeliefPoint] = {}
        for point in level:
            for a in range(family.n_actions):
                evidence = point.b @ family.transitions[:, point.s, a, :]
                for s1 in np.nonzero(evidence > 0)[0]:
                    s1 = int(s1)
                    b1 = belief_update(family, point.b, point.s, a, s1)
                    prob = point.prob * float(evidence[s1])
                    key = belief_key(t1, s1, b1)
                    if key in candidates:
                        candidates[key].prob = max(candidates[key].prob, prob)
                    else:
                        candidates[key] = BeliefPoint(t1, s1, b1, prob, 0.0)
        level = []
        for key, point in candidates.items():
            point.regret, _ = regret(
                point.b, plans.cross_values(t1, point.s)
            )
            if keep_all or point.regret > regret_threshold(
                point.prob, root_regret, p, alpha
            ):
                space[key] = point
                level.append(point)
        if not level:
            break
    logger.debug("Belief space: %d points kept", len(space))
    return space


@dataclass
class BeliefPlan:
    """
    actions - chosen action at every kept belief
    value - optimal (priced) value at the start belief
    expected_value - unpriced expected return of the closed-loop policy
    expected_load - (horizon, n_pois) expected POI use per time step
    commitments - probability of committing to each type's policy
    """

    actions: Dict[BeliefKey, int]
    value: float
    expected_value: float
    expected_load: ndarray
    commitments: ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_beliefs(self) -> int:
        return len(self.actions)


def _commit_choice(
    plans: TypePlans, b: ndarray, t: int, s: int
) -> Tuple[int, float]:
    """
    returns the type whose policy does best in expectation under b, and
    that expected value
    """
    scores = np.diag(b) @ plans.cross_values(t, s)
    totals = scores.sum(axis=0)
    j = int(np.argmax(totals))
    return j, float(totals[j])


def _backward(
    family: TypedMdpFamily,
    space: Dict[BeliefKey, BeliefPoint],
    plans: TypePlans,
) -> Tuple[Dict[BeliefKey, int], Dict[BeliefKey, float]]:
    h = family.horizon
    actions: Dict[BeliefKey, int] = {}
    values: Dict[BeliefKey, float] = {}
    for key in sorted(space, key=lambda k: -k[0]):
        point = space[key]
        t, s, b = point.t, point.s, point.b
        q = np.zeros(family.n_actions)
        for a in range(family.n_actions):
            q[a] = float(b @ plans.rewards[:, t, s, a])
            if t + 1 >= h:
                continue
            evidence = b @ family.transitions[:, s, a, :]
            for s1 in np.nonzero(evidence > 0)[0]:
                s1 = int(s1)
                b1 = belief_update(family, b, s, a, s1)
                key1 = belief_key(t + 1, s1, b1)
                if key1 in values:
                    future = values[key1]
                else:
                    _, future = _commit_choice(plans, b1, t + 1, s1)
                q[a] += float(evidence[s1]) * future
        actions[key] = int(np.argmax(q))
        values[key] = float(q[actions[key]])
    return actions, values


def forward_evaluate(
    family: TypedMdpFamily,
    plans: TypePlans,
    actions: Dict[BeliefKey, int],
    caps: Optional[CapacitySpec] = None,
    b0: Optional[ndarray] = None,
) -> Tuple[float, ndarray, ndarray]:
    """
    Exact expected return and POI use of the closed-loop policy that acts
    from actions at tracked beliefs and, on leaving them, commits to the best
    single-type policy. Probability mass is tracked per type.

    returns (expected unpriced return, (horizon, n_pois) expected load,
    probability of committing to each type's policy)
    """
    b0 = family.prior if b0 is None else np.asarray(b0, dtype=float)
    K, S, A = family.rewards.shape
    h = family.horizon
    m = 0 if caps is None else caps.n_pois
    consumption = (
        np.zeros((0, S, A)) if caps is None else caps.consumption
    )
    load = np.zeros((h, m))
    value = 0.0
    # committed[j][t] is the (type, state) mass following type j's policy
    committed = np.zeros((K, h, K, S))
    tracked: List[Dict[BeliefKey, ndarray]] = [dict() for _ in range(h)]
    commitments = np.zeros(K)

    def enter(t: int, s: int, mass: ndarray) -> None:
        total = mass.sum()
        if total <= 0:
            return
        b = mass / total
        key = belief_key(t, s, b)
        if key in actions:
            tracked[t][key] = tracked[t].get(key, 0.0) + mass
        else:
            j, _ = _commit_choice(plans, b, t, s)
            committed[j, t, :, s] += mass
            commitments[j] += total

    enter(0, family.s0, b0.copy())
    for t in range(h):
        for key, mass in tracked[t].items():
            _, s, _ = key
            a = actions[key]
            value += float(mass @ family.rewards[:, s, a])
            load[t] += mass.sum() * consumption[:, s, a]
            if t + 1 < h:
                nxt = mass[:, None] * family.transitions[:, s, a, :]
                for s1 in np.nonzero(nxt.sum(axis=0) > 0)[0]:
                    enter(t + 1, int(s1), nxt[:, s1])
        for j in range(K):
            M = committed[j, t]
            if not M.any():
                continue
            a = plans.policies[j, t]
            states = np.arange(S)
            value += float(np.sum(M * family.rewards[:, states, a]))
            load[t] += np.einsum(
                "ks,rs->r", M, consumption[:, states, a]
            )
            if t + 1 < h:
                committed[j, t + 1] += np.einsum(
                    "ks,ksn->kn", M, family.transitions[:, states, a, :]
                )
    return value, load, commitments


def bounded_belief_plan(
    family: TypedMdpFamily,
    space: Dict[BeliefKey, BeliefPoint],
    plans: TypePlans,
    caps: Optional[CapacitySpec] = None,
) -> BeliefPlan:
    """
    Backward dynamic programming over the kept beliefs with the (priced)
    rewards of plans; a successor belief that was not kept is valued by the
    best single-type policy, which the closed loop then follows.

    Expected return and POI use come from an exact forward pass over the
    resulting closed loop.
    """
    actions, values = _backward(family, space, plans)
    root = min(space.values(), key=lambda pt: pt.t)
    expected_value, load, commitments = forward_evaluate(
        family, plans, actions, caps, root.b
    )
    return BeliefPlan(
        actions, values[root.key], expected_value, load, commitments
    )


def commit_plan(
    family: TypedMdpFamily,
    plans: TypePlans,
    caps: Optional[CapacitySpec] = None,
    b0: Optional[ndarray] = None,
) -> BeliefPlan:
    """
    Ignores the value of information: commits at the start to the single
    type policy that is best under the prior
    """
    b0 = family.prior if b0 is None else np.asarray(b0, dtype=float)
    _, root_value = _commit_choice(plans, b0, 0, family.s0)
    expected_value, load, commitments = forward_evaluate(
        family, plans, {}, caps, b0
    )
    return BeliefPlan({}, root_value, expected_value, load, commitments)
