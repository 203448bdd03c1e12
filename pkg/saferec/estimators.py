from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
from numpy import ndarray

from .core.exceptions import DegenerateWeights, EmptyData, UnknownAction
from .core.policies import Policy
from .core.trajectories import Dataset, DiscountSpec, Trajectory

UNDISCOUNTED = DiscountSpec(1.0)


class Estimator(Enum):
    IS = "is"
    PSIS = "psis"
    WIS = "wis"


@dataclass(frozen=True)
class IsEstimate:
    value: float
    weight: float


def log_ratios(data: Dataset, pi_e: Policy) -> ndarray:
    """
    returns log pi_e(a_t|s_t) - log bp_t for every flattened step;
    -inf where pi_e gives the logged action zero probability
    """
    if data.n_steps == 0:
        return np.zeros(0)
    bad = data.actions >= pi_e.n_actions
    if np.any(bad):
        raise UnknownAction(int(data.actions[bad][0]), pi_e.n_actions)
    probs = pi_e.probs_for(data.states)[np.arange(data.n_steps), data.actions]
    with np.errstate(divide="ignore"):
        return np.log(probs) - np.log(data.behavior_probs)


def _discounted_rewards(data: Dataset, disc: DiscountSpec) -> ndarray:
    return np.power(disc.gamma, data.step_index.astype(float)) * data.rewards


def is_values(
    data: Dataset, pi_e: Policy, disc: DiscountSpec = UNDISCOUNTED
) -> Tuple[ndarray, ndarray]:
    """
    Trajectory-wise importance sampling, R(tau) times the full product of
    ratios.

    returns the per-trajectory (values, weights)
    """
    if data.n == 0:
        return np.zeros(0), np.zeros(0)
    lr = log_ratios(data, pi_e)
    weights = np.exp(np.add.reduceat(lr, data.offsets))
    returns = np.add.reduceat(_discounted_rewards(data, disc), data.offsets)
    return returns * weights, weights


def per_step_is_values(
    data: Dataset, pi_e: Policy, disc: DiscountSpec = UNDISCOUNTED
) -> Tuple[ndarray, ndarray]:
    """
    Per-step importance sampling: each reward is weighted by the ratios of
    the steps up to and including it.

    returns the per-trajectory (values, weights)
    """
    if data.n == 0:
        return np.zeros(0), np.zeros(0)
    lr = log_ratios(data, pi_e)
    cumulative = np.empty_like(lr)
    for start, length in zip(data.offsets, data.lengths):
        cumulative[start : start + length] = np.cumsum(
            lr[start : start + length]
        )
    step_weights = np.exp(cumulative)
    contributions = _discounted_rewards(data, disc) * step_weights
    values = np.add.reduceat(contributions, data.offsets)
    ends = data.offsets + data.lengths - 1
    return values, step_weights[ends]


def is_estimate(
    traj: Trajectory, pi_e: Policy, disc: DiscountSpec = UNDISCOUNTED
) -> IsEstimate:
    values, weights = is_values(Dataset([traj]), pi_e, disc)
    return IsEstimate(float(values[0]), float(weights[0]))


def per_step_is(
    traj: Trajectory, pi_e: Policy, disc: DiscountSpec = UNDISCOUNTED
) -> IsEstimate:
    values, weights = per_step_is_values(Dataset([traj]), pi_e, disc)
    return IsEstimate(float(values[0]), float(weights[0]))


def wis_estimate(
    data: Dataset, pi_e: Policy, disc: DiscountSpec = UNDISCOUNTED
) -> float:
    """
    Weighted importance sampling: the sum of trajectory-wise importance
    sampled returns over the sum of full-trajectory weights
    """
    if data.n == 0:
        raise EmptyData()
    values, weights = is_values(data, pi_e, disc)
    denominator = float(np.sum(weights))
    if denominator == 0.0:
        raise DegenerateWeights(data.n)
    return float(np.sum(values)) / denominator


def importance_weighted_returns(
    data: Dataset,
    pi_e: Policy,
    estimator: Estimator = Estimator.PSIS,
    disc: DiscountSpec = UNDISCOUNTED,
) -> ndarray:
    """
    returns the per-trajectory samples X_i that the confidence bounds
    consume; for WIS the values are renormalised by the mean weight so that
    their mean is the WIS estimate
    """
    if data.n == 0:
        raise EmptyData()
    if estimator == Estimator.IS:
        return is_values(data, pi_e, disc)[0]
    elif estimator == Estimator.PSIS:
        return per_step_is_values(data, pi_e, disc)[0]
    else:
        values, weights = is_values(data, pi_e, disc)
        mean_weight = float(np.mean(weights))
        if mean_weight == 0.0:
            raise DegenerateWeights(data.n)
        return values / mean_weight
