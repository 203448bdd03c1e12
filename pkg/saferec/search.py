"""
Derivative-free policy search with a self-adaptive (mu, lambda) evolution
strategy.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy import ndarray

from .core.policies import Policy, SoftmaxLinearPolicy
from .core.tools import Seed, derive_rng

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 600


@dataclass
class EsResult:
    x: ndarray
    value: Optional[float]
    evaluations: int


def population_size(dimension: int) -> int:
    return 4 + int(math.floor(3 * math.log(max(dimension, 1))))


def evolve(
    fn: Callable[[ndarray], float],
    x0: ndarray,
    seed: Seed = 0,
    budget: int = DEFAULT_BUDGET,
    sigma0: float = 0.5,
) -> EsResult:
    """
    Maximise fn from x0.

    Each generation samples lambda offspring around the current mean, each
    with its own log-normally perturbed per-coordinate step sizes, and moves
    the mean and step sizes to those of the mu best offspring.

    budget - total evaluations of fn, x0 included; 0 returns x0 unevaluated

    returns the best point seen
    """
    x0 = np.asarray(x0, dtype=float)
    if budget <= 0:
        return EsResult(x0.copy(), None, 0)
    rng = derive_rng(seed)
    d = len(x0)
    lam = population_size(d)
    mu = lam // 2
    tau_global = 1.0 / math.sqrt(2.0 * d)
    tau_local = 1.0 / math.sqrt(2.0 * math.sqrt(d))

    best_x, best_f = x0.copy(), float(fn(x0))
    evaluations = 1
    mean = x0.copy()
    sigma = np.full(d, sigma0)
    generation = 0
    while evaluations < budget:
        n_offspring = min(lam, budget - evaluations)
        sigmas = sigma * np.exp(
            tau_global * rng.standard_normal((n_offspring, 1))
            + tau_local * rng.standard_normal((n_offspring, d))
        )
        offspring = mean + sigmas * rng.standard_normal((n_offspring, d))
        scores = np.array([float(fn(x)) for x in offspring])
        evaluations += n_offspring
        # Stable sort keeps the earlier offspring on equal scores
        order = np.argsort(-scores, kind="stable")
        if scores[order[0]] > best_f:
            best_x, best_f = offspring[order[0]].copy(), scores[order[0]]
        elite = order[: max(1, min(mu, n_offspring))]
        mean = offspring[elite].mean(axis=0)
        sigma = np.exp(np.log(sigmas[elite]).mean(axis=0))
        generation += 1
    logger.debug(
        "Evolution strategy: %d generations, best %.6g", generation, best_f
    )
    return EsResult(best_x, best_f, evaluations)


def policy_search(
    objective: Callable[[Policy], float],
    template: SoftmaxLinearPolicy,
    seed: Seed = 0,
    budget: int = DEFAULT_BUDGET,
    wrap: Optional[Callable[[SoftmaxLinearPolicy], Policy]] = None,
) -> Policy:
    """
    objective - score of a policy, to maximise
    template - softmax policy whose weights start the search
    wrap - turns each searched softmax policy into the policy that is
    scored and returned, e.g. a mixture with the behavior policy

    returns the best policy found; deterministic given seed
    """

    def build(params: ndarray) -> Policy:
        policy = template.with_params(params)
        return policy if wrap is None else wrap(policy)

    result = evolve(
        lambda params: objective(build(params)),
        template.params,
        seed,
        budget,
    )
    return build(result.x)
