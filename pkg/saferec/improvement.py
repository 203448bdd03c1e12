import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .bounds import DEFAULT_BOOTSTRAP, BoundMethod, BoundResult, bound_policy
from .core.exceptions import DegenerateWeights, EmptyData, TooFewSamples
from .core.policies import MixedPolicy, Policy, softmax_template
from .core.tools import Seed, derive_seed, parallel_map
from .core.trajectories import Dataset, DiscountSpec, State
from .estimators import UNDISCOUNTED, Estimator, wis_estimate
from .search import DEFAULT_BUDGET, policy_search
from .simulators import SimEnv, simulate

logger = logging.getLogger(__name__)

DEFAULT_ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
MAX_FOLDS = 20
TRAIN_SHARE = 5


@dataclass(frozen=True)
class SafetySpec:
    """
    rho_minus - performance floor a new policy must beat with confidence
    1 - delta
    """

    rho_minus: float
    delta: float = 0.05
    method: BoundMethod = BoundMethod.TT
    estimator: Estimator = Estimator.IS
    disc: DiscountSpec = UNDISCOUNTED
    bootstrap_b: int = DEFAULT_BOOTSTRAP
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.delta <= 0.5:
            raise ValueError(f"delta must lie in (0, 0.5], got {self.delta}")


class CandidateVariant(Enum):
    NONE = "none"
    KFOLD = "kfold"


@dataclass(frozen=True)
class CandidateSearchConfig:
    """
    k - folds for cross-validation; None uses min(20, n // 2)
    alpha_grid - blend weights tried towards the searched policy
    budget - objective evaluations per policy search
    switch_after_accept - incremental runs use k-fold search only until the
    first policy is accepted
    """

    variant: CandidateVariant = CandidateVariant.KFOLD
    k: Optional[int] = None
    alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID
    budget: int = DEFAULT_BUDGET
    seed: int = 0
    fourier_order: int = 3
    switch_after_accept: bool = True
    workers: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "alpha_grid", tuple(self.alpha_grid))
        if len(self.alpha_grid) == 0 or any(
            not 0.0 <= a <= 1.0 for a in self.alpha_grid
        ):
            raise ValueError("alpha_grid must be a nonempty subset of [0, 1]")
        if self.k is not None and self.k < 2:
            raise ValueError(f"k-fold search needs k >= 2, got {self.k}")

    def folds(self, n: int) -> int:
        return self.k if self.k is not None else min(MAX_FOLDS, n // 2)


class NoSolutionFound:
    """
    The refusal value of a safe improvement: no candidate passed
    """

    def __bool__(self):
        return False

    def __repr__(self):
        return "NSF"


NSF = NoSolutionFound()


def g_score(pi: Policy, data: Dataset, spec: SafetySpec) -> float:
    """
    returns the weighted importance sampling estimate of pi; -inf when no
    trajectory supports pi
    """
    try:
        return wis_estimate(data, pi, spec.disc)
    except DegenerateWeights:
        return -math.inf


def objective_f(
    pi: Policy, data: Dataset, spec: SafetySpec, m: int
) -> float:
    """
    The candidate-search objective: the WIS estimate of pi when its lower
    bound, predicted for a safety test on m trajectories, clears
    rho_minus; otherwise the predicted bound itself, or -inf when data is
    too small for the bound
    """
    try:
        predicted = bound_policy(
            data,
            pi,
            spec.delta,
            spec.method,
            spec.estimator,
            spec.disc,
            m=m,
            seed=spec.seed,
            bootstrap_b=spec.bootstrap_b,
        ).lower_bound
    except TooFewSamples:
        return -math.inf
    if predicted >= spec.rho_minus:
        return g_score(pi, data, spec)
    return predicted


def _template(states: Sequence[State], pi0: Policy, order: int):
    return softmax_template(pi0.n_actions, states, order)


def get_candidate_none(
    train: Dataset,
    pi0: Policy,
    spec: SafetySpec,
    m: int,
    cfg: CandidateSearchConfig = CandidateSearchConfig(),
    seed: Seed = 0,
    states: Optional[Sequence[State]] = None,
) -> Policy:
    """
    Searches all of train for the policy that maximises the objective; does
    nothing against overfitting
    """
    if train.n == 0:
        raise EmptyData()
    template = _template(
        train.states if states is None else states, pi0, cfg.fourier_order
    )
    return policy_search(
        lambda pi: objective_f(pi, train, spec, m),
        template,
        seed,
        cfg.budget,
    )


def _optimise_mixed(
    alpha: float,
    data: Dataset,
    pi0: Policy,
    spec: SafetySpec,
    m: int,
    cfg: CandidateSearchConfig,
    seed: Seed,
    states: Sequence[State],
) -> Policy:
    if alpha == 0.0:
        return pi0
    template = _template(states, pi0, cfg.fourier_order)
    return policy_search(
        lambda pi: objective_f(pi, data, spec, m),
        template,
        seed,
        cfg.budget,
        wrap=lambda pi: MixedPolicy(alpha, pi0, pi),
    )


def cross_validate(
    alpha: float,
    data: Dataset,
    pi0: Policy,
    spec: SafetySpec,
    m: int,
    cfg: CandidateSearchConfig = CandidateSearchConfig(),
    seed: Seed = 0,
    states: Optional[Sequence[State]] = None,
) -> float:
    """
    Predicts how a policy blended alpha of the way from pi0 would score on
    unseen data: each of k contiguous folds scores the policy optimised on
    the other folds

    returns the mean fold score
    """
    k = cfg.folds(data.n)
    if k < 2:
        raise ValueError(f"Cannot cross-validate {data.n} trajectories")
    states = data.states if states is None else states
    folds = np.array_split(np.arange(data.n), k)

    def score(i: int) -> float:
        held_out = data.take(folds[i])
        rest = data.take(
            np.concatenate([f for j, f in enumerate(folds) if j != i])
        )
        candidate = _optimise_mixed(
            alpha,
            rest,
            pi0,
            spec,
            m,
            cfg,
            derive_seed(seed, i),
            states,
        )
        return objective_f(candidate, held_out, spec, m)

    return float(np.mean(parallel_map(score, range(k), cfg.workers)))


def get_candidate_kfold(
    train: Dataset,
    pi0: Policy,
    spec: SafetySpec,
    m: int,
    cfg: CandidateSearchConfig = CandidateSearchConfig(),
    seed: Seed = 0,
    states: Optional[Sequence[State]] = None,
) -> Policy:
    """
    Chooses how far to move from pi0 by cross-validation over
    cfg.alpha_grid, then searches all of train at that blend weight
    """
    if train.n == 0:
        raise EmptyData()
    if cfg.folds(train.n) < 2:
        logger.info(
            "%d training trajectories are too few to cross-validate: "
            "searching without folds",
            train.n,
        )
        return get_candidate_none(train, pi0, spec, m, cfg, seed, states)
    states = train.states if states is None else states
    scores = [
        cross_validate(
            alpha, train, pi0, spec, m, cfg, derive_seed(seed, i), states
        )
        for i, alpha in enumerate(cfg.alpha_grid)
    ]
    best = int(np.argmax(scores))
    alpha = cfg.alpha_grid[best]
    logger.debug("Cross-validation scores %s: alpha %g", scores, alpha)
    return _optimise_mixed(
        alpha,
        train,
        pi0,
        spec,
        m,
        cfg,
        derive_seed(seed, len(cfg.alpha_grid)),
        states,
    )


@dataclass
class ImprovementResult:
    candidate: Policy
    bound: BoundResult
    rho_minus: float

    @property
    def accepted(self) -> bool:
        return self.bound.lower_bound >= self.rho_minus


def improve(
    train: Dataset,
    test: Dataset,
    pi0: Policy,
    spec: SafetySpec,
    cfg: CandidateSearchConfig = CandidateSearchConfig(),
    variant: Optional[CandidateVariant] = None,
    seed: Seed = 0,
    states: Optional[Sequence[State]] = None,
) -> ImprovementResult:
    """
    Selects a candidate on train, then bounds it once on test
    """
    if test.n == 0:
        raise EmptyData()
    variant = cfg.variant if variant is None else variant
    search = (
        get_candidate_kfold
        if variant == CandidateVariant.KFOLD
        else get_candidate_none
    )
    candidate = search(train, pi0, spec, test.n, cfg, seed, states)
    bound = bound_policy(
        test,
        candidate,
        spec.delta,
        spec.method,
        spec.estimator,
        spec.disc,
        seed=spec.seed,
        bootstrap_b=spec.bootstrap_b,
    )
    logger.info(
        "Safety test on %d trajectories: bound %.6g against floor %.6g",
        test.n,
        bound.lower_bound,
        spec.rho_minus,
    )
    return ImprovementResult(candidate, bound, spec.rho_minus)


def policy_improvement(
    train: Dataset,
    test: Dataset,
    pi0: Policy,
    spec: SafetySpec,
    cfg: CandidateSearchConfig = CandidateSearchConfig(),
    variant: Optional[CandidateVariant] = None,
    seed: Seed = 0,
) -> Union[Policy, NoSolutionFound]:
    """
    train - trajectories for the candidate search, disjoint from test
    test - trajectories reserved for the single safety test

    returns the candidate if its lower bound on test reaches
    spec.rho_minus, otherwise NSF
    """
    result = improve(train, test, pi0, spec, cfg, variant, seed)
    return result.candidate if result.accepted else NSF


def split_data(data: Dataset) -> Tuple[Dataset, Dataset]:
    """
    returns the first ceil(n / 5) trajectories for training and the rest
    for testing
    """
    return data.split(math.ceil(data.n / TRAIN_SHARE))


class DaedalusVariant(Enum):
    D1 = "d1"
    D2 = "d2"


@dataclass
class DaedalusIteration:
    iteration: int
    beta: int
    trajectories: int
    n_train: int
    n_test: int
    variant: str
    bound: Optional[float]
    score_before: float
    score_after: float
    accepted: bool
    incumbent: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class DaedalusRun:
    log: List[DaedalusIteration] = field(default_factory=list)
    library: List[Policy] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([entry.to_dict() for entry in self.log])

    @property
    def first_acceptance(self) -> Optional[int]:
        """
        returns the number of trajectories generated when the first policy
        was accepted
        """
        for entry in self.log:
            if entry.accepted:
                return entry.trajectories
        return None


def _incumbent(
    library: List[Policy], data: Dataset, spec: SafetySpec
) -> Tuple[int, float]:
    if data.n == 0:
        return 0, -math.inf
    scores = [g_score(pi, data, spec) for pi in library]
    best = int(np.argmax(scores))
    return best, scores[best]


def daedalus(
    env: SimEnv,
    pi0: Policy,
    spec: SafetySpec,
    betas: Sequence[int] = (50,),
    variant: DaedalusVariant = DaedalusVariant.D2,
    cfg: CandidateSearchConfig = CandidateSearchConfig(),
    seed: int = 0,
    iterations: int = 10,
) -> DaedalusRun:
    """
    Incremental safe improvement against a simulated environment.

    Each iteration runs the best library policy (by WIS on the current
    data) for beta trajectories, puts a fifth of them in the training set
    and the rest in the test set, and tries one safe improvement. Accepted
    policies join the library only if they also beat its best WIS score.

    betas - trajectories per iteration; iterations past the end of the list
    reuse its last value
    variant - D1 scores on the training set and empties the test set on
    acceptance; D2 scores on all the data and keeps the test set

    Episode streams depend only on seed and the episode count, so D1 and D2
    runs see identical data until their libraries diverge.
    """
    if len(betas) == 0 or any(b < TRAIN_SHARE for b in betas):
        raise ValueError(f"Every beta must be at least {TRAIN_SHARE}")
    run = DaedalusRun(library=[pi0])
    train, test = Dataset(), Dataset()
    generated = 0
    any_accepted = False
    states = env.observations
    for it in range(iterations):
        beta = betas[min(it, len(betas) - 1)]
        scored = train if variant == DaedalusVariant.D1 else train + test
        incumbent, _ = _incumbent(run.library, scored, spec)
        batch = simulate(
            env,
            run.library[incumbent],
            beta,
            seed,
            episode_offset=generated,
            behavior_id=str(incumbent),
        )
        generated += beta
        new_train, new_test = split_data(batch)
        train, test = train + new_train, test + new_test

        current = cfg.variant
        if any_accepted and cfg.switch_after_accept:
            current = CandidateVariant.NONE
        result = improve(
            train,
            test,
            pi0,
            spec,
            cfg,
            current,
            derive_seed(cfg.seed, it),
            states,
        )

        scored = train if variant == DaedalusVariant.D1 else train + test
        incumbent, before = _incumbent(run.library, scored, spec)
        accepted = False
        after = before
        if result.accepted:
            candidate_score = g_score(result.candidate, scored, spec)
            if candidate_score > before:
                run.library.append(result.candidate)
                accepted = any_accepted = True
                after = candidate_score
                incumbent = len(run.library) - 1
                if variant == DaedalusVariant.D1:
                    test = Dataset()
        run.log.append(
            DaedalusIteration(
                iteration=it,
                beta=beta,
                trajectories=generated,
                n_train=train.n,
                n_test=test.n,
                variant=current.value,
                bound=result.bound.lower_bound,
                score_before=before,
                score_after=after,
                accepted=accepted,
                incumbent=incumbent,
            )
        )
        logger.info(
            "Iteration %d: %d trajectories, bound %.6g, %s",
            it,
            generated,
            result.bound.lower_bound,
            "accepted" if accepted else "rejected",
        )
    return run
