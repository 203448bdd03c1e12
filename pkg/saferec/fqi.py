import logging
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence, Union

import joblib
import numpy as np
import pandas as pd
from numpy import ndarray
from scipy.stats import entropy
from sklearn.ensemble import RandomForestRegressor

from .bounds import BoundMethod, BoundResult, bound_policy, lower_bound
from .core.exceptions import (
    ConstantTargetWarning,
    EmptyData,
    MissingActionWarning,
)
from .core.policies import EpsilonGreedyPolicy, Policy
from .core.tools import Seed, derive_seed, parallel_map
from .core.trajectories import (
    Dataset,
    DiscountSpec,
    State,
    Trajectory,
    state_features,
)
from .estimators import (
    UNDISCOUNTED,
    Estimator,
    importance_weighted_returns,
    per_step_is_values,
)

logger = logging.getLogger(__name__)

N_BINS = 10
FQI_DISCOUNT = DiscountSpec(0.9)
FOREST_TREES = 20
FOREST_DEPTH = 6


class Regressor(Protocol):
    def fit(self, X: ndarray, y: ndarray) -> "Regressor":
        ...

    def predict(self, X: ndarray) -> ndarray:
        ...


class RegressorKind(Enum):
    TABULAR = "tabular"
    FOREST = "forest"


def _bin_codes(
    x: ndarray, low: ndarray, high: ndarray, bins: int = N_BINS
) -> ndarray:
    """
    Equal-width bin index of every entry of x, per column
    """
    span = high - low
    safe_span = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (x - low) / safe_span, 0.0)
    return np.clip(np.floor(scaled * bins), 0, bins - 1).astype(int)


class TabularMean:
    """
    Mean target per cell of an equal-width grid over the features; cells
    unseen during fitting predict the overall mean
    """

    bins: int
    low: ndarray
    high: ndarray
    cells: Dict[tuple, float]
    fallback: float

    def __init__(self, bins: int = N_BINS):
        self.bins = bins

    def fit(self, X: ndarray, y: ndarray) -> "TabularMean":
        X = np.atleast_2d(X)
        self.low, self.high = X.min(axis=0), X.max(axis=0)
        codes = _bin_codes(X, self.low, self.high, self.bins)
        keys, inverse = np.unique(codes, axis=0, return_inverse=True)
        inverse = np.ravel(inverse)
        sums = np.bincount(inverse, weights=y, minlength=len(keys))
        counts = np.bincount(inverse, minlength=len(keys))
        self.cells = {
            tuple(key): float(total / count)
            for key, total, count in zip(keys, sums, counts)
        }
        self.fallback = float(np.mean(y))
        return self

    def predict(self, X: ndarray) -> ndarray:
        codes = _bin_codes(np.atleast_2d(X), self.low, self.high, self.bins)
        return np.array(
            [self.cells.get(tuple(row), self.fallback) for row in codes]
        )


class TreeEnsemble:
    """
    A small random forest: bagged depth-limited regression trees, each split
    drawn from a random sqrt(d) subset of the features
    """

    forest: RandomForestRegressor

    def __init__(
        self,
        seed: int = 0,
        n_trees: int = FOREST_TREES,
        max_depth: int = FOREST_DEPTH,
    ):
        self.forest = RandomForestRegressor(
            n_estimators=n_trees,
            max_depth=max_depth,
            max_features="sqrt",
            random_state=seed,
        )

    def fit(self, X: ndarray, y: ndarray) -> "TreeEnsemble":
        self.forest.fit(np.atleast_2d(X), y)
        return self

    def predict(self, X: ndarray) -> ndarray:
        return self.forest.predict(np.atleast_2d(X))


class ConstantRegressor:
    value: float

    def __init__(self, value: float = 0.0):
        self.value = value

    def fit(self, X: ndarray, y: ndarray) -> "ConstantRegressor":
        return self

    def predict(self, X: ndarray) -> ndarray:
        return np.full(len(np.atleast_2d(X)), self.value)


def make_regressor(kind: RegressorKind, seed: Seed, action: int) -> Regressor:
    if kind == RegressorKind.TABULAR:
        return TabularMean()
    return TreeEnsemble(seed=derive_seed(seed, action))


class QModel:
    """
    One regressor per action over the selected feature columns
    """

    regressors: List[Regressor]
    n_actions: int
    feature_mask: ndarray

    def __init__(
        self,
        regressors: Sequence[Regressor],
        feature_mask: Union[ndarray, Sequence[int]],
    ):
        self.regressors = list(regressors)
        self.n_actions = len(self.regressors)
        self.feature_mask = np.asarray(feature_mask, dtype=int)

    def __repr__(self):
        return (
            f"<QModel: {self.n_actions} actions, "
            f"features {self.feature_mask.tolist()}>"
        )

    def values_batch(self, states: Sequence[State]) -> ndarray:
        return self.values_features(state_features(states))

    def values_features(self, features: ndarray) -> ndarray:
        """
        returns the (N, n_actions) predicted values; identical rows are
        predicted once
        """
        if len(features) == 0:
            return np.zeros((0, self.n_actions))
        X = features[:, self.feature_mask]
        unique, inverse = np.unique(X, axis=0, return_inverse=True)
        predicted = np.column_stack(
            [r.predict(unique) for r in self.regressors]
        )
        return predicted[np.ravel(inverse)]

    def values(self, state: State) -> ndarray:
        return self.values_batch([state])[0]


def information_gains(
    features: ndarray, targets: ndarray, bins: int = N_BINS
) -> ndarray:
    """
    returns, per feature column, H(target) - H(target | feature) with both
    discretised into equal-width bins (natural log)
    """
    features = np.atleast_2d(features)
    targets = np.asarray(targets, dtype=float)
    y = _bin_codes(targets, targets.min(), targets.max(), bins)
    h_y = entropy(np.bincount(y, minlength=bins))
    X = _bin_codes(features, features.min(axis=0), features.max(axis=0), bins)
    gains = np.zeros(X.shape[1])
    n = len(y)
    for j in range(X.shape[1]):
        joint = np.bincount(X[:, j] * bins + y, minlength=bins * bins)
        joint = joint.reshape(bins, bins)
        x_counts = joint.sum(axis=1)
        conditional = sum(
            x_counts[b] / n * entropy(joint[b])
            for b in range(bins)
            if x_counts[b] > 0
        )
        gains[j] = h_y - conditional
    return gains


def information_gain_select(
    features: ndarray, targets: ndarray, keep_fraction: float
) -> ndarray:
    """
    keep_fraction - share of the features to keep, at least one

    returns the sorted indices of the most informative features; equal gains
    prefer the lower index
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(
            f"keep_fraction must lie in (0, 1], got {keep_fraction}"
        )
    features = np.atleast_2d(features)
    d = features.shape[1]
    targets = np.asarray(targets, dtype=float)
    if np.ptp(targets) == 0.0:
        warnings.warn(
            "Regression target is constant: keeping every feature",
            ConstantTargetWarning,
        )
        return np.arange(d)
    keep = max(1, int(round(keep_fraction * d)))
    gains = information_gains(features, targets)
    ranked = np.argsort(-gains, kind="stable")
    return np.sort(ranked[:keep])


def _fit_q(
    features: ndarray,
    actions: ndarray,
    labels: ndarray,
    n_actions: int,
    feature_mask: ndarray,
    kind: RegressorKind,
    seed: Seed,
    workers: Optional[int],
) -> QModel:
    X = features[:, feature_mask]

    def fit(a: int) -> Regressor:
        rows = actions == a
        if not np.any(rows):
            warnings.warn(
                f"Action {a} never appears in the training data: "
                "predicting 0",
                MissingActionWarning,
            )
            return ConstantRegressor(0.0)
        return make_regressor(kind, seed, a).fit(X[rows], labels[rows])

    return QModel(parallel_map(fit, range(n_actions), workers), feature_mask)


def greedy_train(
    train: Dataset,
    epsilon: float = 0.1,
    seed: Seed = 0,
    regressor: RegressorKind = RegressorKind.TABULAR,
    n_actions: Optional[int] = None,
    workers: Optional[int] = None,
) -> EpsilonGreedyPolicy:
    """
    Fits one regressor per action from state features to the immediate
    reward and acts epsilon-greedily on the predictions.

    n_actions - size of the action set; defaults to the largest logged id
    plus one
    """
    if train.n == 0:
        raise EmptyData()
    n_actions = train.n_actions if n_actions is None else n_actions
    features = train.features
    q = _fit_q(
        features,
        train.actions,
        train.rewards,
        n_actions,
        np.arange(features.shape[1]),
        regressor,
        seed,
        workers,
    )
    return EpsilonGreedyPolicy(q, epsilon)


@dataclass
class FqiResult:
    policy: EpsilonGreedyPolicy
    bound: BoundResult
    iteration_bounds: List[float]
    best_iteration: int
    test_bound: Optional[BoundResult] = None


def fqi_train(
    train: Dataset,
    val: Dataset,
    K: int,
    disc: DiscountSpec = FQI_DISCOUNT,
    epsilon: float = 0.1,
    delta: float = 0.05,
    method: BoundMethod = BoundMethod.TT,
    seed: Seed = 0,
    test: Optional[Dataset] = None,
    keep_fraction: float = 1.0,
    estimator: Estimator = Estimator.PSIS,
    regressor: RegressorKind = RegressorKind.TABULAR,
    n_actions: Optional[int] = None,
    workers: Optional[int] = None,
) -> FqiResult:
    """
    Fitted Q iteration from the greedy immediate-reward model, keeping the
    iterate whose epsilon-greedy policy has the highest lower bound on the
    validation data.

    K - number of fitted Q iterations, at least 1
    disc - discount of the Bellman targets
    test - optional held-out data on which the chosen policy is bounded

    returns the best policy, its validation bound and every iteration's
    bound; on equal bounds the earliest iteration is kept
    """
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    if train.n == 0:
        raise EmptyData()
    n_actions = train.n_actions if n_actions is None else n_actions
    features = train.features
    actions = train.actions
    rewards = train.rewards

    last = np.zeros(train.n_steps, dtype=bool)
    last[train.offsets + train.lengths - 1] = True
    has_next = np.nonzero(~last)[0]
    next_features = features[has_next + 1]

    q = greedy_train(
        train, epsilon, seed, regressor, n_actions, workers
    ).q
    best: Optional[FqiResult] = None
    iteration_bounds = []
    for k in range(1, K + 1):
        labels = rewards.copy()
        if len(has_next) > 0:
            labels[has_next] += disc.gamma * np.max(
                q.values_features(next_features), axis=1
            )
        if keep_fraction < 1.0:
            mask = information_gain_select(features, labels, keep_fraction)
        else:
            mask = np.arange(features.shape[1])
        q = _fit_q(
            features,
            actions,
            labels,
            n_actions,
            mask,
            regressor,
            seed,
            workers,
        )
        policy = EpsilonGreedyPolicy(q, epsilon)
        result = bound_policy(
            val, policy, delta, method, estimator, seed=derive_seed(seed, k)
        )
        iteration_bounds.append(result.lower_bound)
        logger.info(
            "FQI iteration %d: validation bound %.6g", k, result.lower_bound
        )
        if best is None or result.lower_bound > best.bound.lower_bound:
            best = FqiResult(policy, result, [], k)

    assert best is not None
    best.iteration_bounds = iteration_bounds
    if test is not None:
        best.test_bound = bound_policy(
            test, best.policy, delta, method, estimator, seed=seed
        )
    return best


def epsilon_sweep(
    q: QModel,
    data: Dataset,
    epsilons: Sequence[float],
    delta: float = 0.05,
    method: BoundMethod = BoundMethod.TT,
    estimator: Estimator = Estimator.PSIS,
) -> pd.DataFrame:
    """
    returns the estimate and lower bound of the epsilon-greedy policy over q
    for every epsilon, moving towards the uniform random policy
    """
    rows = []
    for epsilon in epsilons:
        policy = EpsilonGreedyPolicy(q, epsilon)
        xs = importance_weighted_returns(data, policy, estimator)
        rows.append(
            {
                "epsilon": epsilon,
                "estimate": float(np.mean(xs)),
                "lower_bound": lower_bound(xs, delta, method).lower_bound,
            }
        )
    return pd.DataFrame(rows, columns=["epsilon", "estimate", "lower_bound"])


def metric_bounds(
    data: Dataset,
    pi_e: Policy,
    delta: float = 0.05,
    method: BoundMethod = BoundMethod.TT,
) -> pd.DataFrame:
    """
    CTR-style and LTV-style lower bounds (in percent) for one policy: the CTR
    bound treats every visit as a separate one-step visitor, the LTV bound
    scores whole visitor histories with per-step importance sampling
    """
    if data.n == 0:
        raise EmptyData()
    visits = Dataset(
        Trajectory((s,), t.behavior_id, t.user_id, t.timestamp)
        for t in data
        for s in t.steps
    )
    rows = []
    for metric, sample in (("ctr", visits), ("ltv", data)):
        xs = 100.0 * per_step_is_values(sample, pi_e, UNDISCOUNTED)[0]
        rows.append(
            {
                "metric": metric,
                "estimate": float(np.mean(xs)),
                "lower_bound": lower_bound(xs, delta, method).lower_bound,
            }
        )
    return pd.DataFrame(rows, columns=["metric", "estimate", "lower_bound"])


def save_policy(policy: EpsilonGreedyPolicy, path: Union[str, Path]) -> None:
    joblib.dump(policy, path)


def load_policy(path: Union[str, Path]) -> EpsilonGreedyPolicy:
    return joblib.load(path)
