from abc import ABC, abstractmethod
from itertools import product
from typing import Any, Dict, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from numpy import ndarray
from scipy.special import softmax

from .exceptions import UnknownAction
from .tools import sample_index
from .trajectories import State, state_features

PROB_TOLERANCE = 1e-9


class ActionValues(Protocol):
    """
    Anything that scores every action in a state, such as a Q table or a
    fitted Q model
    """

    n_actions: int

    def values(self, state: State) -> ndarray:
        ...

    def values_batch(self, states: Sequence[State]) -> ndarray:
        ...


class Policy(ABC):
    n_actions: int

    @abstractmethod
    def action_probs(self, state: State) -> ndarray:
        """
        returns the (n_actions,) distribution over actions in state
        """
        ...

    def probs_for(self, states: Sequence[State]) -> ndarray:
        """
        returns the (len(states), n_actions) matrix of action distributions
        """
        if len(states) == 0:
            return np.zeros((0, self.n_actions))
        return np.stack([self.action_probs(s) for s in states])

    def action_prob(self, state: State, action: int) -> float:
        if not 0 <= action < self.n_actions:
            raise UnknownAction(action, self.n_actions)
        return float(self.action_probs(state)[action])

    def sample(
        self, state: State, rng: np.random.Generator
    ) -> Tuple[int, float]:
        """
        returns the drawn action and its probability
        """
        probs = self.action_probs(state)
        action = sample_index(probs, rng.random())
        return action, float(probs[action])

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        ...

    def __repr__(self):
        return f"<{type(self).__name__}: {self.n_actions} actions>"


def _check_distribution(table: ndarray) -> None:
    if np.any(table < 0):
        raise ValueError("Action probabilities must be nonnegative")
    sums = table.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > PROB_TOLERANCE):
        raise ValueError(
            f"Action probabilities must sum to 1, got sums {sums}"
        )


class TabularPolicy(Policy):
    """
    table - (n_states, n_actions) rows of action probabilities, or a single
    (n_actions,) row shared by every state
    """

    table: ndarray

    def __init__(self, table: Union[ndarray, Sequence]):
        self.table = np.array(table, dtype=float)
        if self.table.ndim not in (1, 2):
            raise ValueError("Tabular policy table must be 1D or 2D")
        _check_distribution(self.table)
        self.n_actions = self.table.shape[-1]

    @property
    def state_independent(self) -> bool:
        return self.table.ndim == 1

    def action_probs(self, state: State) -> ndarray:
        if self.state_independent:
            return self.table
        if not isinstance(state, int):
            raise TypeError(
                "A per-state tabular policy needs discrete state ids"
            )
        return self.table[state]

    def probs_for(self, states: Sequence[State]) -> ndarray:
        if self.state_independent:
            return np.tile(self.table, (len(states), 1))
        return self.table[np.asarray(states, dtype=int)]

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": "tabular", "table": self.table.tolist()}


class UniformPolicy(TabularPolicy):
    def __init__(self, n_actions: int):
        super().__init__(np.full(n_actions, 1.0 / n_actions))


class QTable:
    """
    table - (n_states, n_actions) action values for discrete states
    """

    table: ndarray

    def __init__(self, table: Union[ndarray, Sequence]):
        self.table = np.array(table, dtype=float)
        if self.table.ndim != 2:
            raise ValueError("Q table must be 2D")
        self.n_actions = self.table.shape[1]

    def values(self, state: State) -> ndarray:
        return self.table[int(state)]  # type: ignore

    def values_batch(self, states: Sequence[State]) -> ndarray:
        return self.table[np.asarray(states, dtype=int)]

    def to_dict(self) -> Dict[str, Any]:
        return {"table": self.table.tolist()}


class EpsilonGreedyPolicy(Policy):
    """
    q - action values; the argmax (lowest id on ties) gets 1 - epsilon and
    every other action epsilon / (n_actions - 1)
    """

    q: ActionValues
    epsilon: float

    def __init__(self, q: ActionValues, epsilon: float = 0.1):
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        self.q = q
        self.epsilon = epsilon
        self.n_actions = q.n_actions

    def _from_values(self, values: ndarray) -> ndarray:
        values = np.atleast_2d(values)
        n = self.n_actions
        if n == 1:
            return np.ones((values.shape[0], 1))
        probs = np.full(values.shape, self.epsilon / (n - 1))
        probs[np.arange(values.shape[0]), np.argmax(values, axis=1)] = (
            1.0 - self.epsilon
        )
        return probs

    def action_probs(self, state: State) -> ndarray:
        return self._from_values(self.q.values(state))[0]

    def probs_for(self, states: Sequence[State]) -> ndarray:
        if len(states) == 0:
            return np.zeros((0, self.n_actions))
        return self._from_values(self.q.values_batch(states))

    def greedy_actions(self, states: Sequence[State]) -> ndarray:
        return np.argmax(self.q.values_batch(states), axis=1)

    def with_epsilon(self, epsilon: float) -> "EpsilonGreedyPolicy":
        return EpsilonGreedyPolicy(self.q, epsilon)

    def to_dict(self) -> Dict[str, Any]:
        if not isinstance(self.q, QTable):
            raise TypeError(
                "Only Q tables serialise to JSON; persist fitted Q models "
                "with joblib"
            )
        return {
            "kind": "epsilon_greedy",
            "epsilon": self.epsilon,
            "q": self.q.table.tolist(),
        }


class FourierBasis:
    """
    Cosine features cos(pi c.x) over every coefficient vector c in
    {0..order}^d, with x rescaled from [low, high] to [0, 1]
    """

    order: int
    low: ndarray
    high: ndarray
    coefficients: ndarray

    def __init__(
        self,
        order: int = 3,
        low: Union[float, Sequence[float]] = 0.0,
        high: Union[float, Sequence[float]] = 1.0,
    ):
        if order < 0:
            raise ValueError("Fourier order must be nonnegative")
        self.order = order
        self.low = np.atleast_1d(np.array(low, dtype=float))
        self.high = np.atleast_1d(np.array(high, dtype=float))
        if self.low.shape != self.high.shape:
            raise ValueError("low and high must have the same dimension")
        self.coefficients = np.array(
            list(product(range(order + 1), repeat=len(self.low))),
            dtype=float,
        )

    @property
    def dimension(self) -> int:
        return len(self.low)

    @property
    def n_features(self) -> int:
        return len(self.coefficients)

    def scale(self, x: ndarray) -> ndarray:
        span = self.high - self.low
        safe_span = np.where(span > 0, span, 1.0)
        scaled = np.where(span > 0, (x - self.low) / safe_span, 0.0)
        return np.clip(scaled, 0.0, 1.0)

    def features_batch(self, states: Sequence[State]) -> ndarray:
        x = self.scale(state_features(states))
        return np.cos(np.pi * x @ self.coefficients.T)

    def features(self, state: State) -> ndarray:
        return self.features_batch([state])[0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "order": self.order,
            "low": self.low.tolist(),
            "high": self.high.tolist(),
        }


class SoftmaxLinearPolicy(Policy):
    """
    weights - (n_actions, n_features) linear scores over Fourier features
    """

    weights: ndarray
    basis: FourierBasis

    def __init__(self, weights: Union[ndarray, Sequence], basis: FourierBasis):
        self.weights = np.array(weights, dtype=float)
        if self.weights.ndim != 2 or self.weights.shape[1] != basis.n_features:
            raise ValueError(
                f"weights must have shape (n_actions, {basis.n_features})"
            )
        self.basis = basis
        self.n_actions = self.weights.shape[0]

    @classmethod
    def zeros(cls, n_actions: int, basis: FourierBasis):
        """
        The uniform policy in this family
        """
        return cls(np.zeros((n_actions, basis.n_features)), basis)

    @property
    def params(self) -> ndarray:
        return self.weights.ravel().copy()

    def with_params(self, params: ndarray) -> "SoftmaxLinearPolicy":
        return SoftmaxLinearPolicy(
            np.asarray(params, dtype=float).reshape(self.weights.shape),
            self.basis,
        )

    def action_probs(self, state: State) -> ndarray:
        return self.probs_for([state])[0]

    def probs_for(self, states: Sequence[State]) -> ndarray:
        if len(states) == 0:
            return np.zeros((0, self.n_actions))
        scores = self.basis.features_batch(states) @ self.weights.T
        return softmax(scores, axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "softmax_linear",
            "weights": self.weights.tolist(),
            "basis": self.basis.to_dict(),
        }


class MixedPolicy(Policy):
    """
    alpha * inner + (1 - alpha) * base, action by action
    """

    alpha: float
    base: Policy
    inner: Policy

    def __init__(self, alpha: float, base: Policy, inner: Policy):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        if base.n_actions != inner.n_actions:
            raise ValueError("Mixed policies must share an action set")
        self.alpha = alpha
        self.base = base
        self.inner = inner
        self.n_actions = base.n_actions

    def action_probs(self, state: State) -> ndarray:
        return self.alpha * self.inner.action_probs(state) + (
            1.0 - self.alpha
        ) * self.base.action_probs(state)

    def probs_for(self, states: Sequence[State]) -> ndarray:
        return self.alpha * self.inner.probs_for(states) + (
            1.0 - self.alpha
        ) * self.base.probs_for(states)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "mixed",
            "alpha": self.alpha,
            "base": self.base.to_dict(),
            "inner": self.inner.to_dict(),
        }


def policy_from_dict(raw: Dict[str, Any]) -> Policy:
    kind = raw.get("kind")
    if kind == "tabular":
        return TabularPolicy(raw["table"])
    elif kind == "epsilon_greedy":
        return EpsilonGreedyPolicy(QTable(raw["q"]), raw["epsilon"])
    elif kind == "softmax_linear":
        basis = FourierBasis(**raw["basis"])
        return SoftmaxLinearPolicy(raw["weights"], basis)
    elif kind == "mixed":
        return MixedPolicy(
            raw["alpha"],
            policy_from_dict(raw["base"]),
            policy_from_dict(raw["inner"]),
        )
    else:
        raise ValueError(f"Unknown policy kind {kind!r}")


def softmax_template(
    n_actions: int,
    states: Sequence[State],
    order: int = 3,
    low: Optional[Sequence[float]] = None,
    high: Optional[Sequence[float]] = None,
) -> SoftmaxLinearPolicy:
    """
    A uniform softmax policy whose Fourier basis spans the observed states
    """
    if len(states) == 0:
        raise ValueError("softmax_template needs at least one state")
    x = state_features(states)
    lo = x.min(axis=0) if low is None else np.asarray(low, dtype=float)
    hi = x.max(axis=0) if high is None else np.asarray(high, dtype=float)
    return SoftmaxLinearPolicy.zeros(n_actions, FourierBasis(order, lo, hi))
