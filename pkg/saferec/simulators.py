"""
Finite click environments with exact dynamic-programming values.

A step in state s under action a clicks (reward 1) with probability
click_probs[s, a] times the episode's drift multiplier, clipped to 1, then
moves to s' ~ transitions[s, a]. Reaching a terminal state ends the episode.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numpy import ndarray

from .core.exceptions import EmptyData
from .core.policies import Policy
from .core.tools import Seed, derive_rng, parallel_map, sample_index
from .core.trajectories import (
    DEFAULT_HORIZON_CAP,
    Dataset,
    DiscountSpec,
    State,
    Step,
    Trajectory,
)

logger = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-10


class SimEnv:
    name: str
    click_probs: ndarray
    transitions: ndarray
    d0: ndarray
    terminal: Tuple[int, ...]
    horizon: int
    drift: Optional[ndarray]
    feature_map: Optional[ndarray]

    def __init__(
        self,
        click_probs: Union[ndarray, Sequence],
        transitions: Union[ndarray, Sequence],
        d0: Union[ndarray, Sequence],
        horizon: int,
        terminal: Sequence[int] = (),
        drift: Optional[Union[ndarray, Sequence[float]]] = None,
        feature_map: Optional[Union[ndarray, Sequence]] = None,
        name: str = "",
    ):
        """
        click_probs - (S, A) click probability per state and action
        transitions - (S, A, S) next-state distributions
        d0 - (S,) initial state distribution, no mass on terminal states
        horizon - maximum episode length, at most the trajectory cap
        terminal - absorbing states that end an episode on arrival
        drift - per-episode click multipliers; episodes past the end of the
        schedule reuse its last value
        feature_map - (S, d) features logged in place of the state id
        """
        self.name = name
        self.click_probs = np.array(click_probs, dtype=float)
        self.transitions = np.array(transitions, dtype=float)
        self.d0 = np.array(d0, dtype=float)
        self.horizon = int(horizon)
        self.terminal = tuple(int(s) for s in terminal)
        self.drift = None if drift is None else np.array(drift, dtype=float)
        self.feature_map = (
            None if feature_map is None else np.array(feature_map, dtype=float)
        )
        self._validate()

    def _validate(self) -> None:
        S, A = self.click_probs.shape
        if self.transitions.shape != (S, A, S):
            raise ValueError(
                f"transitions must have shape {(S, A, S)}, "
                f"got {self.transitions.shape}"
            )
        if np.any(self.click_probs < 0) or np.any(self.click_probs > 1):
            raise ValueError("Click probabilities must lie in [0, 1]")
        if np.any(self.transitions < 0) or np.any(
            np.abs(self.transitions.sum(axis=2) - 1.0) > ROW_TOLERANCE
        ):
            raise ValueError("Transition rows must be distributions")
        if self.d0.shape != (S,) or abs(self.d0.sum() - 1.0) > ROW_TOLERANCE:
            raise ValueError("d0 must be a distribution over states")
        if any(self.d0[s] > 0 for s in self.terminal):
            raise ValueError("Episodes cannot start in a terminal state")
        if not 1 <= self.horizon <= DEFAULT_HORIZON_CAP:
            raise ValueError(
                f"horizon must lie in 1..{DEFAULT_HORIZON_CAP}, "
                f"got {self.horizon}"
            )
        if self.drift is not None and (
            len(self.drift) == 0 or np.any(self.drift < 0)
        ):
            raise ValueError("Drift multipliers must be nonnegative")
        if self.feature_map is not None and len(self.feature_map) != S:
            raise ValueError("feature_map needs one row per state")

    def __repr__(self):
        return (
            f"<SimEnv: {self.name or 'unnamed'}, {self.n_states} states, "
            f"{self.n_actions} actions, horizon {self.horizon}>"
        )

    @property
    def n_states(self) -> int:
        return self.click_probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.click_probs.shape[1]

    @property
    def is_terminal(self) -> ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.terminal)] = True
        return mask

    def observe(self, s: int) -> State:
        if self.feature_map is None:
            return s
        return tuple(float(v) for v in self.feature_map[s])

    @property
    def observations(self):
        return [self.observe(s) for s in range(self.n_states)]

    def multiplier(self, episode: Optional[int]) -> float:
        if self.drift is None or episode is None:
            return 1.0
        return float(self.drift[min(episode, len(self.drift) - 1)])

    def rewards(self, episode: Optional[int] = None) -> ndarray:
        """
        returns the (S, A) expected immediate reward in the given episode
        """
        return np.minimum(self.click_probs * self.multiplier(episode), 1.0)

    def with_drift(
        self, drift: Optional[Union[ndarray, Sequence[float]]]
    ) -> "SimEnv":
        return SimEnv(
            self.click_probs,
            self.transitions,
            self.d0,
            self.horizon,
            self.terminal,
            drift,
            self.feature_map,
            self.name,
        )

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "name": self.name,
            "click_probs": self.click_probs.tolist(),
            "transitions": self.transitions.tolist(),
            "d0": self.d0.tolist(),
            "horizon": self.horizon,
            "terminal": list(self.terminal),
        }
        if self.drift is not None:
            out["drift"] = self.drift.tolist()
        if self.feature_map is not None:
            out["feature_map"] = self.feature_map.tolist()
        return out

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "SimEnv":
        return cls(
            click_probs=raw["click_probs"],
            transitions=raw["transitions"],
            d0=raw["d0"],
            horizon=raw["horizon"],
            terminal=raw.get("terminal", ()),
            drift=raw.get("drift"),
            feature_map=raw.get("feature_map"),
            name=raw.get("name", ""),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SimEnv":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def dump(self, path: Union[str, Path]) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True)


def _episode(
    env: SimEnv, policy: Policy, seed: Seed, episode: int, behavior_id: str
) -> Trajectory:
    rng = derive_rng(seed, episode)
    rewards = env.rewards(episode)
    s = sample_index(env.d0, rng.random())
    steps = []
    for _ in range(env.horizon):
        obs = env.observe(s)
        a, prob = policy.sample(obs, rng)
        r = 1.0 if rng.random() < rewards[s, a] else 0.0
        steps.append(Step(obs, a, r, prob))
        s = sample_index(env.transitions[s, a], rng.random())
        if s in env.terminal:
            break
    return Trajectory(
        tuple(steps),
        behavior_id=behavior_id,
        user_id=str(episode),
        timestamp=float(episode),
    )


def simulate(
    env: SimEnv,
    policy: Policy,
    n: int,
    seed: Seed,
    episode_offset: int = 0,
    behavior_id: str = "",
    workers: Optional[int] = None,
) -> Dataset:
    """
    n trajectories of policy acting in env, logging the probability of every
    chosen action.

    Episode i (counted from episode_offset) draws from its own stream
    (seed, i), so the data set is fixed by the seed regardless of workers.
    """
    if n <= 0:
        raise EmptyData()
    if policy.n_actions != env.n_actions:
        raise ValueError(
            f"Policy has {policy.n_actions} actions, environment has "
            f"{env.n_actions}"
        )
    episodes = range(episode_offset, episode_offset + n)
    trajectories = parallel_map(
        lambda i: _episode(env, policy, seed, i, behavior_id),
        episodes,
        workers,
    )
    logger.debug("Simulated %d episodes of %r", n, env)
    return Dataset(trajectories)


def _backward(
    env: SimEnv, probs: ndarray, rewards: ndarray, gamma: float
) -> float:
    continuing = (~env.is_terminal).astype(float)
    V = np.zeros(env.n_states)
    for _ in range(env.horizon):
        Q = rewards + gamma * np.einsum(
            "ijk, k -> ij", env.transitions, V * continuing
        )
        V = np.sum(probs * Q, axis=1)
    return float(env.d0 @ V)


def exact_value(
    env: SimEnv,
    policy: Policy,
    disc: DiscountSpec = DiscountSpec(1.0),
    episode: Optional[int] = None,
) -> float:
    """
    returns the expected discounted return of policy by finite-horizon
    backward induction; episode selects the drift multiplier
    """
    probs = policy.probs_for(env.observations)
    return _backward(env, probs, env.rewards(episode), disc.gamma)


def exact_metrics(
    env: SimEnv, policy: Policy, episode: Optional[int] = None
) -> Tuple[float, float]:
    """
    returns the expected (CTR, LTV) of policy in percent: expected clicks
    over expected visits, and expected clicks per visitor
    """
    probs = policy.probs_for(env.observations)
    clicks = _backward(env, probs, env.rewards(episode), 1.0)
    visits = _backward(
        env, probs, np.ones((env.n_states, env.n_actions)), 1.0
    )
    return 100.0 * clicks / visits, 100.0 * clicks


def chain_env(n_states: int = 5, horizon: int = 10) -> SimEnv:
    """
    A chain where action 1 pushes the user forward (w.p. 0.8) towards states
    that click more often, and action 0 drifts back (w.p. 0.2)
    """
    S, A = n_states, 2
    T = np.zeros((S, A, S))
    for s in range(S):
        T[s, 0, s] += 0.8
        T[s, 0, max(s - 1, 0)] += 0.2
        T[s, 1, min(s + 1, S - 1)] += 0.8
        T[s, 1, s] += 0.2
    clicks = np.zeros((S, A))
    clicks[:, 0] = 0.2
    clicks[:, 1] = 0.05 + 0.6 * np.arange(S) / max(S - 1, 1)
    d0 = np.zeros(S)
    d0[0] = 1.0
    return SimEnv(clicks, T, d0, horizon, name="chain")


def bandit_env(click_probs: Sequence[float]) -> SimEnv:
    A = len(click_probs)
    return SimEnv(
        [list(click_probs)],
        np.ones((1, A, 1)),
        [1.0],
        horizon=1,
        name="bandit",
    )


def funnel_env(horizon: int = 10) -> SimEnv:
    """
    Three states: a new user (0), an engaged user (1) and a departed user
    (2, terminal). Action 0 shows the offer, action 1 nurtures.

    Offers click most often now but drive users away; nurturing clicks less
    per visit but moves new users to the engaged state and keeps them there.
    """
    T = np.zeros((3, 2, 3))
    T[0, 0] = [0.3, 0.0, 0.7]
    T[0, 1] = [0.1, 0.9, 0.0]
    T[1, 0] = [0.0, 0.4, 0.6]
    T[1, 1] = [0.0, 0.9, 0.1]
    T[2, :, 2] = 1.0
    clicks = [[0.4, 0.1], [0.5, 0.3], [0.0, 0.0]]
    return SimEnv(
        clicks, T, [1.0, 0.0, 0.0], horizon, terminal=(2,), name="funnel"
    )


def improvable_env(
    click_probs: Sequence[float] = (0.2, 0.5), horizon: int = 5
) -> SimEnv:
    """
    One state, two actions: a behavior policy that favours action 0 can be
    improved by shifting mass to action 1
    """
    A = len(click_probs)
    return SimEnv(
        [list(click_probs)],
        np.ones((1, A, 1)),
        [1.0],
        horizon,
        name="improvable",
    )


def contextual_env() -> SimEnv:
    """
    Four single-step contexts with two features; action 0 suits users with
    feature 0 low, action 1 those with it high
    """
    features = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
    clicks = [[0.6, 0.1], [0.5, 0.2], [0.1, 0.6], [0.2, 0.5]]
    T = np.zeros((4, 2, 4))
    for s in range(4):
        T[s, :, s] = 1.0
    return SimEnv(
        clicks,
        T,
        np.full(4, 0.25),
        horizon=1,
        feature_map=features,
        name="contextual",
    )


def sparse_click_env(
    target: float = 0.0038, spread: float = 0.5, horizon: int = 20
) -> SimEnv:
    """
    A single-state environment whose two actions click at target * (1 +
    spread) and target * (1 - spread), so the uniform policy clicks at the
    target rate. The spread shrinks as needed to keep probabilities <= 1.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError(f"target must lie in [0, 1], got {target}")
    if target > 0:
        spread = min(spread, (1.0 - target) / target)
    return SimEnv(
        [[target * (1.0 + spread), target * (1.0 - spread)]],
        np.ones((1, 2, 1)),
        [1.0],
        horizon,
        name="sparse_click",
    )


def stationary_drift(n_episodes: int) -> ndarray:
    return np.ones(n_episodes)


def hotel_drift(
    n_episodes: int,
    drop_start: float = 0.4,
    drop_end: float = 0.6,
    low: float = 0.02,
    recovery: float = 0.1,
) -> ndarray:
    """
    Multipliers that fall to low over [drop_start, drop_end) of the stream
    (fractions of n_episodes), then recover linearly to 1 over the next
    recovery fraction
    """
    drift = np.ones(n_episodes)
    start = int(drop_start * n_episodes)
    end = int(drop_end * n_episodes)
    ramp = max(int(recovery * n_episodes), 1)
    drift[start:end] = low
    ramp_end = min(end + ramp, n_episodes)
    drift[end:ramp_end] = np.linspace(low, 1.0, ramp + 1)[
        1 : ramp_end - end + 1
    ]
    return drift
