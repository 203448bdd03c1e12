"""
Planning on suffix-tree MDPs and posterior sampling over the
recommendation-acceptance parameter theta.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy import ndarray

from .core.exceptions import (
    IterationLimitReached,
    SingularEvaluation,
    ZeroEvidenceWarning,
)
from .core.tools import Seed, derive_rng, parallel_map, sample_index
from .pst import Pst, PstMdp, RewardSpec, build_mdp

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-12
MAX_POLICY_ITERATIONS = 1000
THETA_STAR_STREAM = 1


def _q_from_values(
    transitions: ndarray, rewards: ndarray, gamma: float, values: ndarray
) -> ndarray:
    return rewards + gamma * (transitions @ values).T


def evaluate_policy(
    transitions: ndarray, rewards: ndarray, gamma: float, policy: ndarray
) -> ndarray:
    """
    transitions - (n_actions, n_states, n_states)
    rewards - (n_states, n_actions)
    policy - action index per state

    returns V solving (I - gamma P_pi) V = r_pi
    """
    states = np.arange(len(policy))
    P_pi = transitions[policy, states]
    r_pi = rewards[states, policy]
    try:
        values = np.linalg.solve(np.eye(len(policy)) - gamma * P_pi, r_pi)
    except np.linalg.LinAlgError:
        raise SingularEvaluation(gamma)
    if not np.all(np.isfinite(values)):
        raise SingularEvaluation(gamma)
    return values


def policy_iteration(
    transitions: ndarray,
    rewards: ndarray,
    gamma: float,
    initial: Optional[ndarray] = None,
    max_iter: int = MAX_POLICY_ITERATIONS,
) -> Tuple[ndarray, ndarray]:
    """
    Exact evaluation followed by greedy improvement until the policy is
    stable. A state keeps its current action unless another is better by
    more than TIE_TOLERANCE.

    initial - starting policy; defaults to action 0 everywhere

    returns (policy, values)
    """
    n_states = transitions.shape[1]
    if initial is None:
        policy = np.zeros(n_states, dtype=int)
    else:
        policy = np.asarray(initial, dtype=int).copy()
    states = np.arange(n_states)
    for i in range(max_iter):
        values = evaluate_policy(transitions, rewards, gamma, policy)
        q = _q_from_values(transitions, rewards, gamma, values)
        best = q.argmax(axis=1)
        keep = q[states, policy] >= q[states, best] - TIE_TOLERANCE
        new_policy = np.where(keep, policy, best)
        if np.array_equal(new_policy, policy):
            logger.debug("Policy iteration stable after %d sweeps", i + 1)
            return policy, values
        policy = new_policy
    raise IterationLimitReached(max_iter)


def value_iteration(
    transitions: ndarray,
    rewards: ndarray,
    gamma: float,
    tol: float = 1e-12,
    max_iter: int = 100000,
) -> Tuple[ndarray, ndarray]:
    values = np.zeros(transitions.shape[1])
    for _ in range(max_iter):
        q = _q_from_values(transitions, rewards, gamma, values)
        new_values = q.max(axis=1)
        if np.max(np.abs(new_values - values)) < tol:
            return q.argmax(axis=1), new_values
        values = new_values
    raise IterationLimitReached(max_iter)


def q_values(mdp: PstMdp, values: ndarray) -> ndarray:
    return _q_from_values(mdp.transitions, mdp.rewards, mdp.gamma, values)


def bellman_residual(
    transitions: ndarray, rewards: ndarray, gamma: float, values: ndarray
) -> float:
    """
    returns the sup-norm distance between V and its Bellman optimality
    backup
    """
    q = _q_from_values(transitions, rewards, gamma, values)
    return float(np.max(np.abs(q.max(axis=1) - values)))


def solve_mdp(mdp: PstMdp) -> Tuple[ndarray, ndarray]:
    """
    Policy iteration started from the null action, so actions that cannot
    beat recommending nothing are never chosen
    """
    initial = np.full(mdp.n_states, mdp.null_action)
    return policy_iteration(
        mdp.transitions, mdp.rewards, mdp.gamma, initial=initial
    )


class ThetaFamily:
    thetas: ndarray
    prior: ndarray

    def __init__(
        self, thetas: Sequence[float], prior: Optional[Sequence[float]] = None
    ):
        self.thetas = np.asarray(thetas, dtype=float)
        if len(self.thetas) == 0:
            raise ValueError("A theta family needs at least one theta")
        if np.any(self.thetas < 1):
            raise ValueError("Every theta must be at least 1")
        if prior is None:
            self.prior = np.full(len(self.thetas), 1.0 / len(self.thetas))
        else:
            self.prior = np.asarray(prior, dtype=float)
            if self.prior.shape != self.thetas.shape:
                raise ValueError("Prior needs one entry per theta")
            if np.any(self.prior < 0) or abs(self.prior.sum() - 1) > 1e-10:
                raise ValueError("Prior must be a distribution")

    def __repr__(self):
        return f"<ThetaFamily: {self.thetas.tolist()}>"

    def __len__(self):
        return len(self.thetas)

    def index(self, theta: float) -> int:
        matches = np.nonzero(np.isclose(self.thetas, theta))[0]
        if len(matches) == 0:
            raise KeyError(f"'{theta}'")
        return int(matches[0])

    def draw(self, seed: Seed) -> float:
        """
        returns a true theta drawn from the prior; the stream is separate
        from the one the agents sample with
        """
        rng = derive_rng(seed, THETA_STAR_STREAM)
        return float(self.thetas[sample_index(self.prior, rng.random())])


@dataclass
class SolvedFamily:
    family: ThetaFamily
    mdps: List[PstMdp]
    policies: List[ndarray]
    values: List[ndarray]


def solve_family(
    pst: Pst,
    family: ThetaFamily,
    reward_spec: RewardSpec,
    gamma: float = 0.9,
    workers: Optional[int] = None,
) -> SolvedFamily:
    """
    Builds and solves one MDP per theta
    """

    def solve(theta: float):
        mdp = build_mdp(pst, theta, reward_spec, gamma)
        policy, values = solve_mdp(mdp)
        return mdp, policy, values

    solved = parallel_map(solve, family.thetas, workers)
    return SolvedFamily(
        family,
        [s[0] for s in solved],
        [s[1] for s in solved],
        [s[2] for s in solved],
    )


def posterior_update(
    posterior: ndarray,
    mdps: Sequence[PstMdp],
    state: int,
    action: int,
    next_state: int,
) -> ndarray:
    """
    returns the posterior times the likelihood of (state, action,
    next_state) under each theta, renormalised; when no theta explains the
    transition the posterior is returned unchanged
    """
    likelihood = np.array(
        [m.transitions[action, state, next_state] for m in mdps]
    )
    updated = posterior * likelihood
    total = updated.sum()
    if total <= 0:
        warnings.warn(
            f"Transition {state} -{action}-> {next_state} has zero "
            "likelihood under every theta: posterior unchanged",
            ZeroEvidenceWarning,
        )
        return posterior.copy()
    return updated / total


@dataclass
class PsrlRun:
    thetas: ndarray
    actions: ndarray
    symbols: ndarray
    rewards: ndarray
    states: ndarray
    posterior: ndarray  # (T + 1, n_thetas)
    sampled_thetas: List[float] = field(default_factory=list)
    switch_times: List[int] = field(default_factory=list)
    null_action: int = -1

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def average_reward(self) -> float:
        return float(self.rewards.mean())

    @property
    def n_switches(self) -> int:
        return len(self.switch_times)

    @property
    def n_null(self) -> int:
        return int(np.sum(self.actions == self.null_action))

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(
            {
                "t": np.arange(1, self.horizon + 1),
                "state": self.states[:-1],
                "action": self.actions,
                "symbol": self.symbols,
                "reward": self.rewards,
            }
        )
        for i, theta in enumerate(self.thetas):
            df[f"posterior_{theta:g}"] = self.posterior[1:, i]
        return df

    def to_dict(self) -> Dict:
        return {
            "thetas": self.thetas.tolist(),
            "average_reward": self.average_reward,
            "switch_times": self.switch_times,
            "sampled_thetas": self.sampled_thetas,
            "n_null": self.n_null,
            "final_posterior": self.posterior[-1].tolist(),
        }


def _realized_reward(
    mdp: PstMdp, state: int, action: int, symbol_index: int
) -> float:
    return float(mdp.desirability[symbol_index] - mdp.costs[state, action])


def _run(
    pst: Pst,
    solved: SolvedFamily,
    theta_star: float,
    reward_spec: RewardSpec,
    horizon: int,
    seed: Seed,
    choose,
) -> PsrlRun:
    """
    choose(t, state, posterior, rng, run) -> action; run carries the
    switch log
    """
    if horizon < 1:
        raise ValueError(f"Horizon must be positive, got {horizon}")
    rng = derive_rng(seed)
    family = solved.family
    truth = build_mdp(pst, theta_star, reward_spec, solved.mdps[0].gamma)
    K = len(family)
    run = PsrlRun(
        thetas=family.thetas.copy(),
        actions=np.zeros(horizon, dtype=int),
        symbols=np.zeros(horizon, dtype=int),
        rewards=np.zeros(horizon),
        states=np.zeros(horizon + 1, dtype=int),
        posterior=np.zeros((horizon + 1, K)),
        null_action=truth.null_action,
    )
    state = truth.state_index(())
    posterior = family.prior.copy()
    run.states[0] = state
    run.posterior[0] = posterior
    for t in range(1, horizon + 1):
        action = choose(t, state, posterior, rng, run)
        probs = truth.symbol_probs[action, state]
        s = sample_index(probs, rng.random())
        next_state = int(truth.successors[state, s])
        run.actions[t - 1] = action
        run.symbols[t - 1] = pst.alphabet[s]
        run.rewards[t - 1] = _realized_reward(truth, state, action, s)
        posterior = posterior_update(
            posterior, solved.mdps, state, action, next_state
        )
        state = next_state
        run.states[t] = state
        run.posterior[t] = posterior
    return run


def ds_psrl(
    pst: Pst,
    family: ThetaFamily,
    theta_star: float,
    reward_spec: RewardSpec,
    horizon: int,
    seed: Seed = 0,
    gamma: float = 0.9,
    solved: Optional[SolvedFamily] = None,
    workers: Optional[int] = None,
) -> PsrlRun:
    """
    Posterior sampling on a doubling schedule: at t = 1, 2, 4, ... a theta
    is drawn from the posterior and its precomputed optimal policy is
    followed until the next switch. The posterior is updated after every
    step.

    theta_star - the hidden acceptance parameter of the simulated user
    """
    if solved is None:
        solved = solve_family(pst, family, reward_spec, gamma, workers)
    current = {"policy": solved.policies[0], "next_switch": 1}

    def choose(t, state, posterior, rng, run):
        if t == current["next_switch"]:
            k = int(rng.choice(len(posterior), p=posterior))
            current["policy"] = solved.policies[k]
            current["next_switch"] *= 2
            run.switch_times.append(t)
            run.sampled_thetas.append(float(family.thetas[k]))
        return int(current["policy"][state])

    run = _run(pst, solved, theta_star, reward_spec, horizon, seed, choose)
    logger.info(
        "DS-PSRL: %d steps, %d switches, average reward %.4f",
        horizon,
        run.n_switches,
        run.average_reward,
    )
    return run


def greedy_thompson(
    pst: Pst,
    family: ThetaFamily,
    theta_star: float,
    reward_spec: RewardSpec,
    horizon: int,
    seed: Seed = 0,
    gamma: float = 0.9,
    solved: Optional[SolvedFamily] = None,
    workers: Optional[int] = None,
) -> PsrlRun:
    """
    One-step Thompson sampling: every step draws a theta and recommends the
    symbol with the highest immediate expected reward under it. The null
    action is never taken.
    """
    if solved is None:
        solved = solve_family(pst, family, reward_spec, gamma, workers)

    def choose(t, state, posterior, rng, run):
        k = int(rng.choice(len(posterior), p=posterior))
        run.sampled_thetas.append(float(family.thetas[k]))
        mdp = solved.mdps[k]
        return int(mdp.rewards[state, : mdp.null_action].argmax())

    run = _run(pst, solved, theta_star, reward_spec, horizon, seed, choose)
    logger.info(
        "Greedy Thompson: %d steps, average reward %.4f",
        horizon,
        run.average_reward,
    )
    return run


def known_theta_run(
    pst: Pst,
    theta_star: float,
    reward_spec: RewardSpec,
    horizon: int,
    seed: Seed = 0,
    gamma: float = 0.9,
    greedy: bool = False,
) -> PsrlRun:
    """
    The optimal (or, with greedy, the myopic) policy for the true theta
    """
    family = ThetaFamily([theta_star])
    solved = solve_family(pst, family, reward_spec, gamma)
    runner = greedy_thompson if greedy else ds_psrl
    return runner(
        pst,
        family,
        theta_star,
        reward_spec,
        horizon,
        seed,
        gamma,
        solved=solved,
    )


def compare_psrl(
    pst: Pst,
    family: ThetaFamily,
    theta_star: float,
    reward_spec: RewardSpec,
    horizon: int,
    seed: Seed = 0,
    gamma: float = 0.9,
    workers: Optional[int] = None,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Average rewards of the planning and greedy agents, each with a sampled
    theta and with the true one, on the same seed

    returns (rewards table indexed by agent, null-action counts per run)
    """
    solved = solve_family(pst, family, reward_spec, gamma, workers)
    runs = {
        ("mdp", "thompson"): ds_psrl(
            pst, family, theta_star, reward_spec, horizon, seed, gamma, solved
        ),
        ("greedy", "thompson"): greedy_thompson(
            pst, family, theta_star, reward_spec, horizon, seed, gamma, solved
        ),
        ("mdp", "known"): known_theta_run(
            pst, theta_star, reward_spec, horizon, seed, gamma
        ),
        ("greedy", "known"): known_theta_run(
            pst, theta_star, reward_spec, horizon, seed, gamma, greedy=True
        ),
    }
    table = pd.DataFrame(
        {
            column: {
                agent: runs[(agent, column)].average_reward
                for agent in ("mdp", "greedy")
            }
            for column in ("thompson", "known")
        }
    )
    cadence = pd.DataFrame(
        [
            {
                "agent": agent,
                "theta": column,
                "null_actions": run.n_null,
                "null_share": run.n_null / run.horizon,
            }
            for (agent, column), run in runs.items()
        ]
    )
    return table, cadence


def posterior_variance_trace(run: PsrlRun) -> ndarray:
    """
    returns the posterior variance of theta after every step, index 0 being
    the prior
    """
    mean = run.posterior @ run.thetas
    second = run.posterior @ run.thetas ** 2
    return np.maximum(second - mean ** 2, 0.0)


def max_switches(horizon: int) -> int:
    return int(math.floor(math.log2(horizon))) + 1
