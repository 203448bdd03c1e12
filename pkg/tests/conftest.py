from typing import List, Tuple

import numpy as np
import pytest

from saferec.capacity import CapacitySpec, TypedMdpFamily
from saferec.core import Dataset, Step, TabularPolicy, Trajectory
from saferec.pst import Pst, RewardSpec


def make_trajectory(
    steps: List[Tuple[int, int, float, float]], **kwargs
) -> Trajectory:
    return Trajectory(tuple(Step(*step) for step in steps), **kwargs)


@pytest.fixture(
    params=[None, 4],
    ids=["sequential", "threaded"],
)
def workers(request):
    return request.param


@pytest.fixture
def behavior() -> TabularPolicy:
    return TabularPolicy([0.5, 0.5])


@pytest.fixture
def always_one() -> TabularPolicy:
    return TabularPolicy([0.0, 1.0])


@pytest.fixture
def two_trajectories() -> Dataset:
    """
    Logged by the uniform policy over two actions
    """
    return Dataset(
        [
            make_trajectory(
                [(0, 1, 1.0, 0.5), (0, 1, 0.0, 0.5)], user_id="a"
            ),
            make_trajectory([(0, 0, 1.0, 0.5)], user_id="b"),
        ]
    )


@pytest.fixture
def low_high_pst() -> Pst:
    """
    Symbols 0 (low value) and 1 (high value) that a passive user picks
    with probability 0.7 and 0.3 whatever came before
    """
    return Pst.from_nodes(
        [0, 1],
        {(): [0.7, 0.3], (0,): [0.7, 0.3], (1,): [0.7, 0.3]},
    )


@pytest.fixture
def low_high_rewards() -> RewardSpec:
    return RewardSpec((0.0, 1.0))


@pytest.fixture
def alternator() -> List[List[int]]:
    return [[(i + start) % 2 for i in range(20)] for start in (0, 1) * 5]


@pytest.fixture
def two_type_family() -> TypedMdpFamily:
    """
    Two user types over three states and two actions; action 1 reveals the
    type most clearly
    """
    rng = np.random.default_rng(0)
    transitions = rng.dirichlet(np.ones(3), size=(2, 3, 2))
    transitions[0, :, 1] = [0.8, 0.1, 0.1]
    transitions[1, :, 1] = [0.1, 0.1, 0.8]
    rewards = np.zeros((2, 3, 2))
    rewards[0, :, 0] = [0.2, 0.5, 0.1]
    rewards[1, :, 0] = [0.3, 0.0, 0.6]
    rewards[:, :, 1] = 0.1
    return TypedMdpFamily(transitions, rewards, horizon=4)


@pytest.fixture
def two_offer_family() -> TypedMdpFamily:
    """
    One state; offer A is worth 1, offer B 0.6 and the null action nothing
    """
    return TypedMdpFamily(
        np.ones((1, 1, 3, 1)), [[[1.0, 0.6, 0.0]]], horizon=3
    )


@pytest.fixture
def two_offer_caps() -> CapacitySpec:
    return CapacitySpec.from_actions(
        [("A", 1.0), ("B", 1.0)], n_states=1, n_actions=3, null_action=2
    )
