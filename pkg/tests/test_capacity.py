import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from saferec.capacity import (
    CapacitySpec,
    Column,
    ColumnSet,
    Pois,
    TypedMdpFamily,
    belief_update,
    bounded_belief_plan,
    build_belief_space,
    column_generation,
    commit_plan,
    family_from_pst,
    master_lp,
    regret,
    type_policies_and_cross_values,
)
from saferec.core.exceptions import ImpossibleTransition


def bayes_value(family: TypedMdpFamily, b, s: int, t: int) -> float:
    """
    Value of acting optimally on the exact posterior, by brute force
    """
    if t == family.horizon:
        return 0.0
    best = -np.inf
    for a in range(family.n_actions):
        q = float(b @ family.rewards[:, s, a])
        evidence = b @ family.transitions[:, s, a, :]
        for s1 in np.nonzero(evidence > 0)[0]:
            b1 = belief_update(family, b, s, a, int(s1))
            q += evidence[s1] * bayes_value(family, b1, int(s1), t + 1)
        best = max(best, q)
    return best


@pytest.fixture
def revealing_family() -> TypedMdpFamily:
    transitions = np.array(
        [[[[0.6, 0.4]], [[0.0, 1.0]]], [[[0.2, 0.8]], [[0.0, 1.0]]]]
    )
    return TypedMdpFamily(transitions, np.zeros((2, 2, 1)), horizon=2)


@pytest.fixture
def one_poi() -> CapacitySpec:
    return CapacitySpec.from_actions(
        [("A", 1.0)], n_states=1, n_actions=2, null_action=1
    )


@pytest.mark.asyncio
class TestPois:
    async def test_create(self):
        pois = Pois()
        museum = pois.create("museum", 3.0)
        assert museum.name == "museum"
        assert museum.limit == 3.0
        assert pois["museum"] == museum
        assert pois[0] == museum
        assert f"{museum}" == "museum"

    async def test_load_and_dump(self):
        pois = Pois()
        pois.load([("a", 1.0), ("b", 2.0)])
        assert pois.dump() == [("a", 1.0), ("b", 2.0)]
        assert np.array_equal(pois.limits, [1.0, 2.0])
        assert [p.name for p in pois] == ["a", "b"]

    async def test_index_out_of_range(self):
        pois = Pois()
        pois.create("a")
        try:
            pois[1]
            assert False
        except IndexError as e:
            assert str(e) == "list index out of range"

    async def test_unknown_name(self):
        pois = Pois()
        try:
            pois["a"]
            assert False
        except KeyError as e:
            assert e.args[0] == "'a'"

    async def test_duplicate_name(self):
        pois = Pois()
        pois.load([("a", 1.0), ("a", 2.0)])
        try:
            pois["a"]
            assert False
        except KeyError as e:
            assert e.args[0] == "Name a non unique: please use index"

    async def test_positive_limit(self):
        try:
            Pois().create("a", 0.0)
            assert False
        except ValueError as e:
            assert str(e) == "Capacity of a must be positive"


@pytest.mark.asyncio
class TestSpecs:
    async def test_from_actions(self, two_offer_caps):
        assert two_offer_caps.n_pois == 2
        assert two_offer_caps.consumption[0, 0].tolist() == [1.0, 0.0, 0.0]
        assert two_offer_caps.consumption[1, 0].tolist() == [0.0, 1.0, 0.0]

    async def test_null_consumes_nothing(self):
        pois = Pois()
        pois.create("a")
        try:
            CapacitySpec(pois, np.ones((1, 1, 2)), null_action=0)
            assert False
        except ValueError as e:
            assert str(e) == "Null action 0 must consume nothing"

    async def test_binary_consumption(self):
        pois = Pois()
        pois.create("a")
        try:
            CapacitySpec(pois, [[[0.5, 0.0]]], null_action=1)
            assert False
        except ValueError as e:
            assert str(e) == "Consumption entries must be 0 or 1"

    async def test_round_trip(self, two_offer_caps):
        loaded = CapacitySpec.from_dict(two_offer_caps.to_dict())
        assert loaded.pois.dump() == two_offer_caps.pois.dump()
        assert np.array_equal(loaded.consumption, two_offer_caps.consumption)

    async def test_family_validation(self):
        try:
            TypedMdpFamily(np.full((1, 1, 1, 2), 0.4), np.zeros((1, 1, 1)), 2)
            assert False
        except ValueError as e:
            assert str(e) == "Every transition row must be a distribution"

    async def test_reward_shape(self):
        try:
            TypedMdpFamily(np.ones((1, 1, 3, 1)), np.zeros((1, 1, 2)), 2)
            assert False
        except ValueError as e:
            assert str(e) == "Rewards must have shape (1, 1, 3), got (1, 1, 2)"

    async def test_family_round_trip(self, two_type_family, tmp_path):
        path = tmp_path / "family.json"
        two_type_family.dump(path)
        loaded = TypedMdpFamily.load(path)
        assert np.array_equal(loaded.transitions, two_type_family.transitions)
        assert loaded.horizon == 4

    async def test_family_from_pst(self, low_high_pst, low_high_rewards):
        family = family_from_pst(
            low_high_pst, [1.0, 10.0], low_high_rewards, horizon=5
        )
        assert family.transitions.shape == (2, 3, 3, 3)
        assert family.s0 == 0
        low, high = 1, 2
        assert family.transitions[1, low, 1, high] == pytest.approx(
            0.3 ** 0.1
        )
        assert family.transitions[0, low, 1, high] == pytest.approx(0.3)


@pytest.mark.asyncio
class TestBeliefs:
    async def test_update(self, revealing_family):
        b = belief_update(revealing_family, np.array([0.5, 0.5]), 0, 0, 0)
        assert np.allclose(b, [0.75, 0.25])

    async def test_impossible(self, revealing_family):
        try:
            belief_update(revealing_family, np.array([0.5, 0.5]), 1, 0, 0)
            assert False
        except ImpossibleTransition as e:
            assert str(e) == (
                "Transition 1 -0-> 0 has zero probability under every type "
                "in the belief"
            )

    async def test_regret(self):
        cross = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert regret(np.array([0.5, 0.5]), cross) == (0.5, 0)
        assert regret(np.array([1.0, 0.0]), cross) == (0.0, 0)
        value, i = regret(np.array([0.2, 0.8]), cross)
        assert value == pytest.approx(0.2)
        assert i == 1

    async def test_cross_values_diagonal_is_best(self, two_type_family):
        plans = type_policies_and_cross_values(two_type_family)
        cross = plans.cross_values(0, two_type_family.s0)
        for i in range(2):
            assert cross[i, i] >= cross[i].max() - 1e-12

    async def test_keep_all_is_bayes_optimal(self, two_type_family):
        plans = type_policies_and_cross_values(two_type_family)
        space = build_belief_space(two_type_family, plans, keep_all=True)
        plan = bounded_belief_plan(two_type_family, space, plans)
        oracle = bayes_value(
            two_type_family, two_type_family.prior, two_type_family.s0, 0
        )
        assert plan.value == pytest.approx(oracle)
        assert plan.expected_value == pytest.approx(plan.value)

    async def test_commit_is_no_better(self, two_type_family):
        plans = type_policies_and_cross_values(two_type_family)
        space = build_belief_space(two_type_family, plans, keep_all=True)
        belief = bounded_belief_plan(two_type_family, space, plans)
        commit = commit_plan(two_type_family, plans)
        assert commit.value <= belief.value + 1e-12
        assert commit.expected_value == pytest.approx(commit.value)
        assert commit.commitments.sum() == pytest.approx(1.0)

    async def test_pruned_space_is_smaller(self, two_type_family):
        plans = type_policies_and_cross_values(two_type_family)
        full = build_belief_space(two_type_family, plans, keep_all=True)
        pruned = build_belief_space(two_type_family, plans, p=0.5, alpha=1)
        assert len(pruned) <= len(full)
        assert (0, two_type_family.s0, (0.5, 0.5)) in pruned


@pytest.mark.asyncio
class TestMaster:
    @pytest.mark.parametrize("backend", ["simplex", "highs"])
    async def test_hand_solved(self, one_poi, backend):
        columns = ColumnSet(2)
        for agent, value in enumerate([1.0, 0.5]):
            columns.add(agent, Column("consume", value, np.ones((1, 1))))
            columns.add(agent, Column("null", 0.0, np.zeros((1, 1))))
        master = master_lp(columns, one_poi, horizon=1, backend=backend)
        assert master.objective == pytest.approx(1.0)
        assert np.allclose(master.x[0], [1.0, 0.0], atol=1e-9)
        assert np.allclose(master.x[1], [0.0, 1.0], atol=1e-9)
        assert np.all(master.prices >= 0.0)

    async def test_agents_need_columns(self, one_poi):
        columns = ColumnSet(2)
        columns.add(0, Column("null", 0.0, np.zeros((1, 1))))
        try:
            master_lp(columns, one_poi, horizon=1)
            assert False
        except ValueError as e:
            assert str(e) == "Every agent needs at least one column"


@pytest.mark.asyncio
class TestColumnGeneration:
    @pytest.mark.parametrize("planner", ["belief", "mdp"])
    async def test_two_offers(
        self, two_offer_family, two_offer_caps, planner, workers
    ):
        # Per step, one agent takes A and another B: 3 * (1 + 0.6)
        result = column_generation(
            [two_offer_family] * 3,
            two_offer_caps,
            planner=planner,
            workers=workers,
        )
        assert result.objective == pytest.approx(4.8, abs=1e-6)
        assert np.all(result.load_matrix <= two_offer_caps.limits + 1e-7)
        assert np.all(np.diff(result.history) >= -1e-9)
        for x in result.master.x:
            assert x.sum() == pytest.approx(1.0)

    async def test_highs_backend(self, two_offer_family, two_offer_caps):
        result = column_generation(
            [two_offer_family] * 3, two_offer_caps, backend="highs"
        )
        assert result.objective == pytest.approx(4.8, abs=1e-6)

    async def test_frames(self, two_offer_family, two_offer_caps):
        result = column_generation([two_offer_family] * 2, two_offer_caps)
        load = result.load_frame(two_offer_caps)
        assert len(load) == 3 * 2
        assert set(load.poi) == {"A", "B"}
        mix = result.mix_frame()
        assert mix.groupby("agent").weight.sum().tolist() == pytest.approx(
            [1.0, 1.0]
        )

    async def test_unconstrained_agent(self, two_offer_family):
        caps = CapacitySpec.from_actions(
            [("A", 5.0), ("B", 5.0)], n_states=1, n_actions=3, null_action=2
        )
        result = column_generation([two_offer_family], caps)
        assert result.objective == pytest.approx(3.0)

    async def test_shared_horizon(self, two_offer_family, two_offer_caps):
        other = TypedMdpFamily(
            two_offer_family.transitions, two_offer_family.rewards, 2
        )
        try:
            column_generation([two_offer_family, other], two_offer_caps)
            assert False
        except ValueError as e:
            assert str(e) == "Every agent must share the horizon"

    async def test_no_agents(self):
        try:
            ColumnSet(0)
            assert False
        except ValueError as e:
            assert str(e) == "At least one agent is required"


def enumerate_columns(family: TypedMdpFamily, caps: CapacitySpec):
    """
    Value and (horizon, n_pois) load of every deterministic time-dependent
    policy of a single-type family
    """
    h, S, A = family.horizon, family.n_states, family.n_actions
    P, R = family.transitions[0], family.rewards[0]
    for actions in itertools.product(range(A), repeat=h * S):
        policy = np.reshape(actions, (h, S))
        dist = np.zeros(S)
        dist[family.s0] = 1.0
        value, load = 0.0, np.zeros((h, caps.n_pois))
        for t in range(h):
            following = np.zeros(S)
            for s in range(S):
                a = policy[t, s]
                value += dist[s] * R[s, a]
                load[t] += dist[s] * caps.consumption[:, s, a]
                following += dist[s] * P[s, a]
            dist = following
        yield value, load


def joint_optimum(families, caps: CapacitySpec) -> float:
    values, loads, agents = [], [], []
    for i, family in enumerate(families):
        for value, load in enumerate_columns(family, caps):
            values.append(value)
            loads.append(load.reshape(-1))
            agents.append(i)
    n = len(values)
    A_eq = np.zeros((len(families), n))
    A_eq[agents, np.arange(n)] = 1.0
    solution = linprog(
        -np.array(values),
        A_ub=np.stack(loads, axis=1),
        b_ub=np.tile(caps.limits, families[0].horizon),
        A_eq=A_eq,
        b_eq=np.ones(len(families)),
        bounds=(0, None),
        method="highs",
    )
    assert solution.status == 0
    return -solution.fun


@pytest.fixture
def three_agents():
    rng = np.random.default_rng(7)
    families = []
    for _ in range(3):
        transitions = rng.dirichlet(np.ones(2), size=(1, 2, 3))
        rewards = np.zeros((1, 2, 3))
        rewards[0, :, :2] = rng.uniform(0.2, 1.0, size=(2, 2))
        families.append(TypedMdpFamily(transitions, rewards, horizon=3))
    caps = CapacitySpec.from_actions(
        [("A", 1.0), ("B", 1.0)], n_states=2, n_actions=3, null_action=2
    )
    return families, caps


@pytest.mark.asyncio
class TestJointOptimum:
    @pytest.mark.parametrize("planner", ["belief", "mdp"])
    async def test_matches_enumeration(self, three_agents, planner):
        families, caps = three_agents
        result = column_generation(families, caps, planner=planner)
        assert result.objective == pytest.approx(
            joint_optimum(families, caps), abs=1e-6
        )
        assert np.all(result.load_matrix <= caps.limits + 1e-6)

    async def test_suffix_tree_agents(self, low_high_pst, low_high_rewards):
        families = [
            family_from_pst(
                low_high_pst, [1.0, 10.0], low_high_rewards, 4, prior
            )
            for prior in ([0.5, 0.5], [0.9, 0.1], [0.1, 0.9])
        ]
        caps = CapacitySpec.from_actions(
            [("low", 1.0), ("high", 1.0)],
            n_states=3,
            n_actions=3,
            null_action=2,
        )
        result = column_generation(families, caps)
        assert np.all(np.diff(result.history) >= -1e-9)
        assert np.all(result.load_matrix <= caps.limits + 1e-6)
        assert result.objective > 0.0
