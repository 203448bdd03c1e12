import math
from itertools import combinations

import numpy as np
import pytest

from saferec.core.exceptions import (
    AiccUndefinedWarning,
    EmptyCorpus,
    ViolationFound,
)
from saferec.pst import (
    Pst,
    RewardSpec,
    aicc,
    build_mdp,
    lipschitz_check,
    perturb_distribution,
    perturb_dynamics,
    perturbed_table,
    pst_fit,
    pst_loglik,
    read_sequences,
    select_pst,
)


@pytest.fixture
def three_level_nodes():
    return {
        (): [0.5, 0.5],
        (0,): [0.9, 0.1],
        (1,): [0.2, 0.8],
        (1, 0): [0.6, 0.4],
    }


@pytest.mark.asyncio
class TestPst:
    async def test_longest_suffix(self, three_level_nodes):
        pst = Pst.from_nodes([0, 1], three_level_nodes)
        assert pst.longest_suffix([]) == ()
        assert pst.longest_suffix([0, 0]) == (0,)
        assert pst.longest_suffix([1, 1, 0]) == (1, 0)
        assert np.allclose(pst.predict([0, 1]), [0.2, 0.8])
        assert pst.depth == 2
        assert pst.n_parameters == 4

    async def test_suffix_order(self, three_level_nodes):
        pst = Pst.from_nodes([0, 1], three_level_nodes)
        assert pst.suffixes == [(), (0,), (1,), (1, 0)]

    async def test_round_trip(self, three_level_nodes, tmp_path):
        pst = Pst.from_nodes([0, 1], three_level_nodes)
        path = tmp_path / "pst.json"
        pst.dump(path)
        loaded = Pst.load(path)
        assert loaded.suffixes == pst.suffixes
        for suffix in pst.suffixes:
            assert np.array_equal(
                loaded.nodes[suffix].probs, pst.nodes[suffix].probs
            )

    async def test_missing_parent(self):
        try:
            Pst.from_nodes([0, 1], {(): [0.5, 0.5], (0, 1): [0.5, 0.5]})
            assert False
        except ValueError as e:
            assert str(e) == "Suffix (0, 1) is stored without its suffix (1,)"

    async def test_needs_root(self):
        try:
            Pst.from_nodes([0, 1], {(0,): [0.5, 0.5]})
            assert False
        except ValueError as e:
            assert str(e) == "A suffix tree needs a root node"

    async def test_not_a_distribution(self):
        try:
            Pst.from_nodes([0, 1], {(): [0.5, 0.6]})
            assert False
        except ValueError as e:
            assert str(e) == "Node () is not a distribution"


@pytest.mark.asyncio
class TestFit:
    async def test_single_symbol(self):
        pst = pst_fit([[1, 1, 1, 1]])
        assert pst.alphabet == (1,)
        assert np.array_equal(pst.predict([1, 1]), [1.0])
        assert pst.n_parameters == 0
        assert pst_loglik(pst, [[1, 1, 1, 1]]) == 0.0

    async def test_smoothed_counts(self):
        pst = pst_fit([[0, 1, 0, 1, 0]], max_depth=1, min_count=1)
        # after 0 the corpus always shows 1, twice
        assert np.allclose(pst.nodes[(0,)].probs, [0.25, 0.75])
        assert pst.nodes[(0,)].count == 2
        assert np.allclose(pst.nodes[()].probs, [4.0 / 7.0, 3.0 / 7.0])

    async def test_min_count(self):
        pst = pst_fit([[0, 0, 0, 0, 1]], max_depth=1, min_count=2)
        assert (0,) in pst.nodes
        assert (1,) not in pst.nodes

    async def test_prune_everything(self, alternator):
        pst = pst_fit(alternator, max_depth=2, prune_epsilon=2.0)
        assert pst.suffixes == [()]

    async def test_prune_nothing(self, alternator):
        pst = pst_fit(alternator, max_depth=2)
        assert (0,) in pst.nodes and (1, 0) in pst.nodes

    async def test_alphabet_override(self):
        pst = pst_fit([[0, 0]], max_depth=0, alphabet=[0, 1, 2])
        assert pst.n_symbols == 3
        assert np.allclose(pst.nodes[()].probs, [0.6, 0.2, 0.2])

    async def test_empty_corpus(self):
        try:
            pst_fit([[]])
            assert False
        except EmptyCorpus as e:
            assert str(e) == "Corpus contains no symbols"

    async def test_read_sequences(self, tmp_path):
        path = tmp_path / "corpus.txt"
        path.write_text("0,1,2\n\n2, 2\n")
        assert read_sequences(path) == [[0, 1, 2], [2, 2]]


@pytest.mark.asyncio
class TestSelection:
    async def test_uniform_loglik(self):
        pst = Pst.from_nodes([0, 1, 2], {(): [1 / 3, 1 / 3, 1 / 3]})
        sequences = [[0, 1, 2, 2], [1, 0]]
        assert pst_loglik(pst, sequences) == pytest.approx(6 * math.log(1 / 3))

    async def test_aicc(self):
        assert aicc(-10.0, 2, 10) == pytest.approx(4 + 20 + 12 / 7)

    async def test_aicc_undefined(self):
        with pytest.warns(AiccUndefinedWarning):
            assert math.isnan(aicc(-1.0, 3, 4))

    async def test_alternator_prefers_depth_one(self, alternator):
        pst, table = select_pst(alternator, depths=(0, 1, 2))
        assert pst.depth == 1
        assert list(table.depth) == [0, 1, 2]
        assert table.aicc.idxmin() == 1


@pytest.mark.asyncio
class TestPerturbation:
    async def test_identity(self):
        probs = np.array([0.2, 0.3, 0.5])
        assert np.array_equal(perturb_distribution(probs, 1, 1.0), probs)
        assert np.array_equal(perturb_distribution(probs, 1, None), probs)

    async def test_square_root(self):
        probs = np.array([0.25, 0.25, 0.5])
        out = perturb_distribution(probs, 0, 2.0)
        assert np.allclose(out, [0.5, 0.5 / 3, 1 / 3])
        assert out.sum() == pytest.approx(1.0)

    async def test_table_matches(self):
        probs = np.array([0.2, 0.3, 0.5])
        table = perturbed_table(probs, [1.0, 3.0])
        for a in range(3):
            for j, theta in enumerate([1.0, 3.0]):
                assert np.allclose(
                    table[a, j], perturb_distribution(probs, a, theta)
                )

    async def test_theta_below_one(self):
        try:
            perturb_distribution(np.array([0.5, 0.5]), 0, 0.5)
            assert False
        except ValueError as e:
            assert str(e) == "theta must be at least 1, got 0.5"

    async def test_certain_symbol(self):
        probs = np.array([1.0, 0.0])
        assert np.array_equal(perturb_distribution(probs, 0, 2.0), probs)
        assert np.array_equal(perturb_distribution(probs, 1, 2.0), probs)

    async def test_single_symbol_alphabet(self):
        pst = pst_fit([[1, 1, 1, 1]])
        out = perturb_distribution(pst.nodes[()].probs, 0, 5.0)
        assert np.array_equal(out, [1.0])
        assert lipschitz_check(pst, [(1.0, 20.0)]) <= 0.0

    async def test_not_a_probability(self):
        try:
            perturb_distribution(np.array([1.5, -0.5]), 0, 2.0)
            assert False
        except ValueError as e:
            assert str(e) == (
                "Recommended symbol probability 1.5 must lie in [0, 1]"
            )

    async def test_dynamics_by_symbol(self, low_high_pst):
        out = perturb_dynamics(low_high_pst, (0,), 1, 10.0)
        assert out[1] == pytest.approx(0.3 ** 0.1)

    async def test_lipschitz_holds(self, three_level_nodes):
        pst = Pst.from_nodes([0, 1], three_level_nodes)
        slack = lipschitz_check(pst, [(1.0, 2.0), (2.0, 10.0), (1.0, 50.0)])
        assert slack <= 0.0

    async def test_lipschitz_violation(self, low_high_pst, monkeypatch):
        monkeypatch.setattr("saferec.pst.LIPSCHITZ_CONSTANT", 0.0)
        try:
            lipschitz_check(low_high_pst, [(1.0, 2.0)])
            assert False
        except ViolationFound as e:
            assert len(e.violations) == 6
            assert str(e).startswith("Lipschitz bound violated:")

    async def test_lipschitz_large_alphabet(self):
        rng = np.random.default_rng(88)
        nodes = {(): rng.dirichlet(np.ones(88))}
        for symbol in range(0, 88, 8):
            nodes[(symbol,)] = rng.dirichlet(np.full(88, 0.3))
        pst = Pst.from_nodes(list(range(88)), nodes)
        pairs = list(combinations(np.arange(1.0, 21.0), 2))
        assert lipschitz_check(pst, pairs) <= 0.0


@pytest.mark.asyncio
class TestMdp:
    async def test_shapes(self, low_high_pst, low_high_rewards):
        mdp = build_mdp(low_high_pst, 10.0, low_high_rewards)
        assert mdp.n_states == 3
        assert mdp.n_actions == 3
        assert mdp.null_action == 2
        assert np.allclose(mdp.transitions.sum(axis=-1), 1.0)

    async def test_perturbed_acceptance(self, low_high_pst, low_high_rewards):
        mdp = build_mdp(low_high_pst, 10.0, low_high_rewards)
        state = mdp.state_index((0,))
        assert mdp.symbol_probs[1, state, 1] == pytest.approx(0.88656, 1e-4)
        assert np.allclose(mdp.symbol_probs[2, state], [0.7, 0.3])

    async def test_costs(self, low_high_pst, low_high_rewards):
        mdp = build_mdp(low_high_pst, 10.0, low_high_rewards)
        # recommending the symbol just chosen adds fatigue
        assert mdp.costs[mdp.state_index((1,)), 1] == pytest.approx(0.6)
        assert mdp.costs[mdp.state_index((0,)), 1] == pytest.approx(0.2)
        assert mdp.costs[mdp.state_index((0,)), 0] == 0.0
        assert np.all(mdp.costs[:, 2] == 0.0)

    async def test_rewards(self, low_high_pst, low_high_rewards):
        mdp = build_mdp(low_high_pst, 10.0, low_high_rewards)
        state = mdp.state_index((0,))
        assert mdp.rewards[state, 2] == pytest.approx(0.3)
        assert mdp.rewards[state, 1] == pytest.approx(0.3 ** 0.1 - 0.2)

    async def test_desirability_length(self, low_high_pst):
        try:
            build_mdp(low_high_pst, 2.0, RewardSpec((1.0,)))
            assert False
        except ValueError as e:
            assert str(e) == "Desirability needs one entry per symbol"

    async def test_reward_spec_from_pst(self, low_high_pst):
        spec = RewardSpec.from_pst(low_high_pst)
        assert spec.desirability == (0.7, 0.3)
