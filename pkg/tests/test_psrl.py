import numpy as np
import pytest

from saferec.core.exceptions import SingularEvaluation, ZeroEvidenceWarning
from saferec.pst import build_mdp
from saferec.psrl import (
    ThetaFamily,
    bellman_residual,
    compare_psrl,
    ds_psrl,
    evaluate_policy,
    greedy_thompson,
    max_switches,
    policy_iteration,
    posterior_update,
    posterior_variance_trace,
    solve_family,
    solve_mdp,
    value_iteration,
)


@pytest.fixture
def random_mdp():
    rng = np.random.default_rng(12)
    transitions = rng.dirichlet(np.ones(6), size=(3, 6))
    rewards = rng.random((6, 3))
    return transitions, rewards


@pytest.fixture
def two_thetas() -> ThetaFamily:
    return ThetaFamily([1.0, 10.0])


@pytest.mark.asyncio
class TestPlanning:
    async def test_policy_matches_value_iteration(self, random_mdp):
        transitions, rewards = random_mdp
        pi_policy, pi_values = policy_iteration(transitions, rewards, 0.9)
        vi_policy, vi_values = value_iteration(transitions, rewards, 0.9)
        assert np.array_equal(pi_policy, vi_policy)
        assert np.allclose(pi_values, vi_values, atol=1e-8)
        assert bellman_residual(transitions, rewards, 0.9, pi_values) < 1e-9

    async def test_single_state(self):
        values = evaluate_policy(
            np.ones((1, 1, 1)), np.array([[0.5]]), 0.9, np.array([0])
        )
        assert values[0] == pytest.approx(5.0)

    async def test_singular(self):
        try:
            evaluate_policy(
                np.ones((1, 1, 1)), np.array([[0.5]]), 1.0, np.array([0])
            )
            assert False
        except SingularEvaluation as e:
            assert str(e) == "Policy evaluation system is singular (gamma=1.0)"

    async def test_recommends_high_after_low(
        self, low_high_pst, low_high_rewards
    ):
        mdp = build_mdp(low_high_pst, 10.0, low_high_rewards)
        policy, values = solve_mdp(mdp)
        low, high = mdp.state_index((0,)), mdp.state_index((1,))
        assert policy[low] == 1
        assert policy[high] == mdp.null_action
        assert values[low] == pytest.approx(4.847, abs=1e-3)
        assert values[high] == pytest.approx(4.594, abs=1e-3)

    async def test_passive_user_gets_nothing(
        self, low_high_pst, low_high_rewards
    ):
        # Recommending low is free but changes nothing, so null is kept
        mdp = build_mdp(low_high_pst, 1.0, low_high_rewards)
        policy, _ = solve_mdp(mdp)
        assert np.all(policy == mdp.null_action)

    async def test_solve_family(
        self, low_high_pst, low_high_rewards, two_thetas, workers
    ):
        solved = solve_family(
            low_high_pst, two_thetas, low_high_rewards, workers=workers
        )
        assert len(solved.policies) == 2
        assert solved.mdps[1].theta == 10.0


@pytest.mark.asyncio
class TestThetaFamily:
    async def test_uniform_prior(self, two_thetas):
        assert np.allclose(two_thetas.prior, [0.5, 0.5])
        assert two_thetas.index(10.0) == 1

    async def test_unknown_theta(self, two_thetas):
        try:
            two_thetas.index(3.0)
            assert False
        except KeyError as e:
            assert e.args[0] == "'3.0'"

    async def test_theta_below_one(self):
        try:
            ThetaFamily([0.5, 2.0])
            assert False
        except ValueError as e:
            assert str(e) == "Every theta must be at least 1"

    async def test_bad_prior(self):
        try:
            ThetaFamily([1.0, 2.0], prior=[0.5, 0.6])
            assert False
        except ValueError as e:
            assert str(e) == "Prior must be a distribution"

    async def test_empty(self):
        try:
            ThetaFamily([])
            assert False
        except ValueError as e:
            assert str(e) == "A theta family needs at least one theta"


@pytest.mark.asyncio
class TestPosterior:
    async def test_update(self, low_high_pst, low_high_rewards, two_thetas):
        solved = solve_family(low_high_pst, two_thetas, low_high_rewards)
        low = solved.mdps[0].state_index((0,))
        high = solved.mdps[0].state_index((1,))
        posterior = posterior_update(
            two_thetas.prior, solved.mdps, low, 1, high
        )
        accepted = 0.3 ** 0.1
        assert np.allclose(
            posterior, np.array([0.3, accepted]) / (0.3 + accepted)
        )

    async def test_null_action_is_uninformative(
        self, low_high_pst, low_high_rewards, two_thetas
    ):
        solved = solve_family(low_high_pst, two_thetas, low_high_rewards)
        low = solved.mdps[0].state_index((0,))
        high = solved.mdps[0].state_index((1,))
        posterior = posterior_update(
            two_thetas.prior, solved.mdps, low, 2, high
        )
        assert np.allclose(posterior, [0.5, 0.5])

    async def test_zero_evidence(
        self, low_high_pst, low_high_rewards, two_thetas
    ):
        solved = solve_family(low_high_pst, two_thetas, low_high_rewards)
        root = solved.mdps[0].state_index(())
        low = solved.mdps[0].state_index((0,))
        # No symbol leads back to the root
        with pytest.warns(ZeroEvidenceWarning):
            posterior = posterior_update(
                two_thetas.prior, solved.mdps, low, 1, root
            )
        assert np.array_equal(posterior, two_thetas.prior)


@pytest.mark.asyncio
class TestAgents:
    async def test_switch_schedule(
        self, low_high_pst, low_high_rewards, two_thetas
    ):
        run = ds_psrl(
            low_high_pst, two_thetas, 10.0, low_high_rewards, 64, seed=0
        )
        assert run.switch_times == [1, 2, 4, 8, 16, 32, 64]
        assert run.n_switches <= max_switches(64)
        assert len(run.sampled_thetas) == run.n_switches
        assert np.allclose(run.posterior.sum(axis=1), 1.0)

    async def test_posterior_concentrates(
        self, low_high_pst, low_high_rewards, two_thetas
    ):
        run = ds_psrl(
            low_high_pst, two_thetas, 10.0, low_high_rewards, 2000, seed=3
        )
        assert run.posterior[-1, 1] > 0.9

    async def test_greedy_never_waits(
        self, low_high_pst, low_high_rewards, two_thetas
    ):
        run = greedy_thompson(
            low_high_pst, two_thetas, 10.0, low_high_rewards, 50, seed=0
        )
        assert run.n_null == 0
        assert run.n_switches == 0
        assert len(run.sampled_thetas) == 50

    async def test_seeded(self, low_high_pst, low_high_rewards, two_thetas):
        first = ds_psrl(
            low_high_pst, two_thetas, 10.0, low_high_rewards, 100, seed=8
        )
        second = ds_psrl(
            low_high_pst, two_thetas, 10.0, low_high_rewards, 100, seed=8
        )
        assert first.to_dict() == second.to_dict()

    async def test_frame(self, low_high_pst, low_high_rewards, two_thetas):
        run = ds_psrl(
            low_high_pst, two_thetas, 10.0, low_high_rewards, 10, seed=0
        )
        frame = run.to_frame()
        assert len(frame) == 10
        assert "posterior_10" in frame.columns
        variance = posterior_variance_trace(run)
        assert variance[0] == pytest.approx(20.25)
        assert np.all(variance >= 0)

    async def test_horizon(self, low_high_pst, low_high_rewards, two_thetas):
        try:
            ds_psrl(low_high_pst, two_thetas, 10.0, low_high_rewards, 0)
            assert False
        except ValueError as e:
            assert str(e) == "Horizon must be positive, got 0"

    async def test_planning_beats_greedy(
        self, low_high_pst, low_high_rewards, two_thetas
    ):
        table, cadence = compare_psrl(
            low_high_pst, two_thetas, 10.0, low_high_rewards, 2000, seed=1
        )
        assert list(table.index) == ["mdp", "greedy"]
        assert list(table.columns) == ["thompson", "known"]
        # Long-run averages are about 0.47 and 0.33
        assert table.loc["mdp", "known"] == pytest.approx(0.47, abs=0.05)
        assert table.loc["greedy", "known"] == pytest.approx(0.33, abs=0.05)
        assert table.loc["mdp", "known"] > table.loc["greedy", "known"]
        assert len(cadence) == 4


@pytest.mark.asyncio
class TestSwitches:
    async def test_max_switches(self):
        assert max_switches(1) == 1
        assert max_switches(64) == 7
        assert max_switches(100) == 7
