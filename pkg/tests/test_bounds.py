import math

import numpy as np
import pytest
from scipy import stats

from saferec.bounds import (
    BoundMethod,
    GammaSpec,
    PointMass,
    bootstrap_means,
    bound_policy,
    compare_bounds,
    error_rate_experiment,
    lower_bound,
    lower_bound_bca,
    lower_bound_ci,
    lower_bound_ttest,
    risk_table,
)
from saferec.core import Dataset
from saferec.core.exceptions import EmptyData, TooFewSamples

from .conftest import make_trajectory


@pytest.fixture
def gamma_samples() -> np.ndarray:
    return np.random.default_rng(7).gamma(2.0, 50.0, size=200)


@pytest.mark.asyncio
class TestTtest:
    async def test_constant(self):
        result = lower_bound_ttest([3.0] * 10, 0.05)
        assert result.lower_bound == 3.0
        assert result.sample_std == 0.0

    async def test_coin_flips(self):
        xs = [0.0, 1.0] * 50
        std = math.sqrt(25.0 / 99.0)
        expected = 0.5 - std / 10.0 * stats.t.ppf(0.95, 99)
        result = lower_bound_ttest(xs, 0.05)
        assert result.lower_bound == pytest.approx(expected, abs=1e-12)
        assert result.lower_bound == pytest.approx(0.41656, abs=1e-4)

    async def test_translation_and_scale(self, gamma_samples):
        base = lower_bound_ttest(gamma_samples, 0.05).lower_bound
        shifted = lower_bound_ttest(gamma_samples + 7.0, 0.05).lower_bound
        scaled = lower_bound_ttest(gamma_samples * 3.0, 0.05).lower_bound
        assert shifted == pytest.approx(base + 7.0)
        assert scaled == pytest.approx(base * 3.0)

    async def test_prediction_is_less_conservative(self, gamma_samples):
        n = len(gamma_samples)
        own = lower_bound_ttest(gamma_samples, 0.05, m=n).lower_bound
        larger = lower_bound_ttest(gamma_samples, 0.05, m=10 * n).lower_bound
        assert larger > own

    async def test_too_few(self):
        try:
            lower_bound_ttest([1.0], 0.05)
            assert False
        except TooFewSamples as e:
            assert str(e) == "Too few samples: got 1, at least 2 required"

    async def test_delta_range(self):
        try:
            lower_bound_ttest([1.0, 2.0], 0.6)
            assert False
        except ValueError as e:
            assert str(e) == "delta must lie in (0, 0.5], got 0.6"


@pytest.mark.asyncio
class TestCi:
    async def test_constant_large_sample(self):
        c = 2.0
        result = lower_bound_ci([c] * 2000, 0.05)
        # Every 20th sample sets the clip level; the other 1900 are bounded
        expected = c - 7.0 * c * math.log(40.0) / (3.0 * 1899)
        assert result.truncation_threshold == c
        assert result.lower_bound == pytest.approx(expected)
        assert not result.conservative

    async def test_small_sample_is_conservative(self):
        result = lower_bound_ci([1.0, 2.0, 3.0], 0.05)
        assert result.conservative
        assert result.truncation_threshold == 3.0

    async def test_below_mean(self, gamma_samples):
        result = lower_bound_ci(gamma_samples, 0.05)
        assert result.lower_bound <= result.sample_mean

    async def test_more_conservative_than_ttest(self, gamma_samples):
        assert (
            lower_bound_ci(gamma_samples, 0.05).lower_bound
            <= lower_bound_ttest(gamma_samples, 0.05).lower_bound
        )

    async def test_negative_samples(self):
        try:
            lower_bound_ci([-1.0, 1.0], 0.05)
            assert False
        except ValueError as e:
            assert str(e) == "The CI bound needs nonnegative samples"


@pytest.mark.asyncio
class TestBca:
    async def test_constant(self):
        result = lower_bound_bca([4.0] * 30, 0.05, B=1000)
        assert result.lower_bound == 4.0
        assert result.degenerate

    async def test_seeded(self, gamma_samples):
        first = lower_bound_bca(gamma_samples, 0.05, B=1000, seed=3)
        second = lower_bound_bca(gamma_samples, 0.05, B=1000, seed=3)
        assert first.lower_bound == second.lower_bound

    async def test_workers_do_not_change_result(self, gamma_samples):
        sequential = bootstrap_means(gamma_samples, 1000, 5)
        threaded = bootstrap_means(gamma_samples, 1000, 5, workers=4)
        assert np.array_equal(sequential, threaded)

    async def test_below_max_and_mean(self, gamma_samples):
        result = lower_bound_bca(gamma_samples, 0.05, B=1000)
        assert result.lower_bound <= np.max(gamma_samples)
        assert result.lower_bound < result.sample_mean

    async def test_minimum_resamples(self, gamma_samples):
        try:
            lower_bound_bca(gamma_samples, 0.05, B=10)
            assert False
        except ValueError as e:
            assert str(e) == "B must be at least 1000, got 10"


@pytest.mark.asyncio
class TestTables:
    async def test_risk_table_monotone(self, gamma_samples):
        table = risk_table(
            gamma_samples, [0.01, 0.05, 0.1, 0.5], BoundMethod.TT
        )
        assert list(table.columns) == ["delta", "confidence", "lower_bound"]
        assert table.lower_bound.is_monotonic_increasing

    async def test_compare_bounds(self, gamma_samples):
        table = compare_bounds(gamma_samples, 0.05, bootstrap_b=1000)
        assert list(table.method) == ["ci", "tt", "bca"]

    async def test_dispatch(self, gamma_samples):
        for method in BoundMethod:
            result = lower_bound(
                gamma_samples, 0.05, method, bootstrap_b=1000
            )
            assert result.method == method


@pytest.mark.asyncio
class TestBoundPolicy:
    async def test_on_policy_all_clicks(self, behavior):
        data = Dataset(
            make_trajectory([(0, i % 2, 1.0, 0.5)]) for i in range(10)
        )
        result = bound_policy(data, behavior, 0.05, BoundMethod.TT)
        assert result.lower_bound == pytest.approx(1.0)
        assert result.to_dict()["method"] == "tt"

    async def test_empty(self, behavior):
        try:
            bound_policy(Dataset(), behavior, 0.05, BoundMethod.TT)
            assert False
        except EmptyData:
            pass


@pytest.mark.asyncio
class TestErrorRates:
    async def test_gamma_error_rates(self):
        table = error_rate_experiment(
            GammaSpec(),
            n_grid=(20, 50),
            trials=1000,
            methods=(BoundMethod.CI, BoundMethod.TT),
            workers=4,
        )
        ci = table[table.method == "ci"]
        assert (ci.error_rate == 0.0).all()
        assert (table.true_mean == 100.0).all()
        assert len(table) == 4

    async def test_point_mass_never_errs(self):
        table = error_rate_experiment(
            PointMass(), n_grid=(20,), trials=1000, methods=(BoundMethod.TT,)
        )
        assert table.error_rate.iloc[0] == 0.0

    async def test_minimum_trials(self):
        try:
            error_rate_experiment(GammaSpec(), trials=10)
            assert False
        except ValueError as e:
            assert str(e) == "trials must be at least 1000, got 10"
