import math

import numpy as np
import pytest

from saferec.core import Dataset, TabularPolicy
from saferec.core.exceptions import (
    ConstantSeries,
    DegenerateSeries,
    ForecastFallbackWarning,
)
from saferec.nonstationary import (
    OpeSeries,
    acf,
    acf_table,
    bin_series,
    fit_forecast,
    fit_order,
    forecast,
    mean_shift_test,
    rolling_compare,
    rolling_compare_series,
)
from saferec.simulators import (
    hotel_drift,
    improvable_env,
    simulate,
    stationary_drift,
)

from .conftest import make_trajectory


def clicks_dataset(clicks, timestamps=None) -> Dataset:
    timestamps = timestamps or [None] * len(clicks)
    return Dataset(
        make_trajectory([(0, i % 2, float(c), 0.5)], timestamp=stamp)
        for i, (c, stamp) in enumerate(zip(clicks, timestamps))
    )


@pytest.fixture
def ar_series() -> np.ndarray:
    rng = np.random.default_rng(21)
    noise = rng.normal(size=5000)
    y = np.zeros(5000)
    for t in range(1, 5000):
        y[t] = 0.6 * y[t - 1] + noise[t]
    return y


@pytest.mark.asyncio
class TestAcf:
    async def test_alternating(self):
        y = np.array([0.0, 1.0] * 4)
        value, band = acf(y, 1)
        assert value == pytest.approx(-7.0 / 8.0)
        assert band == pytest.approx(1.96 / math.sqrt(8))
        assert acf(y, 0)[0] == pytest.approx(1.0)

    async def test_constant(self):
        try:
            acf(np.full(5, 2.0), 1)
            assert False
        except ConstantSeries as e:
            assert str(e) == (
                "Series is constant at 2.0: autocorrelation is undefined"
            )

    async def test_lag_range(self):
        try:
            acf(np.arange(4.0), 4)
            assert False
        except ValueError as e:
            assert str(e) == "Lag 4 outside 0..3"

    async def test_table(self):
        table = acf_table(np.array([0.0, 1.0] * 4))
        assert list(table.lag) == list(range(8))
        assert table.outside.iloc[1]


@pytest.mark.asyncio
class TestForecast:
    async def test_recovers_ar_coefficient(self, ar_series):
        model = fit_order(ar_series, 1, 0)
        assert model.coefficients[0] == pytest.approx(0.6, abs=0.05)
        assert model.intercept == pytest.approx(0.0, abs=0.1)

    async def test_too_short_for_order(self):
        assert fit_order(np.arange(4.0), 2, 0) is None

    async def test_linear_trend_is_exact(self):
        y = 1.0 + 2.0 * np.arange(10)
        model = fit_forecast(y, workers=2)
        assert model.order == (0, 1)
        assert model.aicc == -math.inf
        assert forecast(y) == (pytest.approx(21.0), False)

    async def test_short_series(self):
        try:
            fit_forecast(np.arange(5.0))
            assert False
        except DegenerateSeries as e:
            assert str(e) == (
                "Cannot fit series of length 5: at least 10 values required"
            )

    async def test_fallback(self):
        with pytest.warns(ForecastFallbackWarning):
            value, fell_back = forecast(np.array([1.0, 2.0, 6.0]))
        assert value == pytest.approx(3.0)
        assert fell_back

    async def test_empty(self):
        try:
            forecast(np.array([]))
            assert False
        except ValueError as e:
            assert str(e) == "Cannot forecast an empty series"


@pytest.mark.asyncio
class TestRolling:
    async def test_single_value(self):
        rmse_tsp, rmse_std, report = rolling_compare_series(np.array([1.0]))
        assert math.isnan(rmse_tsp) and math.isnan(rmse_std)
        assert len(report) == 0

    async def test_report(self):
        y = 1.0 + 2.0 * np.arange(12)
        rmse_tsp, rmse_std, report = rolling_compare_series(y)
        assert list(report.iota) == list(range(1, 12))
        assert report.fallback.iloc[0]
        assert not report.fallback.iloc[-1]
        # The trend is predicted exactly once the forecaster takes over
        assert report.tsp_pred.iloc[-1] == pytest.approx(23.0)
        assert rmse_tsp < rmse_std

    async def test_from_dataset(self, behavior):
        data = clicks_dataset([1, 0] * 6)
        _, _, report = rolling_compare(data, behavior, bin_width=2)
        assert len(report) == 5

    async def test_forecaster_tracks_a_drop(self):
        env = improvable_env().with_drift(hotel_drift(3000))
        uniform = TabularPolicy([0.5, 0.5])
        wins = 0
        for seed in range(5):
            data = simulate(env, uniform, 3000, seed=seed)
            rmse_tsp, rmse_std, _ = rolling_compare(
                data, uniform, bin_width=50
            )
            wins += rmse_tsp < rmse_std
        assert wins >= 4

    async def test_stationary_stream_matches_running_mean(self):
        env = improvable_env().with_drift(stationary_drift(3000))
        uniform = TabularPolicy([0.5, 0.5])
        close = 0
        for seed in range(5):
            data = simulate(env, uniform, 3000, seed=seed)
            rmse_tsp, rmse_std, _ = rolling_compare(
                data, uniform, bin_width=50
            )
            close += 0.8 <= rmse_tsp / rmse_std <= 1.25
        assert close >= 4


@pytest.mark.asyncio
class TestBinning:
    async def test_by_episode(self, behavior):
        series = bin_series(clicks_dataset([1, 0, 1, 1, 0, 0]), behavior, 2)
        assert np.array_equal(series.x, [0, 1, 2])
        assert np.allclose(series.y, [0.5, 1.0, 0.0])

    async def test_by_time(self, behavior):
        data = clicks_dataset([1, 0, 1, 1, 0], [0.0, 0.5, 3.0, 3.2, 7.0])
        series = bin_series(data, behavior, 2.0, by_time=True)
        assert np.array_equal(series.x, [0, 1, 3])
        assert np.allclose(series.y, [0.5, 1.0, 0.0])

    async def test_time_needs_stamps(self, behavior):
        try:
            bin_series(clicks_dataset([1, 0]), behavior, 1, by_time=True)
            assert False
        except ValueError as e:
            assert str(e) == "Time binning needs a timestamp on every episode"

    async def test_series_validation(self):
        try:
            OpeSeries([1.0, 1.0], [0.0, 0.0], 1)
            assert False
        except ValueError as e:
            assert str(e) == "x must be strictly increasing"


@pytest.mark.asyncio
class TestMeanShift:
    async def test_detects_shift(self):
        y = np.array([0.0, 0.1, 0.0, 0.1, 5.0, 5.1, 5.0, 5.1])
        assert mean_shift_test(y) < 0.001

    async def test_halves(self):
        try:
            mean_shift_test(np.arange(5.0), split=1)
            assert False
        except ValueError as e:
            assert str(e) == "Each half needs at least 2 values"
