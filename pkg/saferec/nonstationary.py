"""
Off-policy estimates as a time series: autocorrelation diagnostics, an
autoregressive forecaster chosen by AICc, and a rolling comparison of the
forecast against the running mean.
"""
import logging
import math
import warnings
from dataclasses import dataclass
from itertools import product
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from numpy import ndarray
from scipy import stats

from .core.exceptions import (
    ConstantSeries,
    DegenerateSeries,
    ForecastFallbackWarning,
)
from .core.policies import Policy
from .core.tools import parallel_map
from .core.trajectories import Dataset
from .estimators import Estimator, importance_weighted_returns
from .pst import aicc

logger = logging.getLogger(__name__)

MAX_P = 5
MAX_D = 1
MIN_FORECAST_LENGTH = 10
EXACT_FIT_TOLERANCE = 1e-20
ACF_BAND_Z = 1.96


@dataclass
class OpeSeries:
    x: ndarray
    y: ndarray
    bin_width: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape:
            raise ValueError("x and y must have the same length")
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("x must be strictly increasing")

    def __len__(self):
        return len(self.y)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.x, "y": self.y})


def acf(y: ndarray, h: int) -> Tuple[float, float]:
    """
    Sample autocorrelation at lag h, normalised by the lag-0 sum of squares

    returns (acf, half-width of the 95% band for white noise)
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 2:
        raise ValueError(f"Series needs at least 2 values, got {n}")
    if not 0 <= h < n:
        raise ValueError(f"Lag {h} outside 0..{n - 1}")
    centred = y - y.mean()
    denominator = float(np.dot(centred, centred))
    if denominator == 0.0:
        raise ConstantSeries(float(y[0]))
    value = float(np.dot(centred[h:], centred[: n - h])) / denominator
    return value, ACF_BAND_Z / math.sqrt(n)


def acf_table(y: ndarray, max_lag: int = 20) -> pd.DataFrame:
    max_lag = min(max_lag, len(y) - 1)
    rows = []
    for h in range(max_lag + 1):
        value, band = acf(y, h)
        rows.append(
            {
                "lag": h,
                "acf": value,
                "band": band,
                "outside": abs(value) > band,
            }
        )
    return pd.DataFrame(rows)


def bin_series(
    data: Dataset,
    pi_e: Policy,
    bin_width: float = 1,
    estimator: Estimator = Estimator.IS,
    by_time: bool = False,
) -> OpeSeries:
    """
    Per-trajectory estimates averaged over consecutive bins of bin_width
    episodes, or of bin_width time units when by_time (empty time bins are
    skipped)
    """
    if bin_width <= 0:
        raise ValueError(f"Bin width must be positive, got {bin_width}")
    values = importance_weighted_returns(data, pi_e, estimator)
    if by_time:
        stamps = data.timestamps
        if stamps is None:
            raise ValueError("Time binning needs a timestamp on every episode")
        keys = np.floor((stamps - stamps.min()) / bin_width).astype(int)
    else:
        keys = np.arange(data.n) // int(bin_width)
    means = pd.Series(values).groupby(keys).mean()
    return OpeSeries(means.index.to_numpy(), means.to_numpy(), bin_width)


@dataclass(frozen=True)
class ForecastModel:
    p: int
    d: int
    coefficients: Tuple[float, ...]
    intercept: float
    aicc: float

    @property
    def order(self) -> Tuple[int, int]:
        return self.p, self.d

    def predict(self, y: ndarray) -> float:
        """
        returns the one-step-ahead forecast following y
        """
        y = np.asarray(y, dtype=float)
        z = np.diff(y, n=self.d)
        if len(z) < self.p:
            raise ValueError(
                f"Need {self.p + self.d} values to forecast, got {len(y)}"
            )
        lags = z[::-1][: self.p]
        step = self.intercept + float(np.dot(self.coefficients, lags))
        return float(y[-1] + step) if self.d == 1 else step

    def to_dict(self):
        return {
            "p": self.p,
            "d": self.d,
            "coefficients": list(self.coefficients),
            "intercept": self.intercept,
            "aicc": self.aicc,
        }


def _design(z: ndarray, p: int) -> Tuple[ndarray, ndarray]:
    n = len(z) - p
    columns = [np.ones(n)] + [z[p - i : p - i + n] for i in range(1, p + 1)]
    return np.column_stack(columns), z[p:]


def fit_order(y: ndarray, p: int, d: int) -> Optional[ForecastModel]:
    """
    Least-squares AR(p) with intercept on the d-times differenced series.

    returns None when there are too few observations for AICc; an exact
    fit scores -inf
    """
    z = np.diff(np.asarray(y, dtype=float), n=d)
    if len(z) <= p:
        return None
    X, target = _design(z, p)
    n = len(target)
    k = p + 2  # coefficients, intercept and noise variance
    if n <= k + 1:
        return None
    beta, *_ = np.linalg.lstsq(X, target, rcond=None)
    rss = float(np.sum((target - X @ beta) ** 2))
    scale = max(1.0, float(np.dot(target, target)))
    if rss <= EXACT_FIT_TOLERANCE * scale:
        score = -math.inf
    else:
        sigma2 = rss / n
        loglik = -0.5 * n * (math.log(2 * math.pi * sigma2) + 1)
        score = aicc(loglik, k, n)
    return ForecastModel(
        p, d, tuple(float(b) for b in beta[1:]), float(beta[0]), score
    )


def fit_forecast(
    y: ndarray,
    max_p: int = MAX_P,
    max_d: int = MAX_D,
    workers: Optional[int] = None,
) -> ForecastModel:
    """
    Grid search over p in 0..max_p and d in 0..max_d; the lowest AICc wins
    and ties keep the smaller (p, d)
    """
    y = np.asarray(y, dtype=float)
    if len(y) < MIN_FORECAST_LENGTH:
        raise DegenerateSeries(
            len(y), f"at least {MIN_FORECAST_LENGTH} values required"
        )
    if not np.all(np.isfinite(y)):
        raise DegenerateSeries(len(y), "series has non-finite values")
    orders = list(product(range(max_p + 1), range(max_d + 1)))
    models = parallel_map(lambda pd_: fit_order(y, *pd_), orders, workers)
    best: Optional[ForecastModel] = None
    for model in models:
        if model is None or math.isnan(model.aicc):
            continue
        if best is None or model.aicc < best.aicc:
            best = model
    if best is None:
        raise DegenerateSeries(len(y), "no order could be fitted")
    logger.debug("Forecast order %s, AICc %.4g", best.order, best.aicc)
    return best


def forecast(
    y: ndarray, workers: Optional[int] = None
) -> Tuple[float, bool]:
    """
    returns (next-value forecast, fell back); series the forecaster cannot
    fit are predicted by their mean
    """
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("Cannot forecast an empty series")
    try:
        return fit_forecast(y, workers=workers).predict(y), False
    except DegenerateSeries as e:
        warnings.warn(
            f"{e}: using the series mean", ForecastFallbackWarning
        )
        return float(y.mean()), True


def tsp_predict(
    data: Dataset,
    pi_e: Policy,
    bin_width: float = 1,
    estimator: Estimator = Estimator.IS,
    by_time: bool = False,
) -> float:
    """
    Forecast of pi_e's performance in the bin after the last one observed
    """
    series = bin_series(data, pi_e, bin_width, estimator, by_time)
    return forecast(series.y)[0]


def rolling_compare_series(
    y: ndarray, workers: Optional[int] = None
) -> Tuple[float, float, pd.DataFrame]:
    """
    Predicts every y[i], i >= 1, from y[:i] with the forecaster and with the
    running mean

    returns (forecast RMSE, running-mean RMSE, per-step report); both RMSEs
    are nan for series shorter than 2
    """
    y = np.asarray(y, dtype=float)
    rows: List[dict] = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ForecastFallbackWarning)
        for i in range(1, len(y)):
            prefix = y[:i]
            tsp, fallback = forecast(prefix, workers)
            rows.append(
                {
                    "iota": i,
                    "y": y[i],
                    "tsp_pred": tsp,
                    "standard_pred": float(prefix.mean()),
                    "fallback": fallback,
                }
            )
    report = pd.DataFrame(
        rows,
        columns=["iota", "y", "tsp_pred", "standard_pred", "fallback"],
    )
    if len(report) == 0:
        return math.nan, math.nan, report
    rmse_tsp = float(np.sqrt(np.mean((report.tsp_pred - report.y) ** 2)))
    rmse_std = float(
        np.sqrt(np.mean((report.standard_pred - report.y) ** 2))
    )
    logger.info(
        "Rolling comparison over %d steps: forecast RMSE %.4g, "
        "running-mean RMSE %.4g (%d fallbacks)",
        len(report),
        rmse_tsp,
        rmse_std,
        int(report.fallback.sum()),
    )
    return rmse_tsp, rmse_std, report


def rolling_compare(
    data: Dataset,
    pi_e: Policy,
    bin_width: float = 1,
    estimator: Estimator = Estimator.IS,
    by_time: bool = False,
    workers: Optional[int] = None,
) -> Tuple[float, float, pd.DataFrame]:
    series = bin_series(data, pi_e, bin_width, estimator, by_time)
    return rolling_compare_series(series.y, workers)


def mean_shift_test(y: ndarray, split: Optional[int] = None) -> float:
    """
    Welch two-sample t-test between y[:split] and y[split:], split
    defaulting to the midpoint

    returns the two-sided p-value
    """
    y = np.asarray(y, dtype=float)
    split = len(y) // 2 if split is None else split
    if split < 2 or len(y) - split < 2:
        raise ValueError("Each half needs at least 2 values")
    return float(stats.ttest_ind(y[:split], y[split:], equal_var=False).pvalue)
