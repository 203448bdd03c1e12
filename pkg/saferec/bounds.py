import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy import ndarray
from scipy import stats

from .core.exceptions import EmptyData, TooFewSamples
from .core.policies import Policy
from .core.tools import Seed, derive_rng, parallel_map
from .core.trajectories import Dataset, DiscountSpec
from .estimators import UNDISCOUNTED, Estimator, importance_weighted_returns

logger = logging.getLogger(__name__)

DEFAULT_BOOTSTRAP = 2000
MIN_BOOTSTRAP = 1000
BOOTSTRAP_CHUNK = 250
HOLDOUT_STRIDE = 20
HOLDOUT_QUANTILE = 95.0
ERROR_RATE_N_GRID = (20, 50, 100, 200, 500, 1000, 2000)
RISK_DELTAS = (0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5)


class BoundMethod(Enum):
    CI = "ci"
    TT = "tt"
    BCA = "bca"


@dataclass(frozen=True)
class BoundResult:
    lower_bound: float
    method: BoundMethod
    delta: float
    n: int
    sample_mean: float
    sample_std: float
    truncation_threshold: Optional[float] = None
    bootstrap_b: Optional[int] = None
    conservative: bool = False
    degenerate: bool = False
    prediction_size: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["method"] = self.method.value
        return out


def _check(
    xs: Union[ndarray, Sequence[float]], delta: float, required: int
) -> ndarray:
    xs = np.asarray(xs, dtype=float).ravel()
    if len(xs) < required:
        raise TooFewSamples(len(xs), required)
    if not 0.0 < delta <= 0.5:
        raise ValueError(f"delta must lie in (0, 0.5], got {delta}")
    if not np.all(np.isfinite(xs)):
        raise ValueError("Samples must be finite")
    return xs


def _prediction_size(n: int, m: Optional[int]) -> int:
    if m is None:
        return n
    if m < 2:
        raise ValueError(f"Prediction size must be at least 2, got {m}")
    return m


def lower_bound_ttest(
    xs: Union[ndarray, Sequence[float]],
    delta: float,
    m: Optional[int] = None,
) -> BoundResult:
    """
    One-tailed Student's t lower bound on the mean.

    m - predict the bound a data set of m samples would give; the sample
    size terms use m instead of n
    """
    xs = _check(xs, delta, 2)
    n = len(xs)
    size = _prediction_size(n, m)
    mean = float(np.mean(xs))
    std = float(np.std(xs, ddof=1))
    t = float(stats.t.ppf(1.0 - delta, size - 1))
    bound = mean - std / math.sqrt(size) * t
    return BoundResult(
        lower_bound=bound,
        method=BoundMethod.TT,
        delta=delta,
        n=n,
        sample_mean=mean,
        sample_std=std,
        prediction_size=m,
    )


def lower_bound_ci(
    xs: Union[ndarray, Sequence[float]],
    delta: float,
    threshold: Optional[float] = None,
    m: Optional[int] = None,
) -> BoundResult:
    """
    Distribution-free lower bound for nonnegative samples: clip at a
    threshold c, then apply an empirical Bernstein bound to the clipped
    [0, c] samples.

    threshold - clip level; when omitted, every 20th sample is held out and
    c is the 95th percentile of the held-out samples (n >= 40), or the
    sample maximum (n < 40, flagged conservative)
    """
    xs = _check(xs, delta, 2)
    if np.any(xs < 0):
        raise ValueError("The CI bound needs nonnegative samples")
    n = len(xs)
    conservative = False
    if threshold is not None:
        if threshold <= 0:
            raise ValueError("Clip threshold must be positive")
        c = float(threshold)
        kept = xs
    elif n < 2 * HOLDOUT_STRIDE:
        c = float(np.max(xs))
        kept = xs
        conservative = True
    else:
        held_out = xs[::HOLDOUT_STRIDE]
        kept = np.delete(xs, np.arange(0, n, HOLDOUT_STRIDE))
        c = float(np.percentile(held_out, HOLDOUT_QUANTILE))

    clipped = np.minimum(kept, c)
    size = _prediction_size(len(clipped), m)
    log_term = math.log(2.0 / delta)
    clipped_mean = float(np.mean(clipped))
    variance = float(np.var(clipped, ddof=1)) if len(clipped) > 1 else 0.0
    bound = (
        clipped_mean
        - math.sqrt(2.0 * variance * log_term / size)
        - 7.0 * c * log_term / (3.0 * (size - 1))
    )
    mean = float(np.mean(xs))
    return BoundResult(
        lower_bound=min(bound, mean),
        method=BoundMethod.CI,
        delta=delta,
        n=n,
        sample_mean=mean,
        sample_std=float(np.std(xs, ddof=1)),
        truncation_threshold=c,
        conservative=conservative,
        prediction_size=m,
    )


def bootstrap_means(
    xs: ndarray, B: int, seed: Seed, workers: Optional[int] = None
) -> ndarray:
    """
    returns B bootstrap resample means; chunk k draws from the stream
    (seed, k) so the result does not depend on the worker count
    """
    n = len(xs)
    chunks = [
        (k, min(BOOTSTRAP_CHUNK, B - start))
        for k, start in enumerate(range(0, B, BOOTSTRAP_CHUNK))
    ]

    def run(chunk: Tuple[int, int]) -> ndarray:
        k, size = chunk
        rng = derive_rng(seed, k)
        return xs[rng.integers(0, n, size=(size, n))].mean(axis=1)

    return np.concatenate(parallel_map(run, chunks, workers))


def bca_acceleration(xs: ndarray) -> float:
    """
    Acceleration from the jackknife skewness of the mean
    """
    n = len(xs)
    jackknife = (np.sum(xs) - xs) / (n - 1)
    u = np.mean(jackknife) - jackknife
    denominator = np.sum(u ** 2)
    if denominator == 0.0:
        return 0.0
    return float(np.sum(u ** 3) / (6.0 * denominator ** 1.5))


def lower_bound_bca(
    xs: Union[ndarray, Sequence[float]],
    delta: float,
    B: int = DEFAULT_BOOTSTRAP,
    seed: Seed = 0,
    m: Optional[int] = None,
    workers: Optional[int] = None,
) -> BoundResult:
    """
    Bias corrected and accelerated bootstrap lower bound on the mean.

    B - bootstrap resamples, at least 1000
    seed - the bound is a pure function of (xs, delta, B, seed)
    """
    xs = _check(xs, delta, 3)
    if B < MIN_BOOTSTRAP:
        raise ValueError(f"B must be at least {MIN_BOOTSTRAP}, got {B}")
    n = len(xs)
    mean = float(np.mean(xs))
    std = float(np.std(xs, ddof=1))
    theta_star = bootstrap_means(xs, B, seed, workers)

    if np.ptp(theta_star) == 0.0:
        logger.debug("All bootstrap means identical: returning their value")
        return BoundResult(
            lower_bound=float(theta_star[0]),
            method=BoundMethod.BCA,
            delta=delta,
            n=n,
            sample_mean=mean,
            sample_std=std,
            bootstrap_b=B,
            degenerate=True,
            prediction_size=m,
        )

    below = float(np.sum(theta_star < mean)) / B
    below = min(max(below, 0.5 / B), 1.0 - 0.5 / B)
    z0 = float(stats.norm.ppf(below))
    a = bca_acceleration(xs)
    z_delta = float(stats.norm.ppf(delta))
    shifted = z0 + z_delta
    denominator = 1.0 - a * shifted
    if denominator <= 0.0:
        level = 0.0
    else:
        level = float(stats.norm.cdf(z0 + shifted / denominator))
    bound = float(np.percentile(theta_star, 100.0 * level))
    if m is not None:
        size = _prediction_size(n, m)
        bound = mean - (mean - bound) * math.sqrt(n / size)
    return BoundResult(
        lower_bound=min(bound, float(np.max(xs))),
        method=BoundMethod.BCA,
        delta=delta,
        n=n,
        sample_mean=mean,
        sample_std=std,
        bootstrap_b=B,
        prediction_size=m,
    )


def lower_bound(
    xs: Union[ndarray, Sequence[float]],
    delta: float,
    method: BoundMethod,
    m: Optional[int] = None,
    seed: Seed = 0,
    bootstrap_b: int = DEFAULT_BOOTSTRAP,
    threshold: Optional[float] = None,
    workers: Optional[int] = None,
) -> BoundResult:
    if method == BoundMethod.TT:
        return lower_bound_ttest(xs, delta, m=m)
    elif method == BoundMethod.CI:
        return lower_bound_ci(xs, delta, threshold=threshold, m=m)
    else:
        return lower_bound_bca(
            xs, delta, B=bootstrap_b, seed=seed, m=m, workers=workers
        )


def bound_policy(
    data: Dataset,
    pi_e: Policy,
    delta: float,
    method: BoundMethod,
    estimator: Estimator = Estimator.PSIS,
    disc: DiscountSpec = UNDISCOUNTED,
    m: Optional[int] = None,
    seed: Seed = 0,
    bootstrap_b: int = DEFAULT_BOOTSTRAP,
) -> BoundResult:
    """
    Confidence lower bound on the value of pi_e from logged data.

    m - predict the bound for a future data set of m trajectories
    """
    if data.n == 0:
        raise EmptyData()
    xs = importance_weighted_returns(data, pi_e, estimator, disc)
    return lower_bound(
        xs, delta, method, m=m, seed=seed, bootstrap_b=bootstrap_b
    )


def risk_table(
    xs: Union[ndarray, Sequence[float]],
    deltas: Sequence[float],
    method: BoundMethod,
    seed: Seed = 0,
    bootstrap_b: int = DEFAULT_BOOTSTRAP,
) -> pd.DataFrame:
    """
    returns the lower bound as a function of the allowed risk delta
    """
    rows = [
        {
            "delta": delta,
            "confidence": 1.0 - delta,
            "lower_bound": lower_bound(
                xs, delta, method, seed=seed, bootstrap_b=bootstrap_b
            ).lower_bound,
        }
        for delta in deltas
    ]
    return pd.DataFrame(rows, columns=["delta", "confidence", "lower_bound"])


def compare_bounds(
    xs: Union[ndarray, Sequence[float]],
    delta: float,
    seed: Seed = 0,
    bootstrap_b: int = DEFAULT_BOOTSTRAP,
) -> pd.DataFrame:
    """
    returns every bound method applied to the same samples
    """
    rows = []
    for method in BoundMethod:
        result = lower_bound(
            xs, delta, method, seed=seed, bootstrap_b=bootstrap_b
        )
        rows.append(
            {
                "method": method.value,
                "lower_bound": result.lower_bound,
                "sample_mean": result.sample_mean,
            }
        )
    return pd.DataFrame(rows)


@dataclass(frozen=True)
class GammaSpec:
    shape: float = 2.0
    scale: float = 50.0

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    def sample(self, rng: np.random.Generator, n: int) -> ndarray:
        return rng.gamma(self.shape, self.scale, size=n)


@dataclass(frozen=True)
class PointMass:
    value: float = 100.0

    @property
    def mean(self) -> float:
        return self.value

    def sample(self, rng: np.random.Generator, n: int) -> ndarray:
        return np.full(n, self.value)


def error_rate_experiment(
    dist_spec: Union[GammaSpec, PointMass],
    n_grid: Sequence[int] = ERROR_RATE_N_GRID,
    trials: int = 10000,
    delta: float = 0.05,
    seed: int = 0,
    methods: Sequence[BoundMethod] = tuple(BoundMethod),
    bootstrap_b: int = DEFAULT_BOOTSTRAP,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """
    For each n and method, the fraction of trials whose lower bound exceeds
    the true mean.

    Trial t at grid position i draws its samples from the stream
    (seed, i, t), and its bootstrap from (seed, i, t, 1).
    """
    if trials < 1000:
        raise ValueError(f"trials must be at least 1000, got {trials}")
    rows = []
    for i, n in enumerate(n_grid):

        def run_trial(t: int) -> ndarray:
            xs = dist_spec.sample(derive_rng([seed, i, t]), n)
            return np.array(
                [
                    lower_bound(
                        xs,
                        delta,
                        method,
                        seed=[seed, i, t, 1],
                        bootstrap_b=bootstrap_b,
                    ).lower_bound
                    > dist_spec.mean
                    for method in methods
                ]
            )

        errors = np.array(parallel_map(run_trial, range(trials), workers))
        for j, method in enumerate(methods):
            rate = float(np.mean(errors[:, j]))
            rows.append(
                {
                    "n": n,
                    "method": method.value,
                    "error_rate": rate,
                    "trials": trials,
                    "true_mean": dist_spec.mean,
                }
            )
        logger.info("Error rates at n=%d computed over %d trials", n, trials)
    return pd.DataFrame(rows)
