import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar, Union

import numpy as np
from numpy import ndarray

T = TypeVar("T")
R = TypeVar("R")

Seed = Union[int, Sequence[int]]


def get_row_scales(array: ndarray) -> ndarray:
    """
    array: ndarray - a 2D array where each row is to have its scale calculated

    returns a 1D array of power-of-ten factors that bring each row's largest
    magnitude into [1, 10). All-zero rows get a factor of 1.
    """
    with warnings.catch_warnings():
        warnings.filterwarnings(
            "ignore", "divide by zero encountered in log10"
        )
        A_maxima = np.max(np.absolute(np.atleast_2d(array)), axis=1)
        exponents = np.floor(np.log10(np.array(A_maxima, dtype=float)))
    exponents = np.where(np.isfinite(exponents), exponents, 0.0)
    return np.power(10.0, -exponents)


def _entropy(seed: Seed, keys: Sequence[int]) -> List[int]:
    if isinstance(seed, (int, np.integer)):
        base = [int(seed)]
    else:
        base = [int(s) for s in seed]
    return base + [int(k) for k in keys]


def derive_rng(seed: Seed, *keys: int) -> np.random.Generator:
    """
    Independent random stream for the unit of work identified by keys.

    The stream depends only on (seed, keys), never on scheduling, so parallel
    results match sequential ones.
    """
    return np.random.default_rng(_entropy(seed, keys))


def derive_seed(seed: Seed, *keys: int) -> int:
    """
    An integer seed for third-party estimators that take random_state
    """
    state = np.random.SeedSequence(_entropy(seed, keys)).generate_state(1)
    return int(state[0])


def default_workers() -> int:
    return os.cpu_count() or 1


def parallel_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    workers: Optional[int] = None,
) -> List[R]:
    """
    fn - function applied to each item
    items - the work units
    workers - thread count; None or 1 runs inline

    returns the results in input order
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))


def sample_index(probs: ndarray, u: float) -> int:
    """
    Inverse-CDF draw from a discrete distribution given a uniform u in [0, 1)
    """
    cumulative = np.cumsum(probs)
    index = int(np.searchsorted(cumulative, u * cumulative[-1], side="right"))
    return min(index, len(probs) - 1)
