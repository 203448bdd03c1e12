"""
Probabilistic suffix trees over integer symbols, the perturbation that turns
a passive sequence model into an action-conditioned one, and the MDP built
on top of it.

A node is keyed by its suffix in chronological order: (2, 4, 1) is the
context "... 2, 4, 1" with 1 the most recent symbol.
"""
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import (
    Any,
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd
from numpy import ndarray

from .core.exceptions import AiccUndefinedWarning, EmptyCorpus, ViolationFound

logger = logging.getLogger(__name__)

Suffix = Tuple[int, ...]

PROB_TOLERANCE = 1e-12
PSEUDO_COUNT = 1.0
LIPSCHITZ_CONSTANT = 2.0 / math.e


@dataclass
class PstNode:
    probs: ndarray
    count: int = 0


class Pst:
    alphabet: Tuple[int, ...]
    nodes: Dict[Suffix, PstNode]
    max_depth: int
    min_count: int

    def __init__(
        self,
        alphabet: Sequence[int],
        nodes: Mapping[Suffix, PstNode],
        max_depth: int,
        min_count: int = 1,
    ):
        self.alphabet = tuple(int(s) for s in alphabet)
        self.nodes = {tuple(k): v for k, v in nodes.items()}
        self.max_depth = max_depth
        self.min_count = min_count
        self._index = {s: i for i, s in enumerate(self.alphabet)}
        self._validate()

    def _validate(self) -> None:
        if len(self.alphabet) == 0:
            raise EmptyCorpus()
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("Alphabet symbols must be unique")
        if () not in self.nodes:
            raise ValueError("A suffix tree needs a root node")
        for suffix, node in self.nodes.items():
            if any(s not in self._index for s in suffix):
                raise ValueError(f"Suffix {suffix} uses unknown symbols")
            if suffix and suffix[1:] not in self.nodes:
                raise ValueError(
                    f"Suffix {suffix} is stored without its suffix "
                    f"{suffix[1:]}"
                )
            if node.probs.shape != (len(self.alphabet),):
                raise ValueError(f"Node {suffix} has the wrong shape")
            if (
                np.any(node.probs < 0)
                or abs(node.probs.sum() - 1.0) > PROB_TOLERANCE
            ):
                raise ValueError(f"Node {suffix} is not a distribution")

    def __repr__(self):
        return (
            f"<Pst: {len(self.alphabet)} symbols, {len(self.nodes)} nodes, "
            f"depth {self.depth}>"
        )

    def __len__(self):
        return len(self.nodes)

    @property
    def n_symbols(self) -> int:
        return len(self.alphabet)

    @property
    def depth(self) -> int:
        return max(len(s) for s in self.nodes)

    @property
    def suffixes(self) -> List[Suffix]:
        """
        returns the stored suffixes, shortest first then in symbol order
        """
        return sorted(self.nodes, key=lambda s: (len(s), s))

    def symbol_index(self, symbol: int) -> int:
        return self._index[symbol]

    def longest_suffix(self, history: Sequence[int]) -> Suffix:
        """
        returns the longest stored suffix of history
        """
        node: Suffix = ()
        for k in range(1, min(len(history), self.depth) + 1):
            candidate = tuple(history[-k:])
            if candidate not in self.nodes:
                break
            node = candidate
        return node

    def predict(self, history: Sequence[int]) -> ndarray:
        return self.nodes[self.longest_suffix(history)].probs

    @property
    def n_parameters(self) -> int:
        return len(self.nodes) * (self.n_symbols - 1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alphabet": list(self.alphabet),
            "max_depth": self.max_depth,
            "min_count": self.min_count,
            "nodes": [
                {
                    "suffix": list(suffix),
                    "probs": self.nodes[suffix].probs.tolist(),
                    "count": self.nodes[suffix].count,
                }
                for suffix in self.suffixes
            ],
        }

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "Pst":
        return cls(
            raw["alphabet"],
            {
                tuple(node["suffix"]): PstNode(
                    np.array(node["probs"], dtype=float),
                    int(node.get("count", 0)),
                )
                for node in raw["nodes"]
            },
            raw.get("max_depth", 0),
            raw.get("min_count", 1),
        )

    @classmethod
    def from_nodes(
        cls,
        alphabet: Sequence[int],
        nodes: Mapping[Suffix, Sequence[float]],
    ) -> "Pst":
        """
        Builds a tree from explicit next-symbol distributions
        """
        depth = max((len(s) for s in nodes), default=0)
        return cls(
            alphabet,
            {
                tuple(s): PstNode(np.array(p, dtype=float))
                for s, p in nodes.items()
            },
            depth,
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Pst":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def dump(self, path: Union[str, Path]) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True)


def read_sequences(path: Union[str, Path]) -> List[List[int]]:
    """
    One comma-separated symbol sequence per line; blank lines are skipped
    """
    with open(path) as f:
        return [
            [int(s) for s in line.split(",") if s.strip()]
            for line in f
            if line.strip()
        ]


def _count_contexts(
    sequences: Sequence[Sequence[int]],
    index: Dict[int, int],
    max_depth: int,
) -> Dict[Suffix, ndarray]:
    counts: Dict[Suffix, ndarray] = {}
    for seq in sequences:
        for i, symbol in enumerate(seq):
            for k in range(0, min(max_depth, i) + 1):
                context = tuple(seq[i - k : i])
                if context not in counts:
                    counts[context] = np.zeros(len(index))
                counts[context][index[symbol]] += 1
    return counts


def pst_fit(
    sequences: Sequence[Sequence[int]],
    max_depth: int = 2,
    min_count: int = 2,
    prune_epsilon: float = 0.0,
    alphabet: Optional[Sequence[int]] = None,
) -> Pst:
    """
    sequences - symbol sequences of the passive corpus
    max_depth - longest suffix modelled
    min_count - occurrences a suffix needs to get a node (the root is
    always kept)
    prune_epsilon - leaves whose distribution is within this L1 distance of
    their parent's are removed, deepest first
    alphabet - symbol set; defaults to the symbols seen

    Distributions are additively smoothed, so every symbol keeps a
    probability strictly between 0 and 1.
    """
    symbols = sorted({int(s) for seq in sequences for s in seq})
    if len(symbols) == 0:
        raise EmptyCorpus()
    if alphabet is not None:
        unknown = set(symbols) - set(alphabet)
        if unknown:
            raise ValueError(f"Symbols {sorted(unknown)} not in alphabet")
        symbols = sorted(int(s) for s in alphabet)
    index = {s: i for i, s in enumerate(symbols)}
    counts = _count_contexts(sequences, index, max_depth)

    nodes = {
        context: PstNode(
            (c + PSEUDO_COUNT) / (c.sum() + PSEUDO_COUNT * len(symbols)),
            int(c.sum()),
        )
        for context, c in counts.items()
        if context == () or c.sum() >= min_count
    }

    for depth in range(max_depth, 0, -1):
        parents_of_kept = {s[1:] for s in nodes if len(s) == depth + 1}
        for suffix in [s for s in nodes if len(s) == depth]:
            if suffix in parents_of_kept:
                continue
            distance = np.abs(
                nodes[suffix].probs - nodes[suffix[1:]].probs
            ).sum()
            if distance <= prune_epsilon:
                del nodes[suffix]

    pst = Pst(symbols, nodes, max_depth, min_count)
    logger.debug("Fitted %r", pst)
    return pst


def pst_loglik(pst: Pst, sequences: Iterable[Sequence[int]]) -> float:
    """
    returns the sum over every symbol of log P(symbol | longest stored
    suffix of what precedes it)
    """
    total = 0.0
    for seq in sequences:
        for i, symbol in enumerate(seq):
            probs = pst.predict(seq[:i])
            total += math.log(probs[pst.symbol_index(symbol)])
    return total


def aicc(loglik: float, k: int, n: int) -> float:
    """
    Corrected Akaike information criterion,
    2k - 2 loglik + 2k(k + 1) / (n - k - 1)

    returns nan, with a warning, when n <= k + 1
    """
    if n <= k + 1:
        warnings.warn(
            f"AICc undefined for {n} observations and {k} parameters",
            AiccUndefinedWarning,
        )
        return math.nan
    return 2 * k - 2 * loglik + 2 * k * (k + 1) / (n - k - 1)


def select_pst(
    sequences: Sequence[Sequence[int]],
    depths: Sequence[int] = (0, 1, 2, 3),
    min_counts: Sequence[int] = (2,),
    prune_epsilon: float = 0.0,
) -> Tuple[Pst, pd.DataFrame]:
    """
    Fits a tree for every (depth, min_count) pair and keeps the lowest AICc;
    equal scores keep the earlier pair

    returns the chosen tree and the table of scores
    """
    n = sum(len(seq) for seq in sequences)
    rows = []
    best: Optional[Pst] = None
    best_score = math.inf
    for depth, min_count in product(depths, min_counts):
        pst = pst_fit(sequences, depth, min_count, prune_epsilon)
        loglik = pst_loglik(pst, sequences)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AiccUndefinedWarning)
            score = aicc(loglik, pst.n_parameters, n)
        rows.append(
            {
                "depth": depth,
                "min_count": min_count,
                "nodes": len(pst),
                "loglik": loglik,
                "aicc": score,
            }
        )
        if score < best_score:
            best, best_score = pst, score
    if best is None:
        raise ValueError("No candidate tree has a defined AICc")
    return best, pd.DataFrame(rows)


def perturb_distribution(
    probs: ndarray, action: int, theta: Optional[float]
) -> ndarray:
    """
    probs - passive next-symbol distribution
    action - index of the recommended symbol
    theta - propensity to follow recommendations, at least 1

    returns the distribution with probs[action] raised to the power 1 /
    theta and the other symbols rescaled to keep the total at 1; theta 1
    (or None) returns the passive distribution unchanged, as does a
    recommended symbol the user picks with probability 0 or 1
    """
    if theta is None or theta == 1:
        return probs.copy()
    if theta < 1:
        raise ValueError(f"theta must be at least 1, got {theta}")
    p_a = probs[action]
    if not 0.0 <= p_a <= 1.0:
        raise ValueError(
            f"Recommended symbol probability {p_a} must lie in [0, 1]"
        )
    if p_a == 1.0:
        return probs.copy()
    boosted = p_a ** (1.0 / theta)
    out = probs * ((1.0 - boosted) / (1.0 - p_a))
    out[action] = boosted
    return out


def perturbed_table(probs: ndarray, thetas: Sequence[float]) -> ndarray:
    """
    returns the (n_symbols, len(thetas), n_symbols) perturbed distributions
    for every recommended symbol and theta
    """
    thetas = np.asarray(thetas, dtype=float)
    if np.any(thetas < 1):
        raise ValueError("theta must be at least 1")
    boosted = probs[:, None] ** (1.0 / thetas[None, :])
    scale = (1.0 - boosted) / (1.0 - probs[:, None])
    out = probs[None, None, :] * scale[:, :, None]
    n = len(probs)
    out[np.arange(n), :, np.arange(n)] = boosted
    return out


def perturb_dynamics(
    pst: Pst, suffix: Suffix, action: int, theta: Optional[float]
) -> ndarray:
    """
    action - the recommended symbol (not its index)
    """
    return perturb_distribution(
        pst.nodes[tuple(suffix)].probs, pst.symbol_index(action), theta
    )


def lipschitz_check(
    pst: Pst, theta_pairs: Sequence[Tuple[float, float]]
) -> float:
    """
    Checks that perturbed distributions move by at most (2/e)|theta -
    theta'| in L1 for every stored suffix, recommended symbol and theta
    pair.

    returns the largest slack (distance minus bound), at most 0
    """
    pairs = np.asarray(theta_pairs, dtype=float).reshape(-1, 2)
    if len(pairs) == 0:
        return 0.0
    thetas, inverse = np.unique(pairs, return_inverse=True)
    inverse = inverse.reshape(-1, 2)
    bounds = LIPSCHITZ_CONSTANT * np.abs(pairs[:, 0] - pairs[:, 1])
    worst = -math.inf
    violations = []
    for suffix in pst.suffixes:
        table = perturbed_table(pst.nodes[suffix].probs, thetas)
        distance = np.abs(
            table[:, inverse[:, 0], :] - table[:, inverse[:, 1], :]
        ).sum(axis=-1)
        slack = distance - bounds[None, :]
        worst = max(worst, float(slack.max()))
        for a, j in zip(*np.nonzero(slack > PROB_TOLERANCE)):
            violations.append(
                (
                    suffix,
                    pst.alphabet[a],
                    float(pairs[j, 0]),
                    float(pairs[j, 1]),
                    float(slack[a, j]),
                )
            )
    if violations:
        raise ViolationFound(violations)
    return worst


@dataclass(frozen=True)
class RewardSpec:
    """
    desirability - value of the user choosing each symbol, in alphabet
    order
    action_cost - share of a symbol's desirability paid to recommend it
    fatigue_cost - extra share paid when the symbol is already in the
    current suffix
    """

    desirability: Tuple[float, ...]
    action_cost: float = 0.2
    fatigue_cost: float = 0.4

    def __post_init__(self):
        object.__setattr__(
            self, "desirability", tuple(float(d) for d in self.desirability)
        )
        if any(d < 0 for d in self.desirability):
            raise ValueError("Desirability must be nonnegative")
        if self.action_cost < 0 or self.fatigue_cost < 0:
            raise ValueError("Recommendation costs must be nonnegative")

    @classmethod
    def from_pst(
        cls, pst: Pst, action_cost: float = 0.2, fatigue_cost: float = 0.4
    ) -> "RewardSpec":
        """
        Desirability is each symbol's passive frequency at the root
        """
        return cls(
            tuple(pst.nodes[()].probs.tolist()), action_cost, fatigue_cost
        )

    def cost(self, suffix: Suffix, symbol_index: int, symbol: int) -> float:
        desire = self.desirability[symbol_index]
        extra = self.fatigue_cost if symbol in suffix else 0.0
        return desire * (self.action_cost + extra)


@dataclass
class PstMdp:
    """
    States are the tree's suffixes; actions are the symbols followed by the
    null action (recommend nothing), whose dynamics are the passive model.
    """

    nodes: List[Suffix]
    theta: Optional[float]
    symbol_probs: ndarray  # (n_actions, n_states, n_symbols)
    successors: ndarray  # (n_states, n_symbols)
    costs: ndarray  # (n_states, n_actions)
    desirability: ndarray
    gamma: float
    _transitions: Optional[ndarray] = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return len(self.nodes)

    @property
    def n_actions(self) -> int:
        return self.symbol_probs.shape[0]

    @property
    def null_action(self) -> int:
        return self.n_actions - 1

    @property
    def rewards(self) -> ndarray:
        """
        returns the (n_states, n_actions) expected desirability of the next
        symbol minus the recommendation cost
        """
        return (self.symbol_probs @ self.desirability).T - self.costs

    @property
    def transitions(self) -> ndarray:
        """
        returns the (n_actions, n_states, n_states) transition tensor
        """
        if self._transitions is None:
            A, X, S = self.symbol_probs.shape
            T = np.zeros((A, X, X))
            rows = np.repeat(np.arange(X), S)
            for a in range(A):
                np.add.at(
                    T[a],
                    (rows, self.successors.ravel()),
                    self.symbol_probs[a].ravel(),
                )
            self._transitions = T
        return self._transitions

    def state_index(self, suffix: Suffix) -> int:
        return self.nodes.index(tuple(suffix))


def build_mdp(
    pst: Pst,
    theta: Optional[float],
    reward_spec: RewardSpec,
    gamma: float = 0.9,
) -> PstMdp:
    """
    p(x' | x, a, theta) is the perturbed probability of the symbol s for
    which x' is the longest stored suffix of x followed by s
    """
    if len(reward_spec.desirability) != pst.n_symbols:
        raise ValueError("Desirability needs one entry per symbol")
    nodes = pst.suffixes
    index = {s: i for i, s in enumerate(nodes)}
    S, X = pst.n_symbols, len(nodes)
    successors = np.array(
        [
            [index[pst.longest_suffix(x + (s,))] for s in pst.alphabet]
            for x in nodes
        ],
        dtype=int,
    )
    symbol_probs = np.zeros((S + 1, X, S))
    costs = np.zeros((X, S + 1))
    for i, x in enumerate(nodes):
        probs = pst.nodes[x].probs
        if theta is None:
            symbol_probs[:S, i] = probs
        else:
            symbol_probs[:S, i] = perturbed_table(probs, [theta])[:, 0, :]
        symbol_probs[S, i] = probs
        for a, symbol in enumerate(pst.alphabet):
            costs[i, a] = reward_spec.cost(x, a, symbol)
    return PstMdp(
        nodes=nodes,
        theta=theta,
        symbol_probs=symbol_probs,
        successors=successors,
        costs=costs,
        desirability=np.array(reward_spec.desirability),
        gamma=gamma,
    )
