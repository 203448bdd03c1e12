import json
from itertools import starmap
from pathlib import Path
from typing import (
    Any,
    Dict,
    List,
    MutableSequence,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
from numpy import ndarray

from ..pst import Pst, RewardSpec, build_mdp

PoiName = str
PROB_TOLERANCE = 1e-10


class TypedMdpFamily:
    """
    Finite-horizon MDPs sharing states and actions, one per hidden user
    type. The type never changes within an episode and is never observed,
    so transitions are the only evidence about it.
    """

    transitions: ndarray  # (n_types, n_states, n_actions, n_states)
    rewards: ndarray  # (n_types, n_states, n_actions)
    horizon: int
    s0: int
    prior: ndarray

    def __init__(
        self,
        transitions: Union[ndarray, Sequence],
        rewards: Union[ndarray, Sequence],
        horizon: int,
        s0: int = 0,
        prior: Optional[Sequence[float]] = None,
    ):
        self.transitions = np.asarray(transitions, dtype=float)
        self.rewards = np.asarray(rewards, dtype=float)
        self.horizon = int(horizon)
        self.s0 = int(s0)
        K = self.transitions.shape[0]
        self.prior = (
            np.full(K, 1.0 / K)
            if prior is None
            else np.asarray(prior, dtype=float)
        )
        self._validate()

    def _validate(self) -> None:
        if self.transitions.ndim != 4:
            raise ValueError(
                "Transitions must be (types, states, actions, states)"
            )
        K, S, A, S2 = self.transitions.shape
        if K < 1:
            raise ValueError("A family needs at least one type")
        if S != S2:
            raise ValueError("Transitions must map states to states")
        if self.rewards.shape != (K, S, A):
            raise ValueError(
                f"Rewards must have shape {(K, S, A)}, "
                f"got {self.rewards.shape}"
            )
        if np.any(self.transitions < 0) or np.any(
            np.abs(self.transitions.sum(axis=-1) - 1) > PROB_TOLERANCE
        ):
            raise ValueError("Every transition row must be a distribution")
        if self.horizon < 1:
            raise ValueError(f"Horizon must be positive, got {self.horizon}")
        if not 0 <= self.s0 < S:
            raise ValueError(f"Start state {self.s0} outside 0..{S - 1}")
        if self.prior.shape != (K,) or abs(self.prior.sum() - 1) > 1e-10:
            raise ValueError("Prior must be a distribution over the types")

    def __repr__(self):
        return (
            f"<TypedMdpFamily: {self.n_types} types, {self.n_states} states, "
            f"{self.n_actions} actions, horizon {self.horizon}>"
        )

    @property
    def n_types(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[2]

    def with_prior(self, prior: Sequence[float]) -> "TypedMdpFamily":
        return TypedMdpFamily(
            self.transitions, self.rewards, self.horizon, self.s0, prior
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
            "horizon": self.horizon,
            "s0": self.s0,
            "prior": self.prior.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "TypedMdpFamily":
        return cls(
            raw["transitions"],
            raw["rewards"],
            raw["horizon"],
            raw.get("s0", 0),
            raw.get("prior"),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TypedMdpFamily":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def dump(self, path: Union[str, Path]) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True)


class Poi:
    index: int
    _parent: "Pois"

    def __init__(self, index: int, parent: "Pois"):
        self.index = index
        self._parent = parent

    @property
    def name(self) -> str:
        return self._parent._pois[self.index][0]

    @property
    def limit(self) -> float:
        return self._parent._pois[self.index][1]

    def __repr__(self):
        return f"<Poi: {self.name}>"

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, Poi):
            return False
        else:
            return self.index == other.index and self._parent == other._parent

    def __format__(self, format_spec: str) -> str:
        return f"{self.name}"


class Pois:
    _pois: MutableSequence[Tuple[PoiName, float]]

    def __init__(self) -> None:
        self._pois = []

    def create(self, name: PoiName, limit: float = 1.0) -> Poi:
        """
        Create a point of interest with a peak capacity
        """
        if limit <= 0:
            raise ValueError(f"Capacity of {name} must be positive")
        self._pois.append((name, float(limit)))
        return self[len(self._pois) - 1]

    def load(self, pois: Sequence[Tuple[PoiName, float]]) -> List[Poi]:
        """
        Load some additional points of interest in bulk
        """
        return list(starmap(self.create, pois))

    def dump(self) -> Sequence[Tuple[PoiName, float]]:
        """
        Dump points of interest in bulk
        """
        return self._pois

    @property
    def limits(self) -> ndarray:
        return np.array([limit for _, limit in self._pois])

    def __len__(self):
        return len(self._pois)

    def __getitem__(self, arg: Union[int, str]):
        if isinstance(arg, int):
            if arg < len(self._pois):
                return Poi(index=arg, parent=self)
            else:
                raise IndexError("list index out of range")

        else:
            results = [
                i for i, (name, _) in enumerate(self._pois) if name == arg
            ]
            if len(results) == 0:
                raise KeyError(f"'{arg}'")
            elif len(results) > 1:
                raise KeyError(f"Name {arg} non unique: please use index")
            else:
                return Poi(index=results[0], parent=self)

    def __iter__(self):
        return map(self.__getitem__, range(len(self)))


class CapacitySpec:
    """
    pois - the capacitated points of interest
    consumption - (n_pois, n_states, n_actions) 0/1 use of each POI when
    taking an action in a state
    null_action - an action that consumes nothing anywhere
    """

    pois: Pois
    consumption: ndarray
    null_action: int

    def __init__(
        self,
        pois: Pois,
        consumption: Union[ndarray, Sequence],
        null_action: int,
    ):
        self.pois = pois
        self.consumption = np.asarray(consumption, dtype=float)
        self.null_action = int(null_action)
        if len(pois) < 1:
            raise ValueError("A capacity spec needs at least one POI")
        if (
            self.consumption.ndim != 3
            or self.consumption.shape[0] != len(pois)
        ):
            raise ValueError("Consumption must be (pois, states, actions)")
        if not np.all(np.isin(self.consumption, (0.0, 1.0))):
            raise ValueError("Consumption entries must be 0 or 1")
        if np.any(self.consumption[:, :, self.null_action] != 0):
            raise ValueError(
                f"Null action {self.null_action} must consume nothing"
            )

    def __repr__(self):
        return f"<CapacitySpec: {[format(p) for p in self.pois]}>"

    @property
    def n_pois(self) -> int:
        return len(self.pois)

    @property
    def limits(self) -> ndarray:
        return self.pois.limits

    def check(self, family: TypedMdpFamily) -> None:
        if self.consumption.shape[1:] != (family.n_states, family.n_actions):
            raise ValueError(
                "Consumption does not match the family's states and actions"
            )

    @classmethod
    def from_actions(
        cls,
        pois: Sequence[Tuple[PoiName, float]],
        n_states: int,
        n_actions: int,
        null_action: int,
    ) -> "CapacitySpec":
        """
        Action r uses POI r in every state
        """
        registry = Pois()
        registry.load(pois)
        consumption = np.zeros((len(registry), n_states, n_actions))
        for r in range(len(registry)):
            consumption[r, :, r] = 1.0
        return cls(registry, consumption, null_action)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pois": [
                {"name": name, "limit": limit}
                for name, limit in self.pois.dump()
            ],
            "consumption": self.consumption.tolist(),
            "null_action": self.null_action,
        }

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "CapacitySpec":
        pois = Pois()
        pois.load([(p["name"], p["limit"]) for p in raw["pois"]])
        return cls(pois, raw["consumption"], raw["null_action"])

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CapacitySpec":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def family_from_pst(
    pst: Pst,
    thetas: Sequence[float],
    reward_spec: RewardSpec,
    horizon: int,
    prior: Optional[Sequence[float]] = None,
) -> TypedMdpFamily:
    """
    One user type per acceptance parameter theta, starting from the root
    suffix; the last action is the null recommendation
    """
    mdps = [build_mdp(pst, theta, reward_spec) for theta in thetas]
    transitions = np.stack([m.transitions.transpose(1, 0, 2) for m in mdps])
    rewards = np.stack([m.rewards for m in mdps])
    return TypedMdpFamily(
        transitions, rewards, horizon, mdps[0].state_index(()), prior
    )
