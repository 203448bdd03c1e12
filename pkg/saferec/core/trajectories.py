import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import (
    Any,
    Dict,
    Iterable,
    Iterator,
    List,
    Optional,
    Sequence,
    TextIO,
    Tuple,
    Union,
    overload,
)

import numpy as np
from numpy import ndarray

from .exceptions import EmptyData, InvalidTrajectory, MalformedLog

State = Union[int, Tuple[float, ...]]

DEFAULT_HORIZON_CAP = 20


def normalize_state(raw: Any) -> State:
    if isinstance(raw, (bool, np.bool_)):
        raise TypeError(f"State must be an int or a feature vector: {raw!r}")
    if isinstance(raw, (int, np.integer)):
        return int(raw)
    if isinstance(raw, (list, tuple, ndarray)):
        return tuple(float(v) for v in raw)
    raise TypeError(f"State must be an int or a feature vector: {raw!r}")


def state_features(states: Sequence[State]) -> ndarray:
    """
    states - discrete ids or equal-length feature tuples

    returns an (n, d) float matrix, d = 1 for discrete ids
    """
    if len(states) == 0:
        return np.zeros((0, 1))
    if isinstance(states[0], int):
        return np.asarray(states, dtype=float).reshape(-1, 1)
    return np.asarray(states, dtype=float)


@dataclass(frozen=True)
class DiscountSpec:
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")

    def factors(self, length: int) -> ndarray:
        return np.power(self.gamma, np.arange(length, dtype=float))


@dataclass(frozen=True)
class Step:
    state: State
    action: int
    reward: float
    behavior_prob: float

    def __post_init__(self):
        object.__setattr__(self, "state", normalize_state(self.state))
        if not isinstance(self.action, (int, np.integer)) or self.action < 0:
            raise InvalidTrajectory(f"action {self.action!r} is not an id")
        if not math.isfinite(self.reward) or self.reward < 0:
            raise InvalidTrajectory(f"reward {self.reward} is negative")
        if not 0.0 < self.behavior_prob <= 1.0:
            raise InvalidTrajectory(
                f"behavior probability {self.behavior_prob} not in (0, 1]"
            )


@dataclass(frozen=True)
class Trajectory:
    steps: Tuple[Step, ...]
    behavior_id: str = ""
    user_id: str = ""
    timestamp: Optional[float] = None
    horizon_cap: int = field(
        default=DEFAULT_HORIZON_CAP, repr=False, compare=False
    )

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if len(self.steps) == 0:
            raise InvalidTrajectory("a trajectory needs at least one step")
        if len(self.steps) > self.horizon_cap:
            raise InvalidTrajectory(
                f"length {len(self.steps)} exceeds the horizon cap "
                f"{self.horizon_cap}"
            )

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def rewards(self) -> ndarray:
        return np.array([s.reward for s in self.steps], dtype=float)

    @property
    def clicks(self) -> int:
        return sum(1 for s in self.steps if s.reward == 1)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "user_id": self.user_id,
            "steps": [
                {
                    "s": (
                        s.state
                        if isinstance(s.state, int)
                        else list(s.state)
                    ),
                    "a": s.action,
                    "r": s.reward,
                    "bp": s.behavior_prob,
                }
                for s in self.steps
            ],
        }
        if self.behavior_id:
            out["behavior_id"] = self.behavior_id
        if self.timestamp is not None:
            out["timestamp"] = self.timestamp
        return out


class Dataset:
    """
    An ordered collection of trajectories.

    Flattened per-step arrays are built on first use and cached; the
    trajectories themselves are immutable.
    """

    trajectories: Tuple[Trajectory, ...]

    def __init__(self, trajectories: Iterable[Trajectory] = ()):
        self.trajectories = tuple(trajectories)

    @property
    def n(self) -> int:
        return len(self.trajectories)

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    @overload
    def __getitem__(self, arg: int) -> Trajectory:
        ...

    @overload
    def __getitem__(self, arg: slice) -> "Dataset":
        ...

    def __getitem__(self, arg):
        if isinstance(arg, slice):
            return Dataset(self.trajectories[arg])
        return self.trajectories[arg]

    def __add__(self, other: "Dataset") -> "Dataset":
        return Dataset(self.trajectories + other.trajectories)

    def __repr__(self):
        return f"<Dataset: {self.n} trajectories, {self.n_steps} steps>"

    def take(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(self.trajectories[int(i)] for i in indices)

    def split(self, n_first: int) -> Tuple["Dataset", "Dataset"]:
        """
        returns the first n_first trajectories and the remainder, order kept
        """
        return self[:n_first], self[n_first:]

    @cached_property
    def lengths(self) -> ndarray:
        return np.array([len(t) for t in self.trajectories], dtype=int)

    @cached_property
    def offsets(self) -> ndarray:
        return np.concatenate(([0], np.cumsum(self.lengths)[:-1])).astype(
            int
        )

    @property
    def n_steps(self) -> int:
        return int(self.lengths.sum()) if self.n > 0 else 0

    @cached_property
    def states(self) -> List[State]:
        return [s.state for t in self.trajectories for s in t.steps]

    @cached_property
    def actions(self) -> ndarray:
        return np.array(
            [s.action for t in self.trajectories for s in t.steps], dtype=int
        )

    @cached_property
    def rewards(self) -> ndarray:
        return np.array(
            [s.reward for t in self.trajectories for s in t.steps],
            dtype=float,
        )

    @cached_property
    def behavior_probs(self) -> ndarray:
        return np.array(
            [s.behavior_prob for t in self.trajectories for s in t.steps],
            dtype=float,
        )

    @cached_property
    def step_index(self) -> ndarray:
        """
        position of every flattened step within its trajectory
        """
        if self.n == 0:
            return np.zeros(0, dtype=int)
        return np.concatenate(
            [np.arange(length) for length in self.lengths]
        ).astype(int)

    @cached_property
    def features(self) -> ndarray:
        return state_features(self.states)

    @property
    def n_actions(self) -> int:
        return int(self.actions.max()) + 1 if self.n_steps > 0 else 0

    @property
    def timestamps(self) -> Optional[ndarray]:
        stamps = [t.timestamp for t in self.trajectories]
        if self.n == 0 or any(s is None for s in stamps):
            return None
        return np.array(stamps, dtype=float)


def discounted_return(traj: Trajectory, disc: DiscountSpec) -> float:
    """
    returns the sum over t of gamma^(t-1) r_t
    """
    return float(np.dot(disc.factors(len(traj)), traj.rewards))


def ctr(data: Dataset) -> float:
    """
    returns 100 * total clicks / total visits
    """
    if data.n_steps == 0:
        raise EmptyData("visits")
    return 100.0 * float(np.sum(data.rewards == 1)) / data.n_steps


def ltv(data: Dataset) -> float:
    """
    returns 100 * total clicks / number of visitors
    """
    if data.n == 0:
        raise EmptyData("visitors")
    return 100.0 * float(np.sum(data.rewards == 1)) / data.n


def _parse_step(raw: Any, line_no: int) -> Step:
    if not isinstance(raw, dict):
        raise MalformedLog(line_no, "step is not an object")
    missing = [k for k in ("s", "a", "r", "bp") if k not in raw]
    if missing:
        raise MalformedLog(line_no, f"step missing {', '.join(missing)}")
    bp = raw["bp"]
    if not isinstance(bp, (int, float)) or not 0.0 < bp <= 1.0:
        raise MalformedLog(line_no, f"bp {bp!r} not in (0, 1]")
    try:
        return Step(
            state=raw["s"],
            action=raw["a"],
            reward=float(raw["r"]),
            behavior_prob=float(bp),
        )
    except (InvalidTrajectory, TypeError, ValueError) as e:
        raise MalformedLog(line_no, str(e)) from e


def parse_trajectory(
    line: str, line_no: int, horizon_cap: int = DEFAULT_HORIZON_CAP
) -> Optional[Trajectory]:
    """
    returns None for blank lines and embedded manifest lines
    """
    if not line.strip():
        return None
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedLog(line_no, f"invalid JSON ({e.msg})") from e
    if not isinstance(raw, dict):
        raise MalformedLog(line_no, "expected a JSON object")
    if "manifest" in raw and "steps" not in raw:
        return None
    if not isinstance(raw.get("steps"), list):
        raise MalformedLog(line_no, "missing steps list")
    steps = [_parse_step(s, line_no) for s in raw["steps"]]
    timestamp = raw.get("timestamp")
    try:
        return Trajectory(
            steps=tuple(steps),
            behavior_id=str(raw.get("behavior_id", "")),
            user_id=str(raw.get("user_id", "")),
            timestamp=None if timestamp is None else float(timestamp),
            horizon_cap=horizon_cap,
        )
    except InvalidTrajectory as e:
        raise MalformedLog(line_no, e.reason) from e


def load_jsonl(
    stream: TextIO, horizon_cap: int = DEFAULT_HORIZON_CAP
) -> Dataset:
    trajectories = []
    for line_no, line in enumerate(stream, start=1):
        traj = parse_trajectory(line, line_no, horizon_cap)
        if traj is not None:
            trajectories.append(traj)
    return Dataset(trajectories)


def read_jsonl(
    path: Union[str, Path], horizon_cap: int = DEFAULT_HORIZON_CAP
) -> Dataset:
    with open(path) as f:
        return load_jsonl(f, horizon_cap)


def dump_jsonl(
    data: Dataset,
    stream: TextIO,
    manifest: Optional[Dict[str, Any]] = None,
) -> None:
    if manifest is not None:
        stream.write(json.dumps({"manifest": manifest}, sort_keys=True))
        stream.write("\n")
    for traj in data:
        stream.write(json.dumps(traj.to_dict(), sort_keys=True))
        stream.write("\n")


def write_jsonl(
    data: Dataset,
    path: Union[str, Path],
    manifest: Optional[Dict[str, Any]] = None,
) -> None:
    with open(path, "w") as f:
        dump_jsonl(data, f, manifest)
