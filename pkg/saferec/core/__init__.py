from .exceptions import SaferecError
from .policies import (
    EpsilonGreedyPolicy,
    FourierBasis,
    MixedPolicy,
    Policy,
    QTable,
    SoftmaxLinearPolicy,
    TabularPolicy,
    UniformPolicy,
    policy_from_dict,
)
from .solve import LpSolution, solve_lp
from .trajectories import (
    Dataset,
    DiscountSpec,
    Step,
    Trajectory,
    ctr,
    discounted_return,
    ltv,
    read_jsonl,
    write_jsonl,
)
