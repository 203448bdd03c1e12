__version__ = "0.1.0"

from saferec.bounds import (
    BoundMethod,
    BoundResult,
    bound_policy,
    error_rate_experiment,
    lower_bound,
)
from saferec.capacity import (
    CapacitySpec,
    Pois,
    TypedMdpFamily,
    column_generation,
)
from saferec.core import (
    Dataset,
    DiscountSpec,
    Step,
    Trajectory,
    policy_from_dict,
    read_jsonl,
    write_jsonl,
)
from saferec.estimators import Estimator, importance_weighted_returns
from saferec.fqi import fqi_train, greedy_train
from saferec.improvement import (
    NSF,
    CandidateSearchConfig,
    SafetySpec,
    daedalus,
    policy_improvement,
)
from saferec.nonstationary import forecast, rolling_compare, tsp_predict
from saferec.psrl import ThetaFamily, ds_psrl, greedy_thompson
from saferec.pst import Pst, RewardSpec, build_mdp, pst_fit, select_pst
from saferec.simulators import SimEnv, simulate
