from .belief import (
    BeliefPlan,
    BeliefPoint,
    TypePlans,
    belief_update,
    bounded_belief_plan,
    build_belief_space,
    commit_plan,
    regret,
    type_policies_and_cross_values,
)
from .generation import (
    CgResult,
    Column,
    ColumnSet,
    MasterSolution,
    column_generation,
    master_lp,
)
from .models import CapacitySpec, Poi, Pois, TypedMdpFamily, family_from_pst
