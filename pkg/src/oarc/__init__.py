"""Scheduling with Markovian holding costs: OaRC index policy, fluid bounds,
a discrete-time queue simulator and a content-moderation experiment layer."""

__version__ = "0.1.0"

from .tree import (MarkovTree, InvalidTreeError, ValidationReport, validate, pass_prob,
                   future_cost, ancestors, subtree, top_set, load_tree, save_tree,
                   water_filling_example, post_video_example, random_tree)
from .ski_rental import (ValueTable, value_functions, dual_value, optimal_gamma,
                         oarc_indices)
from .fluid import (PriorityOrdering, FluidEquilibrium, StateType, water_fill, fluid_cost,
                    check_feasibility, check_optimality, c_star, lp_oracle)

from .schedulers import Policy, PolicyKind, builtin, select
from .simulator import SimConfig, SimMetrics, run, regret, steady_state_report
