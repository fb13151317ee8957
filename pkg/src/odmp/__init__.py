"""Dual-price online decisions under nonconvex local constraints and convex goal sets."""

from .analysis import (MetricSeries, UnevennessReport, compute_metrics, example2_gap,
                       loglog_slope, offline_bruteforce, unevenness)
from .dual_learner import (DualEstimate, NumericalGuardError, RunTrace, StepSchedule,
                           dual_regret, estimate_dual_optimum, price_bound_check, run_online,
                           run_online_boxed)
from .goalset import (Box, Boxed, GoalSpecError, InstanceConstants, MaxMinGap, distance_to_goal,
                      project_goal, project_polar, support_point)
from .input_models import (ArrivalOrder, Partition, batched_order, grouped_permutation,
                           named_partition, uniform_permutation)
from .instances import (AovcConfig, Instance, OkpFotConfig, gen_aovc_synthetic, gen_assignment,
                        gen_example2, gen_okpfot, load_instance, save_instance)
from .oracles import AssignmentStep, AssortmentStep, KnapsackStep

__version__ = "0.1.0"
