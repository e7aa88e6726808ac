"""Safe policy improvement for tabular MDPs with L1 transition uncertainty."""

from importlib import resources

from .mdp import (Mdp, Policy, evaluate_policy, occupancy, policy_iteration, q_values, return_of,
                  solve_optimal)
from .uncertainty import (CountTable, ErrorFunction, UncertaintySet, contains, error_from_counts,
                          worst_case_response)
from .robust import (RobustSolution, best_case_evaluate, robust_bellman_apply,
                     robust_evaluate_policy, robust_value_iteration)
from .safe import (SafePolicyResult, SubgradientSchedule, build_augmented, solve_augmented_rmdp,
                   solve_ramdp, solve_rbc, solve_rmdp_safe)
from .bounds import BoundReport, bound_report_set
from .benchmark import BenchmarkConfig, ExperimentResult, make_grid_benchmark, run_experiment

__version__ = "0.1.0"


def data_path(name):
    """Path of a model or policy file shipped in safe_mdp/data."""
    return resources.files(__package__).joinpath("data", name)
