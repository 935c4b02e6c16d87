"""Least-squares Monte Carlo with hierarchical reinforced regression."""

from .basis import BasisFamily, build_basis, design_matrix, sorted_features
from .evaluate import LowerBoundReport, SeedCollisionError, greedy_action, lower_bound, value_readout
from .models import (
    GbmParams,
    OilGasParams,
    PathSet,
    load_paths,
    save_paths,
    simulate_gbm,
    simulate_oil_gas,
    stream_gbm,
    stream_oil_gas,
    subsample,
)
from .problems import (
    ConfigurationError,
    ControlProblem,
    GasStorageProblem,
    GasStorageSpec,
    StoppingProblem,
    StoppingSpec,
    admissible_actions,
    cash_flow,
    max_call_payoff,
    terminal_value,
    transition,
    zero_payoff,
)
from .regression import Coefficients, fit_least_squares, truncate
from .solver import (
    CostCounters,
    SkippedCellError,
    ValueHierarchy,
    cost_counters,
    eval_continuation,
    eval_value,
    load_hierarchy,
    save_hierarchy,
    solve,
    solve_hrr_a,
    solve_hrr_b,
    solve_rr_diagonal,
    solve_standard,
    truncation_level,
)

__version__ = "0.1.0"
