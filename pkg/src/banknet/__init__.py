"""Interbank lending with strategy-replicating agents.

Risky agents fund investments by borrowing from both risk-free lenders and
each other, settle pro rata under limited liability after shocks, and the
population composition evolves as newcomers imitate the better-performing
strategy.  The package provides the exact finite-network settlement, its
large-network limit (closed form and iterative oracle), the two stochastic
dynamics, the drift ODE with equilibrium/stability analysis, and a CLI for
experiments and packaged reference tables.
"""

from .model import (GROUP_RISK_FREE, GROUP_RISKY, DerivedQuantities,
                    LiabilityNetwork, MarketParams, ShockVector, derive,
                    make_rng, sample_network, sample_shocks, seed_sequence)
from .clearing import (AsymptoticOutcome, FiniteClearingOutcome,
                       LimitingReturns, dump_outcome_csv, expected_surplus,
                       limiting_returns, solve_clearing_finite,
                       solve_xbar_closed_form, solve_xbar_iterative)
from .dynamics import (PopulationState, Trajectory, expected_G_random,
                       g_average, simulate, simulate_finite, step_average,
                       step_random, trajectory_to_csv)
from .analysis import (Equilibrium, LimitPrediction, ODEPath, drift_average,
                       drift_random, equilibria_to_csv, find_equilibria,
                       integrate_ode, nearest_stable, predict_limit)
from .harness import (ComparisonReport, ConfigError, ExperimentConfig,
                      ExperimentResult, TableReport, compare_theory_mc,
                      load_config, reproduce_table, run_experiment,
                      write_experiment)

__version__ = "0.1.0"

__all__ = [
    "GROUP_RISK_FREE", "GROUP_RISKY", "MarketParams", "DerivedQuantities",
    "LiabilityNetwork", "ShockVector", "derive", "sample_network",
    "sample_shocks", "make_rng", "seed_sequence",
    "FiniteClearingOutcome", "AsymptoticOutcome", "LimitingReturns",
    "solve_clearing_finite", "solve_xbar_iterative", "solve_xbar_closed_form",
    "limiting_returns", "expected_surplus", "dump_outcome_csv",
    "PopulationState", "Trajectory", "g_average", "expected_G_random",
    "step_average", "step_random", "simulate", "simulate_finite",
    "trajectory_to_csv",
    "Equilibrium", "LimitPrediction", "ODEPath", "drift_average",
    "drift_random", "find_equilibria", "predict_limit", "integrate_ode",
    "nearest_stable", "equilibria_to_csv",
    "ExperimentConfig", "ExperimentResult", "ConfigError", "TableReport",
    "ComparisonReport", "load_config", "run_experiment", "write_experiment",
    "reproduce_table", "compare_theory_mc",
    "__version__",
]
