"""Two-body and N-body stochastic dealer model.

Monte Carlo simulation, a finite-difference master-equation solver, a
lattice random walk and the closed-form steady states, cross-checked
against each other.
"""
from .core import (GridSpec, MarketState, ModelError, ModelParams, NumericalError, SimSchedule,
                   TransactionEvent, default_dt, from_cm_relative, resolve_transaction,
                   to_cm_relative)
from .analytic import (AnalyticProfile, ProfileKind, harmonic_normalization, mean_transaction_interval,
                       nlo_meanfield_pdf, orderbook_profile, steady_pdf_general_potential,
                       steady_pdf_harmonic, tent_pdf)
from .stats import DensityEstimate, interval_stats, l1_distance, msd_slope, tail_mass
from .simulator import RunConfig, RunResult, run, run_ensemble, step, taker_fractions
from .lattice import (LatticeDistribution, LatticeParams, diffusive_limit_check, lattice_steady_state,
                      lattice_step, lattice_transient)
from .mlsolver import CurrentDiagnostics, MLField, boundary_condition_check, ml_step, ml_steady

__version__ = "0.1.0"
