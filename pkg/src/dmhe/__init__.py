"""Partition-based distributed moving-horizon state estimation.

The toolkit models a discrete-time linear system as interacting subsystems,
solves the centralized moving-horizon problem as a reference, runs the two
iterative distributed estimators (closed-form unconstrained rounds and
box-constrained local QPs), certifies their convergence and stability
conditions, and reproduces the reactor-separator benchmark study.
"""

from .cmhe import (FullEstimate, WindowState, cmhe_solve_constrained,
                   cmhe_solve_unconstrained, evaluate_objective)
from .conditions import ConditionEntry, ConditionReport
from .config import (RunConfig, benchmark_config, benchmark_physical_boxes,
                     config_from_dict, load_run_config)
from .coordinator import (EstimateRecord, EstimationSchedule, compute_prior,
                          run_instant, run_trajectory)
from .dmhe1 import (IterationMatrices, LocalIterate, build_iteration_matrices,
                    check_error_stability, check_iteration_convergence,
                    error_dynamics_matrix, global_iteration_step,
                    initial_iterates, local_update, stack_iterates,
                    unstack_iterates)
from .dmhe2 import (BoxConstraints, SgpOperator, build_sgp_operator,
                    check_dmhe2_convergence, check_dmhe2_stability,
                    local_qp_solve, sgp_step)
from .errors import (ConditioningError, ConfigError, ConvergenceError,
                     DimensionMismatchError, EmptyBoxError, EstimationError,
                     NotPositiveDefiniteError, ProtocolError,
                     UnknownSubsystemError)
from .evaluation import (RunSummary, TimingReport, condition_report,
                         horizon_sweep, monte_carlo, noise_sweep, rmse_at,
                         single_run, timing_report)
from .linalg import project_box, solve_box_qp, spectral_radius
from .model import (CompositeModel, ObservabilityReport, StackedMaps,
                    SubsystemModel, assemble_composite, build_stacked_maps,
                    check_observability, column_block, load_model, row_block)
from .simulator import (BenchmarkBundle, NoiseSpec, SimulationResult,
                        load_benchmark, scale, simulate, unscale)
from .weights import DerivedWeights, EstimatorWeights, derive_composites

__version__ = "0.1.0"

__all__ = [
    "BenchmarkBundle", "BoxConstraints", "CompositeModel", "ConditionEntry",
    "ConditionReport", "ConditioningError", "ConfigError", "ConvergenceError",
    "DerivedWeights", "DimensionMismatchError", "EmptyBoxError",
    "EstimateRecord", "EstimationError", "EstimationSchedule",
    "EstimatorWeights", "FullEstimate", "IterationMatrices", "LocalIterate",
    "NoiseSpec", "NotPositiveDefiniteError", "ObservabilityReport",
    "ProtocolError", "RunConfig", "RunSummary", "SgpOperator",
    "SimulationResult", "StackedMaps", "SubsystemModel", "TimingReport",
    "UnknownSubsystemError", "WindowState", "assemble_composite",
    "benchmark_config", "benchmark_physical_boxes", "build_iteration_matrices",
    "build_sgp_operator", "build_stacked_maps", "check_dmhe2_convergence",
    "check_dmhe2_stability", "check_error_stability",
    "check_iteration_convergence", "check_observability",
    "cmhe_solve_constrained", "cmhe_solve_unconstrained", "column_block",
    "compute_prior", "condition_report", "config_from_dict",
    "derive_composites", "error_dynamics_matrix", "evaluate_objective",
    "global_iteration_step", "horizon_sweep", "initial_iterates",
    "load_benchmark", "load_model", "load_run_config", "local_qp_solve",
    "local_update", "monte_carlo", "noise_sweep", "project_box", "rmse_at",
    "row_block",
    "run_instant", "run_trajectory", "scale", "simulate", "single_run",
    "solve_box_qp", "spectral_radius", "stack_iterates", "timing_report",
    "unscale", "unstack_iterates",
]
