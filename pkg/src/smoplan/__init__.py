"""Dual SVM training by pairwise decomposition with planning-ahead step sizes.

Public surface: problem construction (Dataset, KernelSpec, make_problem),
the solvers (smo_solve, pa_solve and variants), the small-instance reference
solver and optimality checks (oracle), and the benchmark harness (bench).
"""

from .problem import (Dataset, KernelCache, KernelSpec, TrainingProblem,
                      gram_row, kernel_eval, make_problem, objective)
from .solver import (SolveReport, SolverConfig, SolverNumericsError, SolverState,
                     StepPlan, WorkingSet, apply_step, exact_gain,
                     feasibility_violation, gain_bound, index_sets, kkt_gap,
                     newton_step, select_working_set_standard, smo_solve)
from .planning import (PaConfig, PlanContext, PlanResult, double_step_gain,
                       multi_plan, pa_solve, pa_update_step, plan_ahead,
                       run_decomposition, scaled_newton_update,
                       select_working_set_pa)
from .oracle import (KktCheck, OracleError, OracleSolution, check_gradient,
                     dense_gradient, dense_gram, dense_objective,
                     dense_reference_solve, kkt_gap_dense, verify_kkt)
from .datasets import (ParseError, format_libsvm, gen_chessboard, load_libsvm,
                       parse_libsvm, permutation_indices, permute)
from .bench import (CSV_COLUMNS, HistogramSpec, RunConfig, bench_summary,
                    build_histogram, emit_histogram, emit_report, parse_kernel,
                    run_bench, solver_config)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "KernelCache", "KernelSpec", "TrainingProblem",
    "gram_row", "kernel_eval", "make_problem", "objective",
    "SolveReport", "SolverConfig", "SolverNumericsError", "SolverState",
    "StepPlan", "WorkingSet", "apply_step", "exact_gain", "gain_bound",
    "feasibility_violation", "index_sets", "kkt_gap", "newton_step",
    "select_working_set_standard",
    "smo_solve",
    "PaConfig", "PlanContext", "PlanResult", "double_step_gain", "multi_plan",
    "pa_solve", "pa_update_step", "plan_ahead", "run_decomposition",
    "scaled_newton_update", "select_working_set_pa",
    "KktCheck", "OracleError", "OracleSolution", "check_gradient",
    "dense_gradient", "dense_gram", "dense_objective", "dense_reference_solve",
    "kkt_gap_dense", "verify_kkt",
    "ParseError", "format_libsvm", "gen_chessboard", "load_libsvm",
    "parse_libsvm", "permutation_indices", "permute",
    "CSV_COLUMNS", "HistogramSpec", "RunConfig", "bench_summary",
    "build_histogram", "emit_histogram", "emit_report", "parse_kernel",
    "run_bench", "solver_config",
    "__version__",
]
