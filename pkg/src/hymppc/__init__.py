"""Continuous-time MPC for affine hybrid systems.

The library solves the sequence-conditioned optimal control problem in
closed form (linear algebra plus a small root-find over the jump times) and
searches the discrete sequences by branch and bound.
"""

from .errors import (Exhausted, HymppcError, IntegrationFailure,
                     IterationLimit, NoRoot, OrderViolation, SingularSystem,
                     ZenoSuspect)
from .execution import (AdmissibilityReport, CostBreakdown, Execution,
                        check_execution, execution_cost, execution_summary,
                        write_summary_json, write_trace_csv)
from .model import (AffineHybridModel, AffineMode, AffineTransition, ModeCost,
                    Polyhedron, ValidationReport, benchmark_path,
                    load_benchmark, load_model, model_from_dict, validate)
from .mpc import (CandidateNode, ClosedLoopTrace, MpcLimits, MpcResult,
                  closed_loop_run, iteration_bound, mpc_step)
from .sim import Simulator, SimulatorState, simulate, step
from .solver import (FixedHorizon, FreeFinal, SolverOptions, SolverSolution,
                     SolverUnknowns, assemble, assemble_and_solve,
                     build_execution, extended_matrix, ft_jacobian,
                     gap_residual, hamiltonian, hamiltonian_gap, jpmpa, jpmpb,
                     optimal_control, solution_residuals, solve_jump_times,
                     system_dimension, transition_map)

__version__ = "0.1.0"
