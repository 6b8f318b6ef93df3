"""Classical desk-scale pipeline for dissipative linear ODEs solved as all-at-once linear systems."""

from .analysis import ComplexityReport, cost_model, optimal_padding, state_error_final, state_error_history
from .block_system import AllAtOnceSystem, assemble, forward_solve, kappa_bound, kappa_exact
from .ode_model import DissipativeOdeProblem, make_heat_problem, make_non_hermitian_problem, make_problem
from .schemes import SchemeKind, Task, select_step, step_operators
from .solution import SolutionBundle

__version__ = "0.1.0"

__all__ = [
    "AllAtOnceSystem",
    "ComplexityReport",
    "DissipativeOdeProblem",
    "SchemeKind",
    "SolutionBundle",
    "Task",
    "assemble",
    "cost_model",
    "forward_solve",
    "kappa_bound",
    "kappa_exact",
    "make_heat_problem",
    "make_non_hermitian_problem",
    "make_problem",
    "optimal_padding",
    "select_step",
    "state_error_final",
    "state_error_history",
    "step_operators",
]
