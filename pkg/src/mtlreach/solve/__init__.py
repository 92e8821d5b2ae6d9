from .bnb import BudgetError, SolveReport, assignment_count, propagate, solve_bnb, solve_bruteforce
from .miqp import AssemblyError, Miqp, PlanSolution, PlanValidationError, assemble, decode, lifted_cost, validate_plan
from .mps import MpsError, export_mip, mps_text, read_mps

__all__ = [
    "AssemblyError",
    "BudgetError",
    "Miqp",
    "MpsError",
    "PlanSolution",
    "PlanValidationError",
    "SolveReport",
    "assemble",
    "assignment_count",
    "decode",
    "export_mip",
    "lifted_cost",
    "mps_text",
    "propagate",
    "read_mps",
    "solve_bnb",
    "solve_bruteforce",
    "validate_plan",
]
