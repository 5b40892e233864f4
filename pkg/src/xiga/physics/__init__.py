"""Thermo-elastic weak forms, solves and error norms."""

from .assembly import (Assembler, BoundaryCondition, LinearSystem, assemble, assemble_bulk, assemble_ghost,
                       assemble_nitsche_dirichlet, assemble_nitsche_interface)
from .fields import FieldSolution, FieldSpace
from .materials import MaterialPhase, WeakFormConfig, interface_penalty, interface_weights
from .norms import compute_error_norms, error_norms, interface_von_mises_error, von_mises
from .solve import StaggeredResult, SolveResult, condition_estimate, solve_staggered, solve_system

__all__ = [
    "Assembler", "BoundaryCondition", "LinearSystem", "assemble", "assemble_bulk", "assemble_ghost",
    "assemble_nitsche_dirichlet", "assemble_nitsche_interface", "FieldSolution", "FieldSpace",
    "MaterialPhase", "WeakFormConfig", "interface_penalty", "interface_weights", "compute_error_norms", "error_norms",
    "interface_von_mises_error", "von_mises", "SolveResult", "StaggeredResult", "condition_estimate", "solve_staggered", "solve_system",
]
