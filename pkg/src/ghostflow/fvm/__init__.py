from .assemble import (
    CENTRAL_LINEAR,
    UPWIND,
    UPWIND_LIMITED,
    SparseSystem,
    assemble_convection_diffusion,
    assemble_time_derivative,
)
from .flux import KnpFaces, compute_knp_faces, div_pu, kt_flux
from .linsolve import (
    LinSolveError,
    SolveReport,
    ilu_preconditioner,
    jacobi_preconditioner,
    solve_general,
    solve_spd,
)

__all__ = [
    "CENTRAL_LINEAR", "UPWIND", "UPWIND_LIMITED", "SparseSystem",
    "assemble_convection_diffusion", "assemble_time_derivative",
    "KnpFaces", "compute_knp_faces", "div_pu", "kt_flux",
    "LinSolveError", "SolveReport", "ilu_preconditioner",
    "jacobi_preconditioner", "solve_general", "solve_spd",
]
