"""Lowest-order mixed virtual element method for the Laplace eigenproblem."""

from .analysis import (convergence_study, detect_spurious, exact_spectrum, extrapolate, fit_order,
                       stabilization_sweep)
from .assembly import DofMap, GlobalPencil, NumericalError, assemble, solve_source
from .eigensolver import EigenResult, PositivityError, SolveOptions, eigenpair_residual, solve_eigen
from .mesh import (BcSpec, Domain, MeshError, MeshFamily, PolygonalMesh, cell_geometry, generate,
                   quality, read_mesh, tag_boundary, write_mesh)
from .vem import interpolate, local_forms, project_scalar_p0, projector

__all__ = [
    "BcSpec", "Domain", "DofMap", "EigenResult", "GlobalPencil", "MeshError", "MeshFamily",
    "NumericalError", "PolygonalMesh", "PositivityError", "SolveOptions", "assemble", "cell_geometry",
    "convergence_study", "detect_spurious", "eigenpair_residual", "exact_spectrum", "extrapolate",
    "fit_order", "generate", "interpolate", "local_forms", "project_scalar_p0", "projector", "quality",
    "read_mesh", "solve_eigen", "solve_source", "stabilization_sweep", "tag_boundary", "write_mesh",
]
