"""Plane-wave UWVF (ultra weak variational formulation) solver for time-harmonic Maxwell."""

from .assembly import (
    AssembledSystem,
    AssemblyError,
    BoundaryCondition,
    TIPDGParams,
    assemble_system,
    assemble_tipdg,
    make_bases,
)
from .estimator import TrefftzIPDGMaxwell, UWVFMaxwell
from .mesh import MaterialTable, Mesh, generate_cube_mesh, load_mesh, write_mesh
from .planewave import DirectionSet, LocalBasis, hammersley_sphere
from .postprocess import ExactSolution, error_norms, manufactured_data, reconstruct_field
from .solve import SolverConfig, adapt_directions, solve_bicgstab, solve_stationary

__version__ = "0.1.0"

__all__ = [
    "AssembledSystem",
    "AssemblyError",
    "BoundaryCondition",
    "DirectionSet",
    "ExactSolution",
    "LocalBasis",
    "MaterialTable",
    "Mesh",
    "SolverConfig",
    "TIPDGParams",
    "TrefftzIPDGMaxwell",
    "UWVFMaxwell",
    "adapt_directions",
    "assemble_system",
    "assemble_tipdg",
    "error_norms",
    "generate_cube_mesh",
    "hammersley_sphere",
    "load_mesh",
    "make_bases",
    "manufactured_data",
    "reconstruct_field",
    "solve_bicgstab",
    "solve_stationary",
    "write_mesh",
]
