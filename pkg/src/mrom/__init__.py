"""Meshless SPH solver with reference-space projection model-order reduction."""

from mrom.kernel import WendlandC2
from mrom.domain import Geometry, ParticleSystem, CellGrid, build_cells, neighbors, generate_ghosts
from mrom.sph import FluidModel, FomSolver
from mrom.reference import ReferenceSpace, SnapshotMatrix, TrialBasis, pod
from mrom.spline import SplineBasis, build_spline_basis
from mrom.rom import ApgConfig, RomSolver, RomState, project_apg, project_gpod, select_local_basis
from mrom.metrics import relative_discrepancy

__all__ = [
    "WendlandC2",
    "Geometry",
    "ParticleSystem",
    "CellGrid",
    "build_cells",
    "neighbors",
    "generate_ghosts",
    "FluidModel",
    "FomSolver",
    "ReferenceSpace",
    "SnapshotMatrix",
    "TrialBasis",
    "pod",
    "SplineBasis",
    "build_spline_basis",
    "ApgConfig",
    "RomSolver",
    "RomState",
    "project_apg",
    "project_gpod",
    "select_local_basis",
    "relative_discrepancy",
]

__version__ = "0.1.0"
